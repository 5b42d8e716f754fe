"""
Network and traffic model: routers, directed links, flows with static paths,
JSON ingestion, stability validation and per-router port maps.
"""

from __future__ import annotations

import graphlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable

from .minplus import ArrivalCurve

SCHEMA_VERSION = 1

# marks an injection channel in Flow.links
INJECTION_PREFIX = "inject:"


class ConfigError(ValueError):
    """A configuration document that cannot be turned into a model."""

    def __init__(self, where: str, message: str):
        self.where = where
        self.message = message
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class Link:
    src: str
    src_port: str
    dst: str
    dst_port: str


@dataclass(frozen=True)
class Hop:
    router: str
    in_port: str
    out_port: str


@dataclass(frozen=True)
class Router:
    id: str
    ports: tuple[str, ...]
    # per-input-port buffer size overrides, bytes
    buffers: tuple[tuple[str, float], ...] = ()


@dataclass(frozen=True)
class Flow:
    id: str
    period: float
    deadline: float
    length: float
    jitter: float
    path: tuple[Hop, ...]

    @property
    def rate(self) -> float:
        return self.length / self.period

    @property
    def routers(self) -> tuple[str, ...]:
        return tuple(h.router for h in self.path)

    @property
    def links(self) -> frozenset[tuple[str, str]]:
        """Channels the flow transmits on: every output port as (router,
        out_port), plus the injection channel into its first router. Flows
        injected through the same port contend for that channel even when
        their routes never share an output."""
        first = self.path[0]
        return frozenset([(first.router, INJECTION_PREFIX + first.in_port)]
                         + [(h.router, h.out_port) for h in self.path])

    def index_of(self, router: str) -> int:
        for n, h in enumerate(self.path):
            if h.router == router:
                return n
        raise KeyError(f"flow {self.id} does not cross router {router}")


@dataclass(frozen=True)
class NetworkModel:
    capacity: float
    epsilon: float
    buffer: float
    routers: tuple[Router, ...]
    links: tuple[Link, ...]
    time_unit: str = "time unit"
    flit: float = 1.0

    def router(self, rid: str) -> Router:
        for r in self.routers:
            if r.id == rid:
                return r
        raise KeyError(rid)

    def link_from(self, router: str, port: str) -> Link | None:
        for link in self.links:
            if link.src == router and link.src_port == port:
                return link
        return None

    def buffer_at(self, router: str, in_port: str) -> float:
        for port, size in self.router(router).buffers:
            if port == in_port:
                return size
        return self.buffer

    def with_buffer(self, buffer: float) -> NetworkModel:
        """Copy with a new global buffer size; per-port overrides are kept."""
        return replace(self, buffer=buffer)


def arrival_curve(flow: Flow) -> ArrivalCurve:
    """Source envelope L + (L/T)(t + J) in affine form."""
    rate = flow.length / flow.period
    return ArrivalCurve(flow.length + rate * flow.jitter, rate)


# --- parsing ---------------------------------------------------------------

def _number(value: Any, where: str, *, minimum: float | None = None,
            strict: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(where, f"expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(where, f"expected a finite number, got {value!r}")
    if minimum is not None:
        if strict and not value > minimum:
            raise ConfigError(where, f"must be > {minimum:g}, got {value!r}")
        if not strict and value < minimum:
            raise ConfigError(where, f"must be >= {minimum:g}, got {value!r}")
    return value


def _string(value: Any, where: str) -> str:
    if not isinstance(value, str) or not value:
        raise ConfigError(where, f"expected a non-empty string, got {value!r}")
    return value


def _get(obj: Any, key: str, where: str) -> Any:
    if not isinstance(obj, dict):
        raise ConfigError(where, "expected an object")
    if key not in obj:
        raise ConfigError(f"{where}.{key}" if where else key, "missing")
    return obj[key]


def _list(value: Any, where: str) -> list:
    if not isinstance(value, list):
        raise ConfigError(where, "expected a list")
    return value


def parse_config(document: str | dict) -> tuple[NetworkModel, list[Flow]]:
    """Build a fully linked model from a JSON text or an already-decoded dict."""
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ConfigError("<document>", f"invalid JSON: {exc}") from None
    if not isinstance(document, dict):
        raise ConfigError("<document>", "top level must be an object")

    schema = document.get("schema", SCHEMA_VERSION)
    if schema != SCHEMA_VERSION:
        raise ConfigError("schema", f"unsupported schema version {schema!r}")

    net = _get(document, "network", "")
    capacity = _number(_get(net, "capacity", "network"), "network.capacity",
                       minimum=0, strict=True)
    epsilon = _number(_get(net, "epsilon", "network"), "network.epsilon", minimum=0)
    buffer = _number(_get(net, "buffer", "network"), "network.buffer",
                     minimum=0, strict=True)
    flit = _number(net.get("flit", 1), "network.flit", minimum=0, strict=True)
    time_unit = net.get("time_unit", "time unit")
    if not isinstance(time_unit, str):
        raise ConfigError("network.time_unit", "expected a string")

    routers: list[Router] = []
    seen: set[str] = set()
    for n, r in enumerate(_list(_get(net, "routers", "network"), "network.routers")):
        where = f"network.routers[{n}]"
        rid = _string(_get(r, "id", where), f"{where}.id")
        if rid in seen:
            raise ConfigError(f"{where}.id", f"duplicate router {rid!r}")
        seen.add(rid)
        ports = tuple(_string(p, f"{where}.ports[{m}]")
                      for m, p in enumerate(_list(_get(r, "ports", where), f"{where}.ports")))
        if len(set(ports)) != len(ports):
            raise ConfigError(f"{where}.ports", "duplicate port")
        overrides = []
        raw = r.get("buffers", {})
        if not isinstance(raw, dict):
            raise ConfigError(f"{where}.buffers", "expected an object")
        for port, size in raw.items():
            if port not in ports:
                raise ConfigError(f"{where}.buffers.{port}", "unknown port")
            overrides.append((port, _number(size, f"{where}.buffers.{port}",
                                            minimum=0, strict=True)))
        routers.append(Router(rid, ports, tuple(overrides)))
    ports_of = {r.id: set(r.ports) for r in routers}

    links: list[Link] = []
    sources: set[tuple[str, str]] = set()
    targets: set[tuple[str, str]] = set()
    for n, raw in enumerate(_list(_get(net, "links", "network"), "network.links")):
        where = f"network.links[{n}]"
        link = Link(*(_string(_get(raw, k, where), f"{where}.{k}")
                      for k in ("from", "from_port", "to", "to_port")))
        for rid, port, key in ((link.src, link.src_port, "from"),
                               (link.dst, link.dst_port, "to")):
            if rid not in ports_of:
                raise ConfigError(f"{where}.{key}", f"unknown router {rid!r}")
            if port not in ports_of[rid]:
                raise ConfigError(f"{where}.{key}_port",
                                  f"router {rid!r} has no port {port!r}")
        if (link.src, link.src_port) in sources:
            raise ConfigError(where, "output port already has a link")
        if (link.dst, link.dst_port) in targets:
            raise ConfigError(where, "input port already has a link")
        sources.add((link.src, link.src_port))
        targets.add((link.dst, link.dst_port))
        links.append(link)

    model = NetworkModel(capacity, epsilon, buffer, tuple(routers), tuple(links),
                         time_unit, flit)

    flows: list[Flow] = []
    flow_ids: set[str] = set()
    for n, raw in enumerate(_list(_get(document, "flows", ""), "flows")):
        where = f"flows[{n}]"
        fid = _string(_get(raw, "id", where), f"{where}.id")
        if fid in flow_ids:
            raise ConfigError(f"{where}.id", f"duplicate flow id {fid!r}")
        flow_ids.add(fid)
        period = _number(_get(raw, "period", where), f"{where}.period", minimum=0, strict=True)
        deadline = _number(_get(raw, "deadline", where), f"{where}.deadline",
                           minimum=0, strict=True)
        length = _number(_get(raw, "length", where), f"{where}.length", minimum=1)
        jitter = _number(raw.get("jitter", 0), f"{where}.jitter", minimum=0)
        hops = []
        for m, h in enumerate(_list(_get(raw, "path", where), f"{where}.path")):
            hw = f"{where}.path[{m}]"
            hop = Hop(*(_string(_get(h, k, hw), f"{hw}.{k}")
                        for k in ("router", "in_port", "out_port")))
            if hop.router not in ports_of:
                raise ConfigError(f"{hw}.router", f"unknown router {hop.router!r}")
            for k in ("in_port", "out_port"):
                if getattr(hop, k) not in ports_of[hop.router]:
                    raise ConfigError(f"{hw}.{k}", f"router {hop.router!r} has no "
                                      f"port {getattr(hop, k)!r}")
            hops.append(hop)
        _check_path(model, hops, where, targets, sources)
        flows.append(Flow(fid, period, deadline, length, jitter, tuple(hops)))
    return model, flows


def _check_path(model: NetworkModel, hops: list[Hop], where: str,
                targets: set, sources: set) -> None:
    if not hops:
        raise ConfigError(f"{where}.path", "empty path")
    visited = set()
    for m, hop in enumerate(hops):
        if hop.router in visited:
            raise ConfigError(f"{where}.path[{m}]",
                              f"router {hop.router!r} visited twice")
        visited.add(hop.router)
    if (hops[0].router, hops[0].in_port) in targets:
        raise ConfigError(f"{where}.path[0].in_port",
                          "injection port is fed by a link")
    if (hops[-1].router, hops[-1].out_port) in sources:
        raise ConfigError(f"{where}.path[{len(hops) - 1}].out_port",
                          "path ends on a linked output port")
    for m in range(len(hops) - 1):
        a, b = hops[m], hops[m + 1]
        link = model.link_from(a.router, a.out_port)
        if link is None or (link.dst, link.dst_port) != (b.router, b.in_port):
            raise ConfigError(f"{where}.path[{m + 1}]",
                              f"unconnected hop {a.router}:{a.out_port} -> "
                              f"{b.router}:{b.in_port}")


def load_config(path: str | Path) -> tuple[NetworkModel, list[Flow]]:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def dump_config(model: NetworkModel, flows: Iterable[Flow]) -> dict:
    """Canonical document for a model; ``parse_config`` inverts it."""
    routers = []
    for r in model.routers:
        entry: dict[str, Any] = {"id": r.id, "ports": list(r.ports)}
        if r.buffers:
            entry["buffers"] = dict(r.buffers)
        routers.append(entry)
    return {
        "schema": SCHEMA_VERSION,
        "network": {
            "capacity": model.capacity,
            "epsilon": model.epsilon,
            "buffer": model.buffer,
            "flit": model.flit,
            "time_unit": model.time_unit,
            "routers": routers,
            "links": [{"from": l.src, "from_port": l.src_port,
                       "to": l.dst, "to_port": l.dst_port} for l in model.links],
        },
        "flows": [
            {
                "id": f.id,
                "period": f.period,
                "deadline": f.deadline,
                "length": f.length,
                "jitter": f.jitter,
                "path": [{"router": h.router, "in_port": h.in_port,
                          "out_port": h.out_port} for h in f.path],
            }
            for f in flows
        ],
    }


# --- port maps -------------------------------------------------------------

@dataclass(frozen=True)
class PortMaps:
    """Per router: flows grouped by (output port, input port).

    ``groups[(R, l)]`` maps each input port ``p`` feeding output ``l`` of
    router ``R`` to the flows of that aggregate, in declaration order.
    """

    groups: dict[tuple[str, str], dict[str, tuple[str, ...]]]
    hops: dict[tuple[str, str], Hop] = field(repr=False)

    def in_port(self, flow_id: str, router: str) -> str:
        return self._hop(flow_id, router).in_port

    def out_port(self, flow_id: str, router: str) -> str:
        return self._hop(flow_id, router).out_port

    def _hop(self, flow_id: str, router: str) -> Hop:
        try:
            return self.hops[(flow_id, router)]
        except KeyError:
            raise KeyError(f"flow {flow_id} does not cross router {router}") from None

    def aggregate(self, router: str, out_port: str, in_port: str) -> tuple[str, ...]:
        return self.groups.get((router, out_port), {}).get(in_port, ())

    def inputs(self, router: str, out_port: str) -> dict[str, tuple[str, ...]]:
        return self.groups.get((router, out_port), {})

    def co_buffered(self, router: str, in_port: str) -> dict[str, tuple[str, ...]]:
        """Flows sharing input buffer ``in_port`` of ``router``, by output port."""
        out: dict[str, tuple[str, ...]] = {}
        for (rid, l), by_input in self.groups.items():
            if rid == router and in_port in by_input:
                out[l] = by_input[in_port]
        return out


def port_maps(model: NetworkModel, flows: Iterable[Flow]) -> PortMaps:
    flows = list(flows)
    order = {r.id: {p: n for n, p in enumerate(r.ports)} for r in model.routers}
    raw: dict[tuple[str, str], dict[str, list[str]]] = {}
    hops: dict[tuple[str, str], Hop] = {}
    for f in flows:
        for h in f.path:
            raw.setdefault((h.router, h.out_port), {}).setdefault(h.in_port, []).append(f.id)
            hops[(f.id, h.router)] = h
    groups = {}
    for key in sorted(raw, key=lambda k: (k[0], order[k[0]][k[1]])):
        by_input = raw[key]
        groups[key] = {p: tuple(by_input[p])
                       for p in sorted(by_input, key=lambda p: order[key[0]][p])}
    return PortMaps(groups, hops)


# --- validation ------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    kind: str          # utilization | weighted-share | buffer | cyclic-dependency
    where: str
    message: str
    port: tuple[str, str] | None = None   # (router, out_port) for rate violations

    def __str__(self) -> str:
        return f"[{self.kind}] {self.where}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def unstable_ports(self) -> set[tuple[str, str]]:
        """(router, out_port) pairs named by rate violations."""
        return {v.port for v in self.violations if v.port is not None}


def aggregate_rates(maps: PortMaps, flows_by_id: dict[str, Flow],
                    router: str, out_port: str) -> dict[str, float]:
    return {p: sum(flows_by_id[f].rate for f in members)
            for p, members in maps.inputs(router, out_port).items()}


def dependency_graph(flows: Iterable[Flow], maps: PortMaps) -> dict:
    """Predecessors of each (flow, hop index) in the burst propagation.

    The envelope of flow k entering hop n+1 is computed from the router
    service at hop n, which depends on the envelopes of every flow sharing
    k's input buffer there.
    """
    flows = list(flows)
    by_id = {f.id: f for f in flows}
    graph: dict[tuple[str, int], set[tuple[str, int]]] = {}
    for f in flows:
        graph.setdefault((f.id, 0), set())
        for n in range(1, len(f.path)):
            prev = f.path[n - 1]
            preds = {(f.id, n - 1)}
            for members in maps.co_buffered(prev.router, prev.in_port).values():
                for j in members:
                    if j != f.id:
                        preds.add((j, by_id[j].index_of(prev.router)))
            graph[(f.id, n)] = preds
    return graph


def validate(model: NetworkModel, flows: Iterable[Flow]) -> ValidationReport:
    flows = list(flows)
    by_id = {f.id: f for f in flows}
    maps = port_maps(model, flows)
    C = model.capacity
    found: list[Violation] = []

    for (router, out_port), by_input in maps.groups.items():
        rates = aggregate_rates(maps, by_id, router, out_port)
        total = sum(rates.values())
        if total >= C:
            found.append(Violation(
                "utilization", f"{router}:{out_port}",
                f"total rate {total:g} is not below capacity {C:g}",
                (router, out_port)))
        for p, members in by_input.items():
            share = rates[p] / total * C if total > 0 else C
            for fid in members:
                if by_id[fid].rate > share:
                    found.append(Violation(
                        "weighted-share", f"{router}:{out_port}<-{p}",
                        f"flow {fid} rate {by_id[fid].rate:g} exceeds weighted "
                        f"share {share:g}", (router, out_port)))

    if model.buffer < 1:
        found.append(Violation("buffer", "network.buffer",
                               f"buffer {model.buffer:g} is below 1 byte"))
    for r in model.routers:
        for port, size in r.buffers:
            if size < 1:
                found.append(Violation("buffer", f"{r.id}:{port}",
                                       f"buffer {size:g} is below 1 byte"))

    try:
        graphlib.TopologicalSorter(dependency_graph(flows, maps)).prepare()
    except graphlib.CycleError as exc:
        cycle = " -> ".join(f"{f}@{n}" for f, n in exc.args[1])
        found.append(Violation("cyclic-dependency", "flows",
                               f"burst propagation is not feed-forward: {cycle}"))
    return ValidationReport(tuple(found))
