"""
End-to-end delay bounds for wormhole flows.

Per router, each input-port aggregate gets a rate-proportional share of the
output link, delayed by the head-of-line time of co-buffered flows bound
for other outputs. Output ports are granted per packet, so unless the fluid
model is requested the share also starts only after the longest packet of
another input aggregate has left. A flow's own service is what remains after the other
members of its aggregate. Bursts are propagated hop by hop, the per-router
services are concatenated, and the delay bound is the horizontal deviation
from the source envelope. Indirect blocking is added on top by the
recursive procedure in :meth:`Analyzer.indirect_delay`.
"""

from __future__ import annotations

import graphlib
from dataclasses import dataclass, field
from typing import Sequence

from .blocking import BUFFER_AWARE, MODES, Subpath, flow_blocking, whole_path
from .minplus import (
    ArrivalCurve,
    InstabilityError,
    ServiceCurve,
    convolve_all,
    deconvolve,
    delay_shift,
    hdev,
    residual_blind,
    sum_arrivals,
)
from .model import (
    Flow,
    NetworkModel,
    aggregate_rates,
    arrival_curve,
    dependency_graph,
    port_maps,
    validate,
)

SCHEDULABLE = "schedulable"
NOT_SCHEDULABLE = "not-schedulable"
UNSTABLE = "unstable"


class CyclicDependencyError(RuntimeError):
    """Burst propagation has no feed-forward order."""


@dataclass(frozen=True)
class FlowResult:
    flow: str
    d_tr: float
    d_db: float | None
    d_ib: float | None
    d_eed: float | None
    deadline: float
    verdict: str
    bursts: tuple[float, ...] = ()
    reason: str = ""

    @property
    def d_b(self) -> float | None:
        """Blocking share of the bound beyond the contention-free delay."""
        return None if self.d_eed is None else self.d_eed - self.d_tr

    def to_dict(self) -> dict:
        return {
            "flow": self.flow,
            "d_tr": self.d_tr,
            "d_db": self.d_db,
            "d_ib": self.d_ib,
            "d_eed": self.d_eed,
            "d_b": self.d_b,
            "deadline": self.deadline,
            "verdict": self.verdict,
            "bursts": list(self.bursts),
            "reason": self.reason,
        }


def transit_delay(model: NetworkModel, flow: Flow) -> float:
    """Contention-free latency: serialization plus one relay per router."""
    return flow.length / model.capacity + len(flow.path) * model.epsilon


@dataclass
class _Recursion:
    """Bookkeeping for one evaluation of the indirect-blocking recursion."""

    model: NetworkModel
    mode: str
    memo: dict = field(default_factory=dict)
    max_depth: int = 0


class Analyzer:
    """Buffer-independent state of the analysis for one model.

    Router services, burst traces and full-path direct-blocking bounds do
    not depend on the buffer size, so they are computed once here; only the
    indirect-blocking term is re-evaluated per buffer size and mode.
    """

    def __init__(self, model: NetworkModel, flows: Sequence[Flow], *, fluid: bool = False):
        self.model = model
        self.fluid = fluid
        self.flows = list(flows)
        self.by_id = {f.id: f for f in self.flows}
        self.maps = port_maps(model, self.flows)
        self.report = validate(model, self.flows)
        self._direct = {k.id: set(flow_blocking(model, k, self.flows).direct)
                        for k in self.flows}
        self._arrivals: dict[tuple[str, int], ArrivalCurve] = {}
        self._services: dict[tuple[str, int], ServiceCurve] = {}
        self._failures: dict[str, str] = {}
        self._overloaded = self.report.unstable_ports()
        self._propagate()

    # --- per-router service ------------------------------------------------

    def aggregate_service(self, router: str, out_port: str, in_port: str) -> ServiceCurve:
        rates = aggregate_rates(self.maps, self.by_id, router, out_port)
        total = sum(rates.values())
        if in_port not in rates or total <= 0:
            raise ValueError(f"no traffic from {router}:{in_port} to {out_port}")
        share = rates[in_port] / total
        return ServiceCurve(share * self.model.capacity, self.model.epsilon)

    def arrival_at(self, flow_id: str, n: int) -> ArrivalCurve:
        """Envelope of a flow entering the n-th router of its path."""
        try:
            return self._arrivals[(flow_id, n)]
        except KeyError:
            pass
        if flow_id in self._failures:
            raise InstabilityError(self._failures[flow_id])
        raise RuntimeError(f"burst of {flow_id} at hop {n} not yet known")

    def demux_delay(self, router: str, flow_id: str) -> float:
        k = self.by_id[flow_id]
        p = self.maps.in_port(flow_id, router)
        o = self.maps.out_port(flow_id, router)
        total = 0.0
        for l, members in self.maps.co_buffered(router, p).items():
            if l == o:
                continue
            for j in members:
                if j in self._direct[k.id]:
                    total += self.arrival_at(j, self.by_id[j].index_of(router)).burst
        return total / self.model.capacity

    def nonpreemption_delay(self, router: str, flow_id: str) -> float:
        """Longest packet of another input aggregate at the same output: it
        may have just been granted the port when ``flow_id`` arrives."""
        if self.fluid:
            return 0.0
        p = self.maps.in_port(flow_id, router)
        o = self.maps.out_port(flow_id, router)
        longest = max((self.by_id[j].length
                       for q, members in self.maps.inputs(router, o).items() if q != p
                       for j in members), default=0.0)
        return longest / self.model.capacity

    def router_service(self, router: str, flow_id: str) -> ServiceCurve:
        p = self.maps.in_port(flow_id, router)
        o = self.maps.out_port(flow_id, router)
        # one Dirac carries both head-of-line terms
        shifted = delay_shift(self.aggregate_service(router, o, p),
                              self.demux_delay(router, flow_id)
                              + self.nonpreemption_delay(router, flow_id))
        others = [self.arrival_at(j, self.by_id[j].index_of(router))
                  for j in self.maps.aggregate(router, o, p) if j != flow_id]
        try:
            return residual_blind(shifted, sum_arrivals(others))
        except InstabilityError as exc:
            raise InstabilityError(f"{flow_id} at {router}: {exc}") from None

    def _propagate(self) -> None:
        graph = dependency_graph(self.flows, self.maps)
        try:
            order = list(graphlib.TopologicalSorter(graph).static_order())
        except graphlib.CycleError as exc:
            cycle = " -> ".join(f"{f}@{n}" for f, n in exc.args[1])
            raise CyclicDependencyError(f"burst propagation is cyclic: {cycle}") from None

        def step(fid: str, n: int) -> None:
            k = self.by_id[fid]
            if n == 0:
                self._arrivals[(fid, 0)] = arrival_curve(k)
                return
            service = self._service(fid, n - 1)
            self._arrivals[(fid, n)] = deconvolve(self._arrivals[(fid, n - 1)], service)

        for fid, n in order:
            if fid in self._failures:
                continue
            try:
                step(fid, n)
            except InstabilityError as exc:
                self._failures[fid] = str(exc)
        for f in self.flows:
            if f.id not in self._failures:
                try:
                    self._service(f.id, len(f.path) - 1)
                except InstabilityError as exc:
                    self._failures[f.id] = str(exc)

    def _service(self, fid: str, n: int) -> ServiceCurve:
        key = (fid, n)
        if key not in self._services:
            hop = self.by_id[fid].path[n]
            if (hop.router, hop.out_port) in self._overloaded:
                raise InstabilityError(f"{fid}: output {hop.router}:{hop.out_port} "
                                       f"violates the stability conditions")
            self._services[key] = self.router_service(hop.router, fid)
        return self._services[key]

    # --- delay bounds -----------------------------------------------------

    def bursts(self, flow_id: str) -> tuple[float, ...]:
        f = self.by_id[flow_id]
        return tuple(self.arrival_at(flow_id, n).burst for n in range(len(f.path)))

    def e2e_service(self, flow_id: str, segment: Subpath | None = None) -> ServiceCurve:
        f = self.by_id[flow_id]
        seg = segment or whole_path(f)
        if seg.owner != flow_id:
            raise ValueError(f"segment belongs to {seg.owner}, not {flow_id}")
        if flow_id in self._failures:
            raise InstabilityError(self._failures[flow_id])
        return convolve_all(self._services[(flow_id, n)]
                            for n in range(seg.start, seg.end + 1))

    def direct_delay(self, flow_id: str, segment: Subpath | None = None) -> float:
        """Transmission plus direct blocking over ``segment`` (default: the
        whole path), starting from the envelope at the segment's first router."""
        f = self.by_id[flow_id]
        seg = segment or whole_path(f)
        return hdev(self.arrival_at(flow_id, seg.start), self.e2e_service(flow_id, seg))

    def indirect_delay(self, flow_id: str, mode: str = BUFFER_AWARE,
                       buffer: float | None = None) -> float:
        rec = _Recursion(self._model_for(buffer), mode)
        return self._indirect(rec, flow_id, frozenset(self.by_id), 1)

    def indirect_delay_with_depth(self, flow_id: str, mode: str = BUFFER_AWARE,
                                  buffer: float | None = None) -> tuple[float, int]:
        rec = _Recursion(self._model_for(buffer), mode)
        value = self._indirect(rec, flow_id, frozenset(self.by_id), 1)
        return value, rec.max_depth

    def _model_for(self, buffer: float | None) -> NetworkModel:
        return self.model if buffer is None else self.model.with_buffer(buffer)

    def _indirect(self, rec: _Recursion, flow_id: str, universe: frozenset[str],
                  depth: int) -> float:
        key = (flow_id, universe)
        if key in rec.memo:
            return rec.memo[key]
        rec.max_depth = max(rec.max_depth, depth)
        b = flow_blocking(rec.model, self.by_id[flow_id], self.flows, rec.mode, universe)
        rest = universe - set(b.direct)
        if not rest or not b.indirect:
            rec.memo[key] = 0.0
            return 0.0
        total = 0.0
        for i in b.indirect:
            # several direct blockers may expose i; keep the worst window
            total += max(self.direct_delay(i, seg) for seg in b.map_ib[i])
            total += self._indirect(rec, i, rest, depth + 1)
        rec.memo[key] = total
        return total

    # --- whole-network evaluation ----------------------------------------

    def analyze(self, mode: str = BUFFER_AWARE, buffer: float | None = None) -> list[FlowResult]:
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        results = []
        for f in self.flows:
            d_tr = transit_delay(self.model, f)
            try:
                d_db = self.direct_delay(f.id)
                d_ib = self.indirect_delay(f.id, mode, buffer)
            except InstabilityError as exc:
                results.append(FlowResult(f.id, d_tr, None, None, None, f.deadline,
                                          UNSTABLE, reason=str(exc)))
                continue
            d_eed = d_db + d_ib
            verdict = SCHEDULABLE if d_eed <= f.deadline else NOT_SCHEDULABLE
            results.append(FlowResult(f.id, d_tr, d_db, d_ib, d_eed, f.deadline,
                                      verdict, self.bursts(f.id)))
        return results


def analyze_all(model: NetworkModel, flows: Sequence[Flow], mode: str = BUFFER_AWARE,
                buffer: float | None = None, *, fluid: bool = False) -> list[FlowResult]:
    return Analyzer(model, flows, fluid=fluid).analyze(mode, buffer)
