"""
Direct and indirect blocking flow sets.

Two flows block each other directly when they transmit on a common output
port (a directed link, or the same ejection port). A direct blocker ``i``
of ``k`` only keeps ``k`` waiting until its tail has left the last router
the two flows share; with finite input buffers that happens a bounded
number of hops later. Indirect blockers are the flows that meet a direct
blocker inside that window, so larger buffers shrink the indirect set.

The buffer-unaware baseline uses the blocker's whole path instead of the
window.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .model import Flow, NetworkModel

BUFFER_AWARE = "buffer-aware"
CONVENTIONAL = "conventional"
MODES = (BUFFER_AWARE, CONVENTIONAL)


class BlockingDomainError(ValueError):
    pass


@dataclass(frozen=True)
class Subpath:
    """Slice ``owner.path[start..end]`` (both ends inclusive)."""

    owner: str
    start: int
    end: int
    routers: tuple[str, ...]
    # output ports used between consecutive routers of the slice
    links: frozenset[tuple[str, str]]

    def __str__(self) -> str:
        return "->".join(self.routers)


def whole_path(flow: Flow) -> Subpath:
    return Subpath(flow.id, 0, len(flow.path) - 1, flow.routers, flow.links)


def _slice(flow: Flow, start: int, end: int) -> Subpath:
    hops = flow.path[start:end + 1]
    links = frozenset((h.router, h.out_port) for h in flow.path[start:end])
    return Subpath(flow.id, start, end, tuple(h.router for h in hops), links)


def hops(length: float, buffer: float) -> int:
    """Routers a packet of ``length`` bytes spans when every input buffer
    holds ``buffer`` bytes (ceiling of the ratio)."""
    if buffer < 1:
        raise ValueError(f"buffer must be at least 1 byte, got {buffer}")
    q = Fraction(length) / Fraction(buffer)
    return int(-(-q.numerator // q.denominator))


def direct_blocking_set(k: Flow, flows: Iterable[Flow],
                        universe: frozenset[str] | None = None) -> tuple[str, ...]:
    """Flows other than ``k`` sharing at least one output port with it."""
    mine = k.links
    return tuple(f.id for f in flows
                 if f.id != k.id and (universe is None or f.id in universe)
                 and not mine.isdisjoint(f.links))


def last_shared_index(i: Flow, k: Flow) -> int:
    nodes = set(k.routers)
    last = -1
    for n, r in enumerate(i.routers):
        if r in nodes:
            last = n
    return last


def divergence_index(model: NetworkModel, i: Flow, last: int) -> int:
    """First index past ``last`` by which the input buffers downstream can
    hold the whole packet of ``i``; clamped to the end of its path."""
    need = Fraction(i.length)
    held = Fraction(0)
    end = len(i.path) - 1
    n = last
    while n < end and held < need:
        n += 1
        hop = i.path[n]
        held += Fraction(model.buffer_at(hop.router, hop.in_port))
    return n


def subpath(model: NetworkModel, i: Flow, k: Flow) -> Subpath:
    """Portion of ``i``'s path, from its last router in common with ``k``,
    over which ``i`` can still hold ``k`` back."""
    if i.id == k.id or k.links.isdisjoint(i.links):
        raise BlockingDomainError(f"{i.id} does not directly block {k.id}")
    last = last_shared_index(i, k)
    return _slice(i, last, divergence_index(model, i, last))


@dataclass(frozen=True)
class FlowBlocking:
    flow: str
    direct: tuple[str, ...]
    map_db: dict[str, Subpath]
    indirect: tuple[str, ...]
    # candidates per indirect blocker, one per qualifying direct blocker,
    # in declaration order of the direct blockers; the delay analysis keeps
    # the worst one
    map_ib: dict[str, tuple[Subpath, ...]]


def flow_blocking(model: NetworkModel, k: Flow, flows: Sequence[Flow],
                  mode: str = BUFFER_AWARE,
                  universe: frozenset[str] | None = None) -> FlowBlocking:
    """Blocking sets of ``k`` restricted to the flows in ``universe``."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    by_id = {f.id: f for f in flows}
    direct = direct_blocking_set(k, flows, universe)
    if mode == BUFFER_AWARE:
        map_db = {l: subpath(model, by_id[l], k) for l in direct}
    else:
        map_db = {l: whole_path(by_id[l]) for l in direct}

    excluded = set(direct) | {k.id}
    indirect: list[str] = []
    map_ib: dict[str, tuple[Subpath, ...]] = {}
    for f in flows:
        if f.id in excluded or (universe is not None and f.id not in universe):
            continue
        via = [l for l in direct if not f.links.isdisjoint(map_db[l].links)]
        if not via:
            continue
        indirect.append(f.id)
        if mode == BUFFER_AWARE:
            map_ib[f.id] = tuple(subpath(model, f, by_id[l]) for l in via)
        else:
            map_ib[f.id] = (whole_path(f),)
    return FlowBlocking(k.id, direct, map_db, tuple(indirect), map_ib)


def indirect_blocking_set(model: NetworkModel, k: Flow, flows: Sequence[Flow],
                          universe: frozenset[str] | None = None) -> tuple[str, ...]:
    return flow_blocking(model, k, flows, BUFFER_AWARE, universe).indirect


def conventional_indirect_set(k: Flow, flows: Sequence[Flow],
                              universe: frozenset[str] | None = None) -> tuple[str, ...]:
    """Flows meeting a direct blocker of ``k`` anywhere on its path."""
    by_id = {f.id: f for f in flows}
    direct = direct_blocking_set(k, flows, universe)
    excluded = set(direct) | {k.id}
    return tuple(
        f.id for f in flows
        if f.id not in excluded and (universe is None or f.id in universe)
        and any(not f.links.isdisjoint(by_id[l].links) for l in direct)
    )


@dataclass(frozen=True)
class BlockingReport:
    mode: str
    buffer: float
    flows: dict[str, FlowBlocking]

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "buffer": self.buffer,
            "flows": {
                fid: {
                    "direct": list(b.direct),
                    "map_db": {l: list(s.routers) for l, s in b.map_db.items()},
                    "indirect": list(b.indirect),
                    "map_ib": {i: [list(s.routers) for s in cands]
                               for i, cands in b.map_ib.items()},
                }
                for fid, b in self.flows.items()
            },
        }


def blocking_report(model: NetworkModel, flows: Sequence[Flow],
                    mode: str = BUFFER_AWARE) -> BlockingReport:
    return BlockingReport(mode, model.buffer,
                          {k.id: flow_blocking(model, k, flows, mode) for k in flows})
