"""
Flit-level simulator of wormhole switching, used to check that analytic
bounds are never exceeded.

Time advances in ticks of one flit transmission time (``flit_size / C``).
Each router has one FIFO input buffer per input port, sized in flits, and
no output buffering. An output port is held by one packet from its header
to its tail. Free output ports pick among the input buffers whose head flit
is a ready header for them, by smooth weighted round robin with the same
rate-proportional weights as the analysis. Every flit crosses the router
through a relay pipeline of epsilon (the link traversal is folded into
it), one flit per stage; a full pipeline or a full downstream buffer stalls
the worm. Credits come back in the same tick. A lone packet therefore takes
exactly ``L / C + n * epsilon`` whenever epsilon is at least one flit time,
whatever the buffer size.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .model import ConfigError, Flow, NetworkModel, _number, port_maps


@dataclass(frozen=True)
class SimConfig:
    model: NetworkModel
    flows: tuple[Flow, ...]
    horizon: float
    offsets: dict[str, float] = field(default_factory=dict)
    seed: int = 0
    flit_size: float | None = None
    trials: int = 1

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if any(v < 0 for v in self.offsets.values()):
            raise ValueError("offsets must be non-negative")

    @property
    def flit(self) -> float:
        return self.flit_size if self.flit_size is not None else self.model.flit


def parse_sim_section(document: dict, model: NetworkModel,
                      flows: Sequence[Flow]) -> SimConfig:
    raw = document.get("sim", {})
    if not isinstance(raw, dict):
        raise ConfigError("sim", "expected an object")
    default_horizon = 2 * max((f.period for f in flows), default=1.0)
    horizon = _number(raw.get("horizon", default_horizon), "sim.horizon",
                      minimum=0, strict=True)
    trials = raw.get("trials", 1)
    if isinstance(trials, bool) or not isinstance(trials, int) or trials < 1:
        raise ConfigError("sim.trials", f"expected a positive integer, got {trials!r}")
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("sim.seed", f"expected a non-negative integer, got {seed!r}")
    flit = _number(raw.get("flit_size", model.flit), "sim.flit_size",
                   minimum=0, strict=True)
    offsets_raw = raw.get("offsets", {})
    if not isinstance(offsets_raw, dict):
        raise ConfigError("sim.offsets", "expected an object")
    ids = {f.id for f in flows}
    offsets = {}
    for fid, value in offsets_raw.items():
        if fid not in ids:
            raise ConfigError(f"sim.offsets.{fid}", "unknown flow")
        offsets[fid] = _number(value, f"sim.offsets.{fid}", minimum=0)
    return SimConfig(model, tuple(flows), horizon, offsets, seed, flit, trials)


@dataclass
class FlowStats:
    packets: int = 0
    max_latency: float = 0.0
    total_latency: float = 0.0

    @property
    def mean_latency(self) -> float:
        return self.total_latency / self.packets if self.packets else 0.0


@dataclass
class SimReport:
    flows: dict[str, FlowStats]
    max_occupancy: dict[str, float]      # "router:in_port" -> bytes
    deadlock: bool = False
    end_time: float = 0.0
    trials: int = 1

    def to_dict(self) -> dict:
        return {
            "flows": {fid: {"packets": s.packets, "max_latency": s.max_latency,
                            "mean_latency": s.mean_latency}
                      for fid, s in self.flows.items()},
            "max_occupancy": dict(self.max_occupancy),
            "deadlock": self.deadlock,
            "end_time": self.end_time,
            "trials": self.trials,
        }


class SimulationInvariantError(AssertionError):
    pass


class _Packet:
    __slots__ = ("flow", "seq", "nflits", "release", "buffers", "outs",
                 "relay", "delivered")

    def __init__(self, flow, seq, nflits, release, buffers, outs, relay):
        self.flow = flow
        self.seq = seq
        self.nflits = nflits
        self.release = release
        self.buffers = buffers    # input buffer index per hop
        self.outs = outs          # output port index per hop
        self.relay = relay        # relay ticks per hop
        self.delivered = 0


def _pipe_delay(pkt: _Packet, n: int) -> int:
    """Ticks a flit spends in the relay pipeline of hop ``n``. One tick of
    the relay latency is spent in the next input buffer, except at the last
    router where the pipeline ends in the sink."""
    if n + 1 == len(pkt.buffers):
        return pkt.relay[n]
    return max(0, pkt.relay[n] - 1)


def _ticks(value: float, tick: float) -> int:
    q = value / tick
    r = round(q)
    if abs(q - r) <= 1e-9 * max(1.0, abs(q)):
        return int(r)
    return math.ceil(q)


def simulate(config: SimConfig, *, check_invariants: bool = False,
             max_ticks: int | None = None) -> SimReport:
    """Run one deterministic simulation of ``config``."""
    model = config.model
    flows = list(config.flows)
    tick = config.flit / model.capacity
    maps = port_maps(model, flows)
    rng = np.random.default_rng(config.seed)

    # input buffers and output ports, indexed densely
    buf_index: dict[tuple[str, str], int] = {}
    out_index: dict[tuple[str, str], int] = {}
    for f in flows:
        for h in f.path:
            buf_index.setdefault((h.router, h.in_port), len(buf_index))
            out_index.setdefault((h.router, h.out_port), len(out_index))
    buf_names = [f"{r}:{p}" for r, p in buf_index]
    capacity = [max(1, int(math.floor(model.buffer_at(r, p) / config.flit + 1e-9)))
                 for r, p in buf_index]
    nbuf, nout = len(buf_index), len(out_index)

    # input buffers feeding each output port, with round-robin weights
    feeders: list[list[int]] = [[] for _ in range(nout)]
    weights: list[dict[int, float]] = [{} for _ in range(nout)]
    for (router, out_port), by_input in maps.groups.items():
        o = out_index[(router, out_port)]
        for p, members in by_input.items():
            b = buf_index[(router, p)]
            feeders[o].append(b)
            weights[o][b] = sum(f.rate for f in flows if f.id in members)

    eps_ticks = model.epsilon / tick

    # packet releases
    releases: list[_Packet] = []
    for fi, f in enumerate(flows):
        nflits = max(1, math.ceil(f.length / config.flit - 1e-9))
        buffers = [buf_index[(h.router, h.in_port)] for h in f.path]
        outs = [out_index[(h.router, h.out_port)] for h in f.path]
        relay = [round((n + 1) * eps_ticks) - round(n * eps_ticks)
                 for n in range(len(f.path))]
        offset = config.offsets.get(f.id, 0.0)
        jitter_ticks = int(math.floor(f.jitter / tick + 1e-9))
        m = 0
        while True:
            nominal = offset + m * f.period
            if nominal >= config.horizon:
                break
            j = int(rng.integers(0, jitter_ticks + 1)) if jitter_ticks else 0
            releases.append(_Packet(fi, m, nflits, _ticks(nominal, tick) + j,
                                    buffers, outs, relay))
            m += 1
    releases.sort(key=lambda p: (p.release, p.flow, p.seq))
    pending = deque(releases)

    inj_buffers = sorted({p.buffers[0] for p in releases})
    src_queue: dict[int, deque] = {b: deque() for b in inj_buffers}
    src_sent: dict[int, int] = {b: 0 for b in inj_buffers}  # flits of head packet sent

    # relay pipeline behind each output port, sized to its depth in ticks
    pcap = [1] * nout
    for p in releases:
        for n, o in enumerate(p.outs):
            pcap[o] = max(pcap[o], _pipe_delay(p, n))

    bufs: list[deque] = [deque() for _ in range(nbuf)]   # (packet, flit idx, ready, hop)
    pipes: list[deque] = [deque() for _ in range(nout)]  # (packet, flit idx, exit, hop)
    alloc: list[_Packet | None] = [None] * nout
    alloc_src = [-1] * nout
    sent_at = [-1] * nout
    exit_at = [-1] * nout
    src_sent_at = {b: -1 for b in inj_buffers}
    cw: list[dict[int, float]] = [dict.fromkeys(feeders[o], 0.0) for o in range(nout)]
    max_occ = [0] * nbuf

    stats = [FlowStats() for _ in flows]
    injected = delivered = 0
    in_flight = 0
    t = 0
    limit = max_ticks if max_ticks is not None else (
        _ticks(config.horizon, tick) + 10 * sum(p.nflits * (len(p.buffers) + 1)
                                                + sum(p.relay) for p in releases) + 10)
    deadlock = False
    last_tick = 0

    def arbitrate(o: int) -> None:
        best, best_w = -1, 0.0
        eligible = []
        for b in feeders[o]:
            q = bufs[b]
            if not q:
                continue
            pkt, idx, ready, n = q[0]
            if idx == 0 and ready <= t and pkt.outs[n] == o:
                eligible.append(b)
        if not eligible:
            return
        total = 0.0
        w = weights[o]
        c = cw[o]
        for b in eligible:
            c[b] += w[b]
            total += w[b]
            if best < 0 or c[b] > best_w:
                best, best_w = b, c[b]
        c[best] -= total
        alloc[o] = bufs[best][0][0]
        alloc_src[o] = best

    while pending or in_flight or any(src_queue[b] for b in inj_buffers):
        if t > limit:
            deadlock = True
            break
        while pending and pending[0].release <= t:
            pkt = pending.popleft()
            src_queue[pkt.buffers[0]].append(pkt)

        moved_any = False
        again = True
        # repeat until nothing moves: slots freed late in a pass are reused
        # in the same tick, and zero-depth pipelines pass flits straight on
        while again:
            again = False
            # relay pipelines into the next input buffer or the sink
            for o in range(nout):
                pipe = pipes[o]
                if not pipe or exit_at[o] == t:
                    continue
                pkt, idx, ready, n = pipe[0]
                if ready > t:
                    continue
                if n + 1 < len(pkt.buffers):
                    nb = pkt.buffers[n + 1]
                    dst = bufs[nb]
                    if len(dst) >= capacity[nb]:
                        continue
                    pipe.popleft()
                    dst.append((pkt, idx, t + 1, n + 1))
                    if len(dst) > max_occ[nb]:
                        max_occ[nb] = len(dst)
                else:
                    pipe.popleft()
                    in_flight -= 1
                    delivered += 1
                    if check_invariants and idx != pkt.delivered:
                        raise SimulationInvariantError(
                            f"flit {idx} of {flows[pkt.flow].id}#{pkt.seq} out of order")
                    pkt.delivered += 1
                    if idx + 1 == pkt.nflits:
                        s = stats[pkt.flow]
                        latency = (t - pkt.release) * tick
                        s.packets += 1
                        s.total_latency += latency
                        if latency > s.max_latency:
                            s.max_latency = latency
                        last_tick = t
                exit_at[o] = t
                moved_any = again = True
            # sources
            for b in inj_buffers:
                q = src_queue[b]
                if not q or src_sent_at[b] == t or len(bufs[b]) >= capacity[b]:
                    continue
                pkt = q[0]
                idx = src_sent[b]
                bufs[b].append((pkt, idx, t + 1, 0))
                src_sent_at[b] = t
                injected += 1
                in_flight += 1
                if len(bufs[b]) > max_occ[b]:
                    max_occ[b] = len(bufs[b])
                if idx + 1 == pkt.nflits:
                    q.popleft()
                    src_sent[b] = 0
                else:
                    src_sent[b] = idx + 1
                moved_any = again = True
            # switch: input buffer head into the allocated output's pipeline
            for o in range(nout):
                if sent_at[o] == t or len(pipes[o]) >= pcap[o]:
                    continue
                if alloc[o] is None:
                    arbitrate(o)
                    if alloc[o] is None:
                        continue
                pkt = alloc[o]
                src = bufs[alloc_src[o]]
                if not src:
                    continue
                fp, idx, ready, n = src[0]
                if fp is not pkt or ready > t:
                    continue
                src.popleft()
                pipes[o].append((pkt, idx, t + _pipe_delay(pkt, n), n))
                sent_at[o] = t
                if idx + 1 == pkt.nflits:
                    alloc[o] = None
                moved_any = again = True

        if check_invariants:
            held = sum(len(q) for q in bufs) + sum(len(q) for q in pipes)
            if injected != delivered + held or held != in_flight:
                raise SimulationInvariantError(
                    f"flit conservation broken at tick {t}: injected {injected}, "
                    f"delivered {delivered}, held {held}")
            for b in range(nbuf):
                if len(bufs[b]) > capacity[b]:
                    raise SimulationInvariantError(f"buffer {buf_names[b]} overflow")

        if moved_any:
            t += 1
            continue
        # nothing can move now: jump to the next time something becomes ready
        upcoming = []
        if pending:
            upcoming.append(pending[0].release)
        for q in bufs:
            if q and q[0][2] > t:
                upcoming.append(q[0][2])
        for q in pipes:
            if q and q[0][2] > t:
                upcoming.append(q[0][2])
        if not upcoming:
            if in_flight or any(src_queue[b] for b in inj_buffers):
                deadlock = True
                break
            continue
        t = max(t + 1, min(upcoming))

    return SimReport(
        flows={f.id: stats[i] for i, f in enumerate(flows)},
        max_occupancy={buf_names[b]: max_occ[b] * config.flit for b in range(nbuf)},
        deadlock=deadlock,
        end_time=last_tick * tick,
    )


def _merge(into: SimReport, other: SimReport) -> SimReport:
    flows = {}
    for fid, s in into.flows.items():
        o = other.flows[fid]
        flows[fid] = FlowStats(s.packets + o.packets, max(s.max_latency, o.max_latency),
                               s.total_latency + o.total_latency)
    occ = {k: max(v, other.max_occupancy.get(k, 0)) for k, v in into.max_occupancy.items()}
    return SimReport(flows, occ, into.deadlock or other.deadlock,
                     max(into.end_time, other.end_time), into.trials + other.trials)


def trial_configs(config: SimConfig, trials: int, seed: int) -> list[SimConfig]:
    """Trial 0 is ``config`` itself; later trials draw release offsets in
    ``[0, T)`` and a jitter seed from ``seed``. Trial i does not depend on
    the total number of trials."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    tick = config.flit / config.model.capacity
    rng = np.random.default_rng(seed)
    out = [config]
    for _ in range(trials - 1):
        offsets = {}
        for f in config.flows:
            span = max(1, int(f.period / tick))
            offsets[f.id] = int(rng.integers(0, span)) * tick
        out.append(replace(config, offsets=offsets,
                           seed=int(rng.integers(0, 2**31 - 1))))
    return out


def sweep_offsets(config: SimConfig, trials: int, seed: int, *,
                  workers: int = 1, check_invariants: bool = False) -> SimReport:
    """Worst case over ``trials`` simulations with randomized release offsets."""
    configs = trial_configs(config, trials, seed)
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(workers) as pool:
            reports = list(pool.map(simulate, configs))
    else:
        reports = [simulate(c, check_invariants=check_invariants) for c in configs]
    worst = reports[0]
    for r in reports[1:]:
        worst = _merge(worst, r)
    return worst


def exceeds_bound(observed: float, bound: float) -> bool:
    """True when a simulated latency beats an analytic bound by more than
    floating-point noise (latencies are tick counts times a float tick)."""
    return observed > bound * (1 + 1e-9) + 1e-12
