"""Random wormhole instances: small meshes with XY routing."""

from __future__ import annotations

import math
import random

from wormhole_nc.model import Flow, NetworkModel, parse_config, validate

CAPACITY = 100.0
FLIT = 1.0
TICK = FLIT / CAPACITY

# direction -> (dx, dy, port name at the neighbour)
_DIRS = {"E": (1, 0, "W"), "W": (-1, 0, "E"), "N": (0, 1, "S"), "S": (0, -1, "N")}


def _rid(x: int, y: int) -> str:
    return f"r{x}{y}"


def _xy_route(src: tuple[int, int], dst: tuple[int, int]) -> list[dict]:
    x, y = src
    hops = []
    in_port = "L"
    while (x, y) != dst:
        if x != dst[0]:
            d = "E" if dst[0] > x else "W"
        else:
            d = "N" if dst[1] > y else "S"
        hops.append({"router": _rid(x, y), "in_port": in_port, "out_port": d})
        dx, dy, back = _DIRS[d]
        x, y = x + dx, y + dy
        in_port = back
    hops.append({"router": _rid(x, y), "in_port": in_port, "out_port": "L"})
    return hops


def _ticks(value: float) -> float:
    return round(value / TICK) * TICK


def mesh_document(rng: random.Random, *, max_routers: int = 12, max_flows: int = 8,
                  utilization: float | None = None, jitter: bool = True) -> dict:
    """A JSON-like document; flows are rescaled so that the busiest output
    port runs at ``utilization`` of the capacity."""
    while True:
        w = rng.randint(1, 4)
        h = rng.randint(1, max(1, max_routers // w))
        if 2 <= w * h <= max_routers:
            break
    cells = [(x, y) for x in range(w) for y in range(h)]
    routers, links = [], []
    for x, y in cells:
        ports = ["L"]
        for d, (dx, dy, back) in _DIRS.items():
            if (x + dx, y + dy) in cells:
                ports.append(d)
                links.append({"from": _rid(x, y), "from_port": d,
                              "to": _rid(x + dx, y + dy), "to_port": back})
        routers.append({"id": _rid(x, y), "ports": ports})

    nflows = rng.randint(2, max_flows)
    raw = []
    for n in range(nflows):
        src, dst = rng.sample(cells, 2)
        raw.append({"id": f"f{n + 1}", "length": rng.randint(4, 128),
                    "period": rng.uniform(1.0, 4.0), "path": _xy_route(src, dst)})

    load: dict[tuple[str, str], float] = {}
    for f in raw:
        for hop in f["path"]:
            key = (hop["router"], hop["out_port"])
            load[key] = load.get(key, 0.0) + f["length"] / f["period"]
    u = utilization if utilization is not None else rng.uniform(0.1, 0.6)
    scale = max(load.values()) / (u * CAPACITY)
    for f in raw:
        # rounding up keeps the utilization at or below the target
        f["period"] = math.ceil(f["period"] * scale / TICK) * TICK
        f["jitter"] = _ticks(rng.uniform(0, 0.3 * f["period"])) if jitter and rng.random() < 0.5 else 0.0
        f["deadline"] = f["period"]

    return {
        "schema": 1,
        "network": {
            "capacity": CAPACITY,
            "epsilon": rng.randint(1, 20) * TICK,
            "buffer": rng.choice([1, 2, 4, 8, 16, 32, 64, 128, 256]),
            "flit": FLIT,
            "time_unit": "us",
            "routers": routers,
            "links": links,
        },
        "flows": raw,
    }


def stable_instance(seed: int, **kwargs) -> tuple[dict, NetworkModel, list[Flow]]:
    """Feed-forward, stable instance drawn deterministically from ``seed``."""
    rng = random.Random(seed)
    while True:
        doc = mesh_document(rng, **kwargs)
        model, flows = parse_config(doc)
        if validate(model, flows).ok:
            return doc, model, flows


def overloaded_instance(seed: int) -> tuple[dict, NetworkModel, list[Flow]]:
    """Stable instance whose first flow is sped up until some output port
    it uses is at or above capacity."""
    rng = random.Random(seed)
    doc, _, _ = stable_instance(rng.randrange(2**31))
    f = doc["flows"][0]
    f["period"] = f["length"] / CAPACITY * rng.uniform(0.5, 1.0)
    f["deadline"] = 1e6
    model, flows = parse_config(doc)
    return doc, model, flows


def build_document(flows: list[tuple], *, capacity: float = 100.0, epsilon: float = 1.0,
                   buffer: float = 56.0, flit: float = 1.0) -> dict:
    """Document from ``(id, length, period, [routers...])`` tuples, plus an
    optional deadline and jitter. Ports are named after the neighbour they
    face and ``L`` is the local port, so links follow from the paths."""
    ports: dict[str, list[str]] = {}
    links: dict[tuple[str, str], dict] = {}
    raw = []
    for entry in flows:
        fid, length, period, routers = entry[:4]
        deadline = entry[4] if len(entry) > 4 else period
        jitter = entry[5] if len(entry) > 5 else 0.0
        path = []
        for n, r in enumerate(routers):
            ports.setdefault(r, ["L"])
            prev = routers[n - 1] if n else "L"
            nxt = routers[n + 1] if n + 1 < len(routers) else "L"
            for p in (prev, nxt):
                if p not in ports[r]:
                    ports[r].append(p)
            if n + 1 < len(routers):
                links[(r, nxt)] = {"from": r, "from_port": nxt, "to": nxt, "to_port": r}
            path.append({"router": r, "in_port": prev, "out_port": nxt})
        raw.append({"id": fid, "length": length, "period": period,
                    "deadline": deadline, "jitter": jitter, "path": path})
    return {
        "schema": 1,
        "network": {
            "capacity": capacity, "epsilon": epsilon, "buffer": buffer, "flit": flit,
            "time_unit": "ms",
            "routers": [{"id": r, "ports": p} for r, p in ports.items()],
            "links": list(links.values()),
        },
        "flows": raw,
    }
