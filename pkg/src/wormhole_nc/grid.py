"""
Brute-force min-plus operations on sampled curves.

This is an independent cross-check of the closed forms in
:mod:`wormhole_nc.minplus`: curves are sampled on a uniform grid and every
operation is evaluated from its infimum/supremum definition. Nothing in the
analysis path calls into this module.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .minplus import ArrivalCurve, ServiceCurve

Curve = Union[ArrivalCurve, ServiceCurve]


class OracleHorizonError(ValueError):
    """The sampling horizon does not cover the region the operation needs."""


@dataclass(frozen=True)
class SampledCurve:
    step: float
    values: np.ndarray

    def __post_init__(self):
        v = self.values
        if self.step <= 0:
            raise ValueError("step must be positive")
        if len(v) == 0 or v[0] < 0 or np.any(np.diff(v) < -1e-9):
            raise ValueError("sampled curve must be non-negative and non-decreasing")

    @property
    def horizon(self) -> float:
        return self.step * (len(self.values) - 1)

    def times(self) -> np.ndarray:
        return np.arange(len(self.values)) * self.step


def sample(curve: Curve, step: float, horizon: float) -> SampledCurve:
    n = int(round(horizon / step)) + 1
    t = np.arange(n) * step
    if isinstance(curve, ArrivalCurve):
        values = curve.burst + curve.rate * t
    else:
        values = curve.rate * np.maximum(0.0, t - curve.latency)
    return SampledCurve(step, values)


def required_horizon(curves: Sequence[Curve]) -> float:
    arrivals = [c for c in curves if isinstance(c, ArrivalCurve)]
    services = [c for c in curves if isinstance(c, ServiceCurve)]
    latency = sum(s.latency for s in services)
    burst = sum(a.burst for a in arrivals)
    rate = min((s.rate for s in services), default=1.0)
    return 2.0 * (latency + burst / rate)


# --- brute-force primitives over samples ---------------------------------

def conv_samples(f: SampledCurve, g: SampledCurve) -> SampledCurve:
    """(f ⊗ g)[n] = min over m <= n of f[m] + g[n - m]."""
    if f.step != g.step:
        raise ValueError("grids differ")
    n = min(len(f.values), len(g.values))
    fv, gv = f.values[:n], g.values[:n]
    out = np.empty(n)
    for i in range(n):
        out[i] = np.min(fv[: i + 1] + gv[i::-1])
    return SampledCurve(f.step, out)


def deconv_at(f: SampledCurve, g: SampledCurve, index: int) -> float:
    """(f ⊘ g)[index] = max over u of f[index + u] - g[u]."""
    m = len(f.values) - index
    if m <= 0:
        raise OracleHorizonError("evaluation point beyond horizon")
    m = min(m, len(g.values))
    return float(np.max(f.values[index : index + m] - g.values[:m]))


def hdev_samples(f: SampledCurve, g: SampledCurve) -> float:
    """max over t of min{d >= 0 : g(t + d) >= f(t)}, scanned on the grid.

    Only the first half of the grid is scanned for ``t`` so that the answer
    for every scanned point lies inside the horizon."""
    half = len(f.values) // 2 + 1
    levels = f.values[:half]
    j = np.searchsorted(g.values, levels - 1e-12, side="left")
    if np.any(j >= len(g.values)):
        raise OracleHorizonError(
            f"service never reaches {levels.max():g} within horizon {g.horizon:g}"
        )
    gaps = j - np.arange(half)
    return float(max(0, gaps.max())) * f.step


def vdev_samples(f: SampledCurve, g: SampledCurve) -> float:
    n = min(len(f.values), len(g.values))
    return float(np.max(f.values[:n] - g.values[:n]))


def positive_part_diff(g: SampledCurve, f: SampledCurve) -> SampledCurve:
    """Pointwise (g - f)^+, made non-decreasing by a running maximum (the
    non-decreasing closure is what a service curve guarantees)."""
    n = min(len(f.values), len(g.values))
    diff = np.maximum(0.0, g.values[:n] - f.values[:n])
    return SampledCurve(g.step, np.maximum.accumulate(diff))


def rate_latency_envelope(s: SampledCurve) -> ServiceCurve:
    """Tightest rate-latency curve read off a sampled curve: latency is the
    last zero sample, rate the slope over the tail half of the grid."""
    v = s.values
    positive = np.nonzero(v > 1e-12)[0]
    if len(positive) == 0:
        raise OracleHorizonError("curve is identically zero on the horizon")
    first = positive[0]
    tail_start = max(first, len(v) // 2)
    if tail_start >= len(v) - 1:
        raise OracleHorizonError("horizon too short to read a tail slope")
    rate = (v[-1] - v[tail_start]) / ((len(v) - 1 - tail_start) * s.step)
    latency = (len(v) - 1) * s.step - v[-1] / rate
    return ServiceCurve(float(rate), float(max(0.0, latency)))


# --- dispatcher -----------------------------------------------------------

def grid_oracle(op: str, curves: Sequence[Curve], step: float, horizon: float):
    """Evaluate ``op`` on ``curves`` by brute force on a grid.

    Supported ops and their arguments:

    ``convolve`` (service, service) -> SampledCurve
    ``deconvolve`` (arrival, service) -> value at t=0
    ``residual`` (service, arrival) -> SampledCurve of (β - α)^+
    ``hdev`` (arrival, service) -> float
    ``vdev`` (arrival, service) -> float
    """
    if step <= 0:
        raise ValueError("step must be positive")
    needed = required_horizon(curves)
    if horizon < needed:
        raise OracleHorizonError(
            f"horizon {horizon:g} too short for {op}; need at least {needed:g}"
        )
    samples = [sample(c, step, horizon) for c in curves]
    if op == "convolve":
        return conv_samples(*samples)
    if op == "deconvolve":
        return deconv_at(samples[0], samples[1], 0)
    if op == "residual":
        return positive_part_diff(samples[0], samples[1])
    if op == "hdev":
        return hdev_samples(*samples)
    if op == "vdev":
        return vdev_samples(*samples)
    raise ValueError(f"unknown oracle operation {op!r}")
