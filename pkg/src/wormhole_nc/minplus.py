"""
Min-plus algebra restricted to affine (token-bucket) arrival curves and
rate-latency service curves.

Both classes are closed under every operation used by the delay analysis,
so each operation is a closed form on two numbers. Brute-force checks of
these closed forms live in :mod:`wormhole_nc.grid`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

# Stand-in for an infinitely fast server (the neutral element of convolution).
INFINITE_RATE = 1e12

REL_TOL = 1e-9


class InstabilityError(ArithmeticError):
    """Raised when a flow's long-term rate is not covered by its service."""


@dataclass(frozen=True)
class ArrivalCurve:
    """Token bucket ``burst + rate * t`` for ``t >= 0``, zero before."""

    burst: float
    rate: float

    def __post_init__(self):
        object.__setattr__(self, "burst", float(self.burst))
        object.__setattr__(self, "rate", float(self.rate))
        if not (self.burst >= 0 and self.rate >= 0):
            raise ValueError(f"invalid arrival curve {self!r}")

    def __call__(self, t: float) -> float:
        if t < 0:
            return 0.0
        return self.burst + self.rate * t


@dataclass(frozen=True)
class ServiceCurve:
    """Rate-latency curve ``rate * max(0, t - latency)``."""

    rate: float
    latency: float

    def __post_init__(self):
        object.__setattr__(self, "rate", float(self.rate))
        object.__setattr__(self, "latency", float(self.latency))
        if not (self.rate > 0 and self.latency >= 0):
            raise ValueError(f"invalid service curve {self!r}")

    def __call__(self, t: float) -> float:
        return self.rate * max(0.0, t - self.latency)


IDENTITY_SERVICE = ServiceCurve(INFINITE_RATE, 0.0)
NULL_ARRIVAL = ArrivalCurve(0.0, 0.0)


def isclose(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=REL_TOL, abs_tol=REL_TOL)


def convolve(a: ServiceCurve, b: ServiceCurve) -> ServiceCurve:
    """Concatenation of two servers: rates take the minimum, latencies add."""
    return ServiceCurve(min(a.rate, b.rate), a.latency + b.latency)


def convolve_all(services: Iterable[ServiceCurve]) -> ServiceCurve:
    result = IDENTITY_SERVICE
    for s in services:
        result = convolve(result, s)
    return result


def delay_shift(s: ServiceCurve, d: float) -> ServiceCurve:
    """Convolution with a pure delay element of length ``d``."""
    if d < 0:
        raise ValueError(f"negative delay {d}")
    return ServiceCurve(s.rate, s.latency + d)


def _check_stable(a: ArrivalCurve, s: ServiceCurve) -> None:
    if a.rate > s.rate and not isclose(a.rate, s.rate):
        raise InstabilityError(
            f"arrival rate {a.rate} exceeds service rate {s.rate}"
        )


def deconvolve(a: ArrivalCurve, s: ServiceCurve) -> ArrivalCurve:
    """Output envelope of a flow constrained by ``a`` crossing ``s``."""
    _check_stable(a, s)
    return ArrivalCurve(a.burst + a.rate * s.latency, a.rate)


def residual_blind(s: ServiceCurve, cross: ArrivalCurve) -> ServiceCurve:
    """Service left over by ``s`` once ``cross`` is served first, i.e. the
    rate-latency form of ``(s - cross)^+``."""
    if cross.rate >= s.rate or isclose(cross.rate, s.rate):
        raise InstabilityError(
            f"cross traffic rate {cross.rate} saturates service rate {s.rate}"
        )
    if cross.burst == 0 and cross.rate == 0:
        return s
    rate = s.rate - cross.rate
    latency = (s.rate * s.latency + cross.burst) / rate
    return ServiceCurve(rate, latency)


def hdev(a: ArrivalCurve, s: ServiceCurve) -> float:
    """Delay bound: largest horizontal distance between ``a`` and ``s``."""
    _check_stable(a, s)
    return s.latency + a.burst / s.rate


def vdev(a: ArrivalCurve, s: ServiceCurve) -> float:
    """Backlog bound: largest vertical distance between ``a`` and ``s``."""
    _check_stable(a, s)
    return a.burst + a.rate * s.latency


def sum_arrivals(curves: Iterable[ArrivalCurve]) -> ArrivalCurve:
    burst = 0.0
    rate = 0.0
    for c in curves:
        burst += c.burst
        rate += c.rate
    return ArrivalCurve(burst, rate)
