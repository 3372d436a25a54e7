"""Closed-form quantities: concentration tail bound and radius, trimming-level estimate,
and the budget rules that turn KNN / Nadaraya-Watson weights into trimmed ambiguity sets."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyKernel, EventNotSingleton, UnsupportedCase
from .sample import (ConditioningEvent, EmpiricalSample, TrimmedAmbiguitySpec, event_distances,
                     minimum_transport_budget)


@dataclass(frozen=True)
class ConcentrationConstants:
    """Constants of the tail bound.  ``c`` and ``C`` have no known values; the defaults
    of 1 are placeholders, flagged by ``theoretical``."""

    a: float
    p: float
    d: int
    c: float = 1.0
    C: float = 1.0
    theoretical: bool = True

    def __post_init__(self):
        if not (self.a > self.p >= 1):
            raise ValueError("need a > p >= 1")
        if not (self.c > 0 and self.C > 0):
            raise ValueError("c and C must be positive")
        if self.d < 1:
            raise ValueError("dimension must be positive")


def beta_bound(consts: ConcentrationConstants, epsilon: float, alpha: float, N: int) -> float:
    """Probability that the trimmed empirical distance exceeds its population value by ``epsilon``."""
    if epsilon < 0 or not 0 < alpha <= 1 or N < 1:
        raise ValueError("need epsilon >= 0, alpha in (0, 1], N >= 1")
    p, d, a, c, C = consts.p, consts.d, consts.a, consts.c, consts.C
    if epsilon <= alpha ** (-1.0 / p):
        if 2 * p > d:
            rate = alpha ** 2 * epsilon ** (2 * p)
        elif 2 * p == d:
            s = alpha * epsilon ** p
            rate = 0.0 if s == 0 else (s / math.log(2.0 + 1.0 / s)) ** 2
        else:
            rate = alpha ** (d / p) * epsilon ** d
    else:
        rate = alpha ** (a / p) * epsilon ** a
    return C * math.exp(-c * N * rate)


def radius(consts: ConcentrationConstants, beta: float, alpha: float, N: int) -> float:
    """Smallest radius whose tail bound does not exceed ``beta`` (closed form, then nudged
    up by a few ulps so that the bound holds in floating point)."""
    if not 0 < beta < 1 or not 0 < alpha <= 1 or N < 1:
        raise ValueError("need beta in (0, 1), alpha in (0, 1], N >= 1")
    p, d, a, c, C = consts.p, consts.d, consts.a, consts.c, consts.C
    if 2 * p == d:
        raise UnsupportedCase("no closed-form radius when p = d/2")
    L = math.log(C / beta)
    if L <= 0:
        return 0.0
    ratio = L / (c * N)
    if N >= L / c:
        expo = 1.0 / (2 * p) if 2 * p > d else 1.0 / d
    else:
        expo = 1.0 / a
    eps = ratio ** expo * alpha ** (-1.0 / p)
    for _ in range(64):
        if beta_bound(consts, eps, alpha, N) <= beta:
            return eps
        eps = math.nextafter(eps, math.inf)
    step = max(eps * 1e-12, 1e-300)
    while beta_bound(consts, eps, alpha, N) > beta:
        eps += step
        step *= 2
    return eps


def alpha_hat_empirical(sample: EmpiricalSample, event: ConditioningEvent) -> float:
    """Fraction of sample points inside the event."""
    dist, _ = event_distances(sample, event)
    return float(np.count_nonzero(dist == 0.0)) / sample.n


def drknn_budget(sample: EmpiricalSample, event: ConditioningEvent, K: int,
                 delta_rho: float, p: float = 1.0) -> TrimmedAmbiguitySpec:
    """Trimming level ``K/N`` with the minimum budget plus an excess ``delta_rho``."""
    if not 1 <= K <= sample.n:
        raise ValueError("K must lie in 1..N")
    if delta_rho < 0:
        raise ValueError("budget excess must be nonnegative")
    return TrimmedAmbiguitySpec.build(sample, event, K / sample.n, excess=delta_rho, p=p)


def box_kernel_weights(sample: EmpiricalSample, center, bandwidth: float, r: float = 1.0,
                       augment: bool = False) -> tuple[np.ndarray, float]:
    """Normalised weights ``1{||z_i - z*||_1 / bandwidth <= r}`` and the bandwidth used."""
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    center = np.atleast_1d(np.asarray(center, float))
    u = np.abs(sample.z - center).sum(axis=1)
    for _ in range(64):
        k = (u / bandwidth <= r).astype(float)
        if k.sum() > 0:
            return k / k.sum(), bandwidth
        if not augment:
            break
        bandwidth *= 2.0
    raise EmptyKernel("no sample point within kernel reach")


def drnw_budget(sample: EmpiricalSample, event: ConditioningEvent, bandwidth: float,
                delta_rho: float, r: float = 1.0, center=None, augment: bool = False,
                p: float = 1.0) -> TrimmedAmbiguitySpec:
    """Trimming level ``1/(N w_max)`` and budget ``sum_i w_i dist_i^p + delta_rho`` from
    box-kernel Nadaraya-Watson weights around the conditioning feature value."""
    if center is None:
        center = event.singleton_center
        if center is None:
            raise EventNotSingleton("give a kernel center for events other than {z = z*}")
    w, _ = box_kernel_weights(sample, center, bandwidth, r, augment)
    dist, _ = event_distances(sample, event)
    alpha = min(1.0, 1.0 / (sample.n * w.max()))
    rho = float(w @ dist ** p) + delta_rho
    floor = minimum_transport_budget(sample, event, alpha, p) ** p
    return TrimmedAmbiguitySpec(alpha, rho, floor, p)

