"""Seeded synthetic data: newsvendor mixture, portfolio with covariates, contaminated mixtures.

Randomness comes from numpy's counter-based Philox generator.  Replication streams
are keyed by a BLAKE2b hash of ``(seed, *labels)`` so they never overlap and can be
produced in any order.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidCovariance
from .sample import ConditioningEvent, EmpiricalSample

PRNG_NAME = "philox4x64-numpy-v1"


def derive_seed(seed: int, *labels) -> int:
    """64-bit child seed for the stream identified by ``labels``."""
    msg = repr((int(seed),) + tuple(labels)).encode()
    return int.from_bytes(hashlib.blake2b(msg, digest_size=8).digest(), "little")


def rng_for(seed: int, *labels) -> np.random.Generator:
    key = derive_seed(seed, *labels) if labels else int(seed) & (2**64 - 1)
    return np.random.Generator(np.random.Philox(key=key))


def _factor(cov: np.ndarray) -> np.ndarray:
    """A matrix ``F`` with ``F F^T = cov`` (Cholesky, eigen-decomposition for singular PSD)."""
    cov = np.asarray(cov, dtype=float)
    if cov.shape[0] != cov.shape[1] or not np.allclose(cov, cov.T):
        raise InvalidCovariance("covariance must be square and symmetric")
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(cov)
        if w.min() < -1e-10 * max(1.0, w.max()):
            raise InvalidCovariance("covariance is not positive semidefinite") from None
        return V * np.sqrt(np.clip(w, 0.0, None))


# --------------------------------------------------------------------------
# newsvendor


@dataclass(frozen=True)
class NewsvendorMixture:
    """Equal-weight mixture of two bivariate normals over (feature, demand)."""

    mu1: tuple = (0.6, 0.75)
    mu2: tuple = (0.5, -0.75)
    cov1: tuple = ((0.5, 0.0), (0.0, 0.01))
    cov2: tuple = ((0.0001, 0.0), (0.0, 0.1))
    z_star: float = 0.44

    def conditional_event(self) -> ConditioningEvent:
        return ConditioningEvent.singleton([self.z_star], 1)


def sample_newsvendor(spec: NewsvendorMixture, n: int, seed: int = 0, *labels) -> EmpiricalSample:
    if n < 1:
        raise ValueError("n must be positive")
    rng = rng_for(seed, "newsvendor", *labels)
    comp = rng.integers(0, 2, size=n)
    std = rng.standard_normal((n, 2))
    out = np.empty((n, 2))
    for c, (mu, cov) in enumerate(((spec.mu1, spec.cov1), (spec.mu2, spec.cov2))):
        sel = comp == c
        out[sel] = np.asarray(mu) + std[sel] @ _factor(np.asarray(cov)).T
    return EmpiricalSample(out, 1, 1)


def newsvendor_moments(spec: NewsvendorMixture) -> tuple[np.ndarray, np.ndarray]:
    """Mean vector and coordinate variances of the mixture."""
    m1, m2 = np.asarray(spec.mu1), np.asarray(spec.mu2)
    v1, v2 = np.diag(spec.cov1), np.diag(spec.cov2)
    mean = (m1 + m2) / 2
    var = (v1 + v2) / 2 + ((m1 - m2) / 2) ** 2
    return mean, var


# --------------------------------------------------------------------------
# portfolio


def _default_sqrt_cov() -> tuple:
    R = 0.1 * (np.eye(6) + 0.2 * (np.ones((6, 6)) - np.eye(6)))
    return tuple(map(tuple, R))


@dataclass(frozen=True)
class PortfolioCovariates:
    """Three covariates and six asset returns with a covariate-shifted Gaussian mean.

    ``z1 ~ N(m1, s1)``, ``z2 ~ N(m2, s2)``, ``log z3 ~ N(m3, s3)`` where the second
    parameter is a variance; ``y | z ~ N(mu + 0.1 (z1 - 1000) v1 + 1000 z2 v2
    + 10 log(z3 + 1) v3, Sigma)`` with ``Sigma = R R^T`` for ``R = sqrt_cov``.
    """

    mu: tuple = (0.06, 0.05, 0.04, 0.03, 0.02, 0.01)
    sqrt_cov: tuple = field(default_factory=_default_sqrt_cov)
    z_params: tuple = ((1000.0, 50.0), (0.02, 0.01), (0.0, 1.0))
    v1: tuple = (1.0,) * 6
    v2: tuple = (4.0, 1.0, 1.0, 1.0, 1.0, 1.0)
    v3: tuple = (1.0,) * 6
    z_star: tuple = (1000.0, 0.01, 5.0)

    def __post_init__(self):
        R = np.asarray(self.sqrt_cov, dtype=float)
        if R.shape != (len(self.mu), len(self.mu)) or not np.all(np.isfinite(R)):
            raise InvalidCovariance("sqrt_cov must be a finite square matrix matching mu")

    def conditional_mean(self, z) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        shift = (0.1 * (z[:, [0]] - 1000.0) * np.asarray(self.v1)
                 + 1000.0 * z[:, [1]] * np.asarray(self.v2)
                 + 10.0 * np.log(z[:, [2]] + 1.0) * np.asarray(self.v3))
        out = np.asarray(self.mu) + shift
        return out[0] if out.shape[0] == 1 else out

    @property
    def cov(self) -> np.ndarray:
        R = np.asarray(self.sqrt_cov)
        return R @ R.T

    def moments(self, nodes: int = 80) -> tuple[np.ndarray, np.ndarray]:
        """Population mean and variance of every coordinate of ``(z, y)``.

        Moments of ``log(z3 + 1)`` come from Gauss-Hermite quadrature.
        """
        (m1, s1), (m2, s2), (m3, s3) = self.z_params
        u, w = np.polynomial.hermite_e.hermegauss(nodes)
        w = w / w.sum()
        g = np.log1p(np.exp(m3 + np.sqrt(s3) * u))
        g_mean = float(w @ g)
        g_var = float(w @ (g - g_mean) ** 2)
        z_mean = np.array([m1, m2, np.exp(m3 + s3 / 2)])
        z_var = np.array([s1, s2, (np.exp(s3) - 1.0) * np.exp(2 * m3 + s3)])
        v1, v2, v3 = (np.asarray(v, float) for v in (self.v1, self.v2, self.v3))
        y_mean = np.asarray(self.mu) + 0.1 * (m1 - 1000.0) * v1 + 1000.0 * m2 * v2 + 10.0 * g_mean * v3
        y_var = (np.diag(self.cov) + 0.01 * s1 * v1 ** 2 + 1e6 * s2 * v2 ** 2 + 100.0 * g_var * v3 ** 2)
        return np.r_[z_mean, y_mean], np.r_[z_var, y_var]


def sample_portfolio_covariates(spec: PortfolioCovariates, n: int, rng) -> np.ndarray:
    (m1, s1), (m2, s2), (m3, s3) = spec.z_params
    std = rng.standard_normal((n, 3))
    return np.c_[m1 + np.sqrt(s1) * std[:, 0], m2 + np.sqrt(s2) * std[:, 1],
                 np.exp(m3 + np.sqrt(s3) * std[:, 2])]


def sample_portfolio(spec: PortfolioCovariates, n: int, seed: int = 0, *labels) -> EmpiricalSample:
    if n < 1:
        raise ValueError("n must be positive")
    rng = rng_for(seed, "portfolio", *labels)
    z = sample_portfolio_covariates(spec, n, rng)
    R = np.asarray(spec.sqrt_cov)
    y = np.atleast_2d(spec.conditional_mean(z)) + rng.standard_normal((n, len(spec.mu))) @ R.T
    return EmpiricalSample(np.c_[z, y], 3, len(spec.mu))


def sample_portfolio_given(spec: PortfolioCovariates, z, n: int, seed: int = 0, *labels) -> np.ndarray:
    """Returns drawn from the conditional law at a fixed covariate ``z``."""
    rng = rng_for(seed, "portfolio-conditional", *labels)
    R = np.asarray(spec.sqrt_cov)
    return spec.conditional_mean(z) + rng.standard_normal((n, len(spec.mu))) @ R.T


@dataclass(frozen=True)
class Standardizer:
    """Affine map ``u = (v - loc) / scale`` per coordinate."""

    loc: np.ndarray
    scale: np.ndarray

    @classmethod
    def from_moments(cls, mean, var) -> "Standardizer":
        var = np.asarray(var, float)
        return cls(np.asarray(mean, float), np.where(var > 0, np.sqrt(var), 1.0))

    @classmethod
    def fit(cls, points: np.ndarray) -> "Standardizer":
        scale = points.std(axis=0)
        return cls(points.mean(axis=0), np.where(scale > 0, scale, 1.0))

    def apply(self, sample: EmpiricalSample) -> EmpiricalSample:
        return EmpiricalSample((sample.points - self.loc) / self.scale, sample.d_z, sample.d_y)

    def apply_event(self, event: ConditioningEvent) -> ConditioningEvent:
        """The image of ``{v : H v <= h}`` under the map."""
        H = event.H * self.scale
        h = event.h - event.H @ self.loc
        return ConditioningEvent(H, h, event.eq_rows, event.d_z, event.feature_only)


# --------------------------------------------------------------------------
# contamination


@dataclass(frozen=True)
class GaussianSpec:
    mean: tuple
    cov: tuple

    def draw(self, n: int, rng) -> np.ndarray:
        mean = np.atleast_1d(np.asarray(self.mean, float))
        F = _factor(np.atleast_2d(np.asarray(self.cov, float)))
        return mean + rng.standard_normal((n, mean.size)) @ F.T


@dataclass(frozen=True)
class PointMassSpec:
    at: tuple

    def draw(self, n: int, rng) -> np.ndarray:
        return np.tile(np.atleast_1d(np.asarray(self.at, float)), (n, 1))


def sample_contaminated(correct_spec, contamination_spec, alpha: float, n: int, seed: int = 0,
                        d_z: int = 0, *labels) -> EmpiricalSample:
    """Draws from ``alpha * correct + (1 - alpha) * contamination`` without labels."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    rng = rng_for(seed, "contaminated", *labels)
    clean = rng.random(n) < alpha
    good = correct_spec.draw(n, rng)
    bad = contamination_spec.draw(n, rng)
    pts = np.where(clean[:, None], good, bad)
    return EmpiricalSample(pts, d_z, pts.shape[1] - d_z)


GENERATORS = {"newsvendor": NewsvendorMixture, "portfolio": PortfolioCovariates}
