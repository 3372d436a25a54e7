"""Joint samples, polyhedral conditioning events and trimming primitives.

Distances are l1 throughout. A sample point is the concatenation ``(z, y)``
of its feature and uncertainty blocks.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import lp
from .errors import DimensionMismatch, InfeasibleEvent

INSIDE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class EmpiricalSample:
    points: np.ndarray
    d_z: int
    d_y: int
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, ndmin=2)
        object.__setattr__(self, "points", pts)
        pts.flags.writeable = False
        if pts.shape[0] < 1:
            raise ValueError("a sample needs at least one point")
        if self.d_z < 0 or self.d_y < 1 or pts.shape[1] != self.d_z + self.d_y:
            raise DimensionMismatch(f"points have {pts.shape[1]} columns, expected d_z + d_y")
        if not np.all(np.isfinite(pts)):
            raise ValueError("sample contains non-finite coordinates")

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.d_z + self.d_y

    @property
    def z(self) -> np.ndarray:
        return self.points[:, : self.d_z]

    @property
    def y(self) -> np.ndarray:
        return self.points[:, self.d_z:]

    def take(self, idx) -> "EmpiricalSample":
        """Sub- or re-sample by index, carrying cached event distances along."""
        idx = np.asarray(idx, dtype=int)
        out = EmpiricalSample(self.points[idx], self.d_z, self.d_y)
        for key, (dist, proj) in self._cache.items():
            out._cache[key] = (dist[idx], proj[idx])
        return out

    def to_csv(self, path) -> None:
        header = [f"z{j + 1}" for j in range(self.d_z)] + [f"y{j + 1}" for j in range(self.d_y)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in self.points:
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "EmpiricalSample":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header = [h.strip() for h in rows[0]]
        d_z = sum(1 for h in header if h.startswith("z"))
        d_y = sum(1 for h in header if h.startswith("y"))
        expected = [f"z{j + 1}" for j in range(d_z)] + [f"y{j + 1}" for j in range(d_y)]
        if header != expected:
            raise ValueError(f"bad header {header}; expected {expected}")
        return cls(np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float), d_z, d_y)


@dataclass(frozen=True, eq=False)
class ConditioningEvent:
    """Polyhedron ``{xi : H xi <= h}`` with ``eq_rows`` holding as equalities."""

    H: np.ndarray
    h: np.ndarray
    eq_rows: tuple = ()
    d_z: int | None = None
    feature_only: bool = False

    def __post_init__(self):
        H = np.array(self.H, dtype=float, ndmin=2)
        h = np.array(self.h, dtype=float).reshape(-1)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "eq_rows", tuple(sorted(int(i) for i in self.eq_rows)))
        if H.shape[0] != h.size:
            raise DimensionMismatch("H and h disagree")
        if any(i < 0 or i >= h.size for i in self.eq_rows):
            raise DimensionMismatch("equality row out of range")
        if self.feature_only:
            if self.d_z is None:
                raise ValueError("feature_only needs d_z")
            if np.any(H[:, self.d_z:] != 0.0):
                raise ValueError("feature_only event constrains uncertainty coordinates")
        if not (np.all(np.isfinite(H)) and np.all(np.isfinite(h))):
            raise ValueError("non-finite event data")
        object.__setattr__(self, "_bounds", self._axis_bounds())
        if not self._nonempty():
            raise InfeasibleEvent("conditioning event is empty")

    # constructors ------------------------------------------------------

    @classmethod
    def whole_space(cls, d: int, d_z: int | None = None) -> "ConditioningEvent":
        return cls(np.zeros((0, d)), np.zeros(0), (), d_z, feature_only=d_z is not None)

    @classmethod
    def singleton(cls, z_star, d_y: int) -> "ConditioningEvent":
        """The event ``{z = z*}``, one equality row per feature."""
        z_star = np.atleast_1d(np.asarray(z_star, dtype=float))
        d_z = z_star.size
        H = np.hstack([np.eye(d_z), np.zeros((d_z, d_y))])
        return cls(H, z_star, tuple(range(d_z)), d_z, feature_only=True)

    @classmethod
    def feature_box(cls, lo, hi, d_y: int) -> "ConditioningEvent":
        """``{lo <= z <= hi}``; infinite limits are dropped."""
        lo, hi = np.atleast_1d(np.asarray(lo, float)), np.atleast_1d(np.asarray(hi, float))
        d_z = lo.size
        rows, rhs = [], []
        for j in range(d_z):
            e = np.zeros(d_z + d_y)
            e[j] = 1.0
            if np.isfinite(hi[j]):
                rows.append(e); rhs.append(hi[j])
            if np.isfinite(lo[j]):
                rows.append(-e); rhs.append(-lo[j])
        H = np.array(rows).reshape(-1, d_z + d_y)
        return cls(H, np.array(rhs), (), d_z, feature_only=True)

    @classmethod
    def from_json(cls, doc, d_z: int | None = None) -> "ConditioningEvent":
        if isinstance(doc, (str, Path)) and Path(doc).exists():
            doc = json.loads(Path(doc).read_text())
        elif isinstance(doc, str):
            doc = json.loads(doc)
        d_z = doc.get("d_z", d_z)
        H = np.array(doc["H"], dtype=float)
        if H.size == 0:
            H = H.reshape(0, int(doc["d"]))
        return cls(H, doc["h"], tuple(doc.get("eq_rows", ())), d_z,
                   feature_only=bool(doc.get("feature_only", d_z is not None and H.size > 0
                                             and not np.any(H[:, d_z:]))))

    def to_json(self) -> str:
        doc = {"H": self.H.tolist(), "h": self.h.tolist(), "eq_rows": list(self.eq_rows),
               "d": self.d}
        if self.d_z is not None:
            doc["d_z"] = self.d_z
        return json.dumps(doc)

    # geometry ----------------------------------------------------------

    @property
    def d(self) -> int:
        return self.H.shape[1]

    @property
    def m(self) -> int:
        return self.H.shape[0]

    @property
    def key(self) -> tuple:
        return (self.H.tobytes(), self.H.shape, self.h.tobytes(), self.eq_rows)

    @property
    def is_eq(self) -> np.ndarray:
        mask = np.zeros(self.m, dtype=bool)
        mask[list(self.eq_rows)] = True
        return mask

    @property
    def bounded(self) -> bool:
        b = self._bounds
        if b is not None:
            return bool(np.all(np.isfinite(b[0])) and np.all(np.isfinite(b[1])))
        for j in range(self.d):
            for sign in (1.0, -1.0):
                c = np.zeros(self.d)
                c[j] = -sign
                sol = lp.solve(self._lp(c))
                if sol.status is lp.Status.UNBOUNDED:
                    return False
        return True

    @property
    def singleton_center(self) -> np.ndarray | None:
        """``z*`` when the event is exactly ``{z = z*}`` with y unconstrained."""
        if self.d_z is None or self._bounds is None:
            return None
        lo, hi = self._bounds
        dz = self.d_z
        if np.all(lo[:dz] == hi[:dz]) and np.all(np.isinf(lo[dz:])) and np.all(np.isinf(hi[dz:])):
            return lo[:dz].copy()
        return None

    def contains(self, point, tol: float = INSIDE_TOL) -> bool:
        r = self.H @ np.asarray(point, float) - self.h
        eq = self.is_eq
        scale = tol * (1.0 + np.abs(self.h))
        return bool(np.all(r[~eq] <= scale[~eq]) and np.all(np.abs(r[eq]) <= scale[eq]))

    def _axis_bounds(self):
        """Per-coordinate intervals when every row touches a single coordinate."""
        H, h, d = self.H, self.h, self.H.shape[1]
        nz = H != 0.0
        if np.any(nz.sum(axis=1) > 1):
            return None
        lo, hi = np.full(d, -np.inf), np.full(d, np.inf)
        eq = np.zeros(self.m, dtype=bool)
        eq[list(self.eq_rows)] = True
        for i in range(self.m):
            js = np.flatnonzero(nz[i])
            if js.size == 0:
                if h[i] < 0 or (eq[i] and h[i] != 0):
                    lo[:] = np.inf  # empty marker
                continue
            j = js[0]
            v = h[i] / H[i, j]
            if eq[i]:
                lo[j], hi[j] = max(lo[j], v), min(hi[j], v)
            elif H[i, j] > 0:
                hi[j] = min(hi[j], v)
            else:
                lo[j] = max(lo[j], v)
        return lo, hi

    def _lp(self, c) -> lp.LinearProgram:
        rows, cols = np.nonzero(self.H)
        senses = np.where(self.is_eq, lp.EQ, lp.LE)
        return lp.LinearProgram.from_triplets(c, rows, cols, self.H[rows, cols], senses, self.h,
                                              np.full(self.d, -np.inf), np.full(self.d, np.inf))

    def _nonempty(self) -> bool:
        if self._bounds is not None:
            lo, hi = self._bounds
            return bool(np.all(lo <= hi))
        return lp.solve(self._lp(np.zeros(self.d))).status is lp.Status.OPTIMAL


def _project_lp(point: np.ndarray, event: ConditioningEvent) -> tuple[float, np.ndarray]:
    d = event.d
    b = lp.LpBuilder()
    xi = b.add_vars(d, lb=-np.inf)
    t = b.add_vars(d, cost=1.0)
    r = np.arange(d)
    # t - xi >= -p  and  t + xi >= p
    b.add_rows(np.r_[r, r], np.r_[t, xi], np.r_[np.ones(d), -np.ones(d)], lp.GE, -point)
    b.add_rows(np.r_[r, r], np.r_[t, xi], np.ones(2 * d), lp.GE, point)
    if event.m:
        rr, cc = np.nonzero(event.H)
        b.add_rows(rr, xi[cc], event.H[rr, cc], np.where(event.is_eq, lp.EQ, lp.LE), event.h)
    sol = lp.solve(b.build())
    if sol.status is not lp.Status.OPTIMAL:
        raise InfeasibleEvent(f"projection LP ended {sol.status.value}")
    proj = sol.x[xi]
    return float(np.abs(point - proj).sum()), proj


def project_to_event(point, event: ConditioningEvent) -> tuple[float, np.ndarray]:
    """l1 distance from ``point`` to the event and a minimiser (projection)."""
    point = np.asarray(point, dtype=float)
    if point.shape != (event.d,):
        raise DimensionMismatch(f"point has shape {point.shape}, event lives in R^{event.d}")
    if not np.all(np.isfinite(point)):
        raise ValueError("non-finite point")
    if event.contains(point):
        return 0.0, point.copy()
    if event._bounds is not None:
        lo, hi = event._bounds
        proj = np.clip(point, lo, hi)
        return float(np.abs(point - proj).sum()), proj
    return _project_lp(point, event)


def distance_to_event(point, event: ConditioningEvent) -> float:
    return project_to_event(point, event)[0]


def event_distances(sample: EmpiricalSample, event: ConditioningEvent):
    """Distances and projections for every sample point; cached per (sample, event)."""
    if event.d != sample.d:
        raise DimensionMismatch("event and sample dimensions differ")
    hit = sample._cache.get(event.key)
    if hit is not None:
        return hit
    if event._bounds is not None:
        lo, hi = event._bounds
        proj = np.clip(sample.points, lo, hi)
        dist = np.abs(sample.points - proj).sum(axis=1)
        inside = np.array([event.contains(p) for p in sample.points])
        dist[inside] = 0.0
        proj[inside] = sample.points[inside]
    else:
        pairs = [project_to_event(p, event) for p in sample.points]
        dist = np.array([d for d, _ in pairs])
        proj = np.array([q for _, q in pairs]).reshape(sample.n, sample.d)
    dist.flags.writeable = False
    proj.flags.writeable = False
    sample._cache[event.key] = (dist, proj)
    return dist, proj


def order_by_event_distance(sample: EmpiricalSample, event: ConditioningEvent):
    """Indices sorted by distance to the event (ties by index) and the sorted distances."""
    dist, _ = event_distances(sample, event)
    order = np.argsort(dist, kind="stable")
    return order, dist[order]


def _trim_counts(n: int, alpha: float) -> tuple[float, int, int]:
    n_alpha = n * alpha
    near = round(n_alpha)
    if abs(n_alpha - near) <= 1e-9 * max(1.0, n_alpha):
        n_alpha = float(near)
    return n_alpha, math.floor(n_alpha), math.ceil(n_alpha)


def minimum_transport_budget(sample: EmpiricalSample, event: ConditioningEvent,
                             alpha: float, p: float = 1.0) -> float:
    """Smallest transport distance from the (1-alpha)-trimmings of the sample to the event.

    The closest trimming puts the maximal weight ``1/(N alpha)`` on the nearest
    points and the leftover mass on the next one.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    _, sdist = order_by_event_distance(sample, event)
    if alpha == 0.0:
        return float(sdist[0])
    n_alpha, lo, hi = _trim_counts(sample.n, alpha)
    total = (sdist[:lo] ** p).sum() / n_alpha
    if hi > lo:
        total += (1.0 - lo / n_alpha) * sdist[hi - 1] ** p
    return float(total ** (1.0 / p))


@dataclass(frozen=True, eq=False)
class TrimmingWeights:
    b: np.ndarray
    alpha: float

    def __post_init__(self):
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).reshape(-1))


def trimming_cap(n: int, alpha: float) -> float:
    return np.inf if alpha == 0.0 else 1.0 / (n * alpha)


def trimming_membership(weights: TrimmingWeights, sample_size: int) -> bool:
    """Whether ``b`` describes a (1-alpha)-trimming of an N-point empirical measure."""
    b = weights.b
    if b.size != sample_size:
        raise DimensionMismatch("weight vector length differs from sample size")
    if np.any(b < 0.0) or abs(b.sum() - 1.0) > 1e-9:
        return False
    return bool(np.all(b <= trimming_cap(sample_size, weights.alpha) + 1e-12))


@dataclass(frozen=True)
class TrimmedAmbiguitySpec:
    """Trimming level ``alpha`` and transport budget ``rho`` (p-th power units)."""

    alpha: float
    rho: float
    min_budget: float
    p: float = 1.0

    def __post_init__(self):
        from .errors import InfeasibleBudget

        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.rho < self.min_budget - 1e-12 * (1.0 + self.min_budget):
            raise InfeasibleBudget(f"rho={self.rho!r} below the minimum budget {self.min_budget!r}")

    @property
    def excess(self) -> float:
        return self.rho - self.min_budget

    @classmethod
    def build(cls, sample: EmpiricalSample, event: ConditioningEvent, alpha: float,
              rho: float | None = None, excess: float | None = None,
              p: float = 1.0) -> "TrimmedAmbiguitySpec":
        """Either an absolute budget ``rho`` or an ``excess`` over the minimum."""
        if (rho is None) == (excess is None):
            raise ValueError("give exactly one of rho and excess")
        floor = minimum_transport_budget(sample, event, alpha, p) ** p
        return cls(alpha, floor + excess if rho is None else rho, floor, p)


def trimmed_transport_distance(sample: EmpiricalSample, alpha: float, target_points,
                               target_weights=None, p: float = 1.0) -> float:
    """Transport distance from the closest (1-alpha)-trimming of the sample to a discrete target.

    One LP in the plan ``pi_ij`` whose row sums are capped at ``1/(N alpha)`` and whose
    column sums equal the target weights.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    tgt = np.atleast_2d(np.asarray(target_points, float))
    if tgt.shape[1] != sample.d:
        raise DimensionMismatch("target points and sample dimensions differ")
    G, N = tgt.shape[0], sample.n
    w = np.full(G, 1.0 / G) if target_weights is None else np.asarray(target_weights, float)
    cost = np.abs(sample.points[:, None, :] - tgt[None, :, :]).sum(axis=2) ** p
    B = lp.LpBuilder()
    pi = B.add_vars(N * G, cost=cost.reshape(-1)).reshape(N, G)
    B.add_rows(np.tile(np.arange(G), N), pi.reshape(-1), np.ones(N * G), lp.EQ, w)
    cap = trimming_cap(N, alpha)
    if cap < 1.0:
        B.add_rows(np.repeat(np.arange(N), G), pi.reshape(-1), np.ones(N * G), lp.LE, np.full(N, cap))
    sol = lp.solve(B.build())
    if not sol.optimal:
        raise lp.LpError(f"trimming transport LP ended {sol.status.value}")
    return float(max(sol.objective, 0.0) ** (1.0 / p))
