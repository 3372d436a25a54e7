"""Piecewise bi-affine losses ``f(x, xi) = max_k g_k(x, xi)`` and polyhedral decision sets.

Piece ``k`` is ``g_k(x, xi) = <xi, A_k x> + <b_k, xi> + <c_k, x> + d_k``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import lp
from .errors import (DimensionMismatch, EmptyDecisionSet, InvalidDelta, NonpositiveCost)


@dataclass(frozen=True, eq=False)
class PiecewiseBiAffineLoss:
    A: np.ndarray  # (K, d, n)
    b: np.ndarray  # (K, d)
    c: np.ndarray  # (K, n)
    d0: np.ndarray  # (K,)

    def __post_init__(self):
        A = np.array(self.A, dtype=float, ndmin=3)
        K, d, n = A.shape
        b = np.array(self.b, dtype=float).reshape(K, d)
        c = np.array(self.c, dtype=float).reshape(K, n)
        d0 = np.array(self.d0, dtype=float).reshape(K)
        if K < 1:
            raise ValueError("a loss needs at least one piece")
        for name, arr in (("A", A), ("b", b), ("c", c), ("d", d0)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite coefficients in {name}")
            arr.flags.writeable = False
            object.__setattr__(self, name if name != "d" else "d0", arr)

    @property
    def n_pieces(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.A.shape[1]

    @property
    def n(self) -> int:
        return self.A.shape[2]

    def _check(self, x, xi=None):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise DimensionMismatch(f"decision has shape {x.shape}, expected ({self.n},)")
        if xi is not None:
            xi = np.asarray(xi, dtype=float)
            if xi.shape[-1] != self.d:
                raise DimensionMismatch(f"outcome has {xi.shape[-1]} coordinates, expected {self.d}")
        return x, xi

    def slopes(self, x) -> np.ndarray:
        """``a_k(x) = A_k x + b_k`` for every piece, shape (K, d)."""
        x, _ = self._check(x)
        return self.A @ x + self.b

    def offsets(self, x) -> np.ndarray:
        """``<c_k, x> + d_k`` for every piece, shape (K,)."""
        x, _ = self._check(x)
        return self.c @ x + self.d0

    def pieces(self, x, xi) -> np.ndarray:
        """Piece values; ``xi`` may be one point or a stack, result (..., K)."""
        x, xi = self._check(x, xi)
        return xi @ self.slopes(x).T + self.offsets(x)

    def evaluate(self, x, xi):
        vals = self.pieces(x, xi).max(axis=-1)
        return float(vals) if np.ndim(vals) == 0 else vals

    def growth_constant(self, x_radius: float) -> float:
        """``L`` with ``|f(x, xi)| <= L (1 + ||xi||_1)`` whenever ``||x||_inf <= x_radius``."""
        slope = np.abs(self.A).sum(axis=2).max(axis=1) * x_radius + np.abs(self.b).max(axis=1)
        const = np.abs(self.c).sum(axis=1) * x_radius + np.abs(self.d0)
        return float(np.max(np.maximum(slope, const)))

    def to_dict(self) -> dict:
        return {"type": "custom", "pieces": [
            {"A": self.A[k].tolist(), "b": self.b[k].tolist(), "c": self.c[k].tolist(),
             "d": float(self.d0[k])} for k in range(self.n_pieces)]}


def xi_gradient_of_piece(loss: PiecewiseBiAffineLoss, k: int, x) -> np.ndarray:
    """The outcome-slope ``A_k x + b_k`` of piece ``k`` (0-based)."""
    if not 0 <= k < loss.n_pieces:
        raise IndexError(f"piece {k} out of range")
    return loss.slopes(x)[k]


def evaluate(loss: PiecewiseBiAffineLoss, x, xi):
    return loss.evaluate(x, xi)


def newsvendor_loss(h: float, b: float, d_z: int = 1) -> PiecewiseBiAffineLoss:
    """Holding cost ``h (x - y)`` and backorder cost ``b (y - x)`` on a scalar demand ``y``."""
    if not (h > 0 and b > 0):
        raise NonpositiveCost("holding and backorder costs must be positive")
    d = d_z + 1
    bvec = np.zeros((2, d))
    bvec[0, d_z], bvec[1, d_z] = -h, b
    return PiecewiseBiAffineLoss(np.zeros((2, d, 1)), bvec, [[h], [-b]], [0.0, 0.0])


def portfolio_cvar_loss(delta: float, lam: float, n_assets: int, d_z: int = 3) -> PiecewiseBiAffineLoss:
    """CVaR_delta of the portfolio loss ``-<x, y>`` minus ``lam`` times the mean return.

    Decision is ``(x_1..x_n, tau)`` with ``tau`` the value-at-risk threshold; the loss
    is ``tau + (1/delta)(-<x,y> - tau)^+ - lam <x,y>``.
    """
    if not 0.0 < delta < 1.0:
        raise InvalidDelta("delta must lie in (0, 1)")
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    n, d = n_assets + 1, d_z + n_assets
    A = np.zeros((2, d, n))
    idx = np.arange(n_assets)
    A[0, d_z + idx, idx] = -(1.0 / delta + lam)
    A[1, d_z + idx, idx] = -lam
    c = np.zeros((2, n))
    c[0, -1], c[1, -1] = 1.0 - 1.0 / delta, 1.0
    return PiecewiseBiAffineLoss(A, np.zeros((2, d)), c, [0.0, 0.0])


def loss_from_config(doc: dict, d_z: int) -> PiecewiseBiAffineLoss:
    kind = doc["type"]
    if kind == "newsvendor":
        return newsvendor_loss(doc["h"], doc["b"], d_z)
    if kind == "portfolio":
        return portfolio_cvar_loss(doc["delta"], doc["lambda"], doc["assets"], d_z)
    if kind == "custom":
        ps = doc["pieces"]
        return PiecewiseBiAffineLoss([p["A"] for p in ps], [p["b"] for p in ps],
                                     [p["c"] for p in ps], [p.get("d", 0.0) for p in ps])
    raise ValueError(f"unknown loss type {kind!r}")


def _bound(v, n, default):
    if v is None:
        return np.full(n, default)
    return np.array([default if t is None else t for t in np.ravel(np.asarray(v, dtype=object))],
                    dtype=float).reshape(n)


@dataclass(frozen=True, eq=False)
class DecisionSet:
    """``{x : G x <= g (eq_rows tight), lb <= x <= ub}``."""

    G: np.ndarray
    g: np.ndarray
    eq_rows: tuple = ()
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        G = np.array(self.G, dtype=float, ndmin=2)
        g = np.array(self.g, dtype=float).reshape(-1)
        n = G.shape[1]
        lb = _bound(self.lb, n, -np.inf)
        ub = _bound(self.ub, n, np.inf)
        for name, v in (("G", G), ("g", g), ("lb", lb), ("ub", ub)):
            object.__setattr__(self, name, v)
        object.__setattr__(self, "eq_rows", tuple(sorted(int(i) for i in self.eq_rows)))
        if G.shape[0] != g.size:
            raise DimensionMismatch("G and g disagree")
        if np.any(lb > ub):
            raise EmptyDecisionSet("lower bound above upper bound")
        if G.shape[0]:
            sol = lp.solve(self.as_lp(np.zeros(n)))
            if sol.status is lp.Status.INFEASIBLE:
                raise EmptyDecisionSet("decision polyhedron is empty")

    @property
    def n(self) -> int:
        return self.G.shape[1]

    @property
    def senses(self) -> np.ndarray:
        s = np.full(self.G.shape[0], lp.LE)
        s[list(self.eq_rows)] = lp.EQ
        return s

    def as_lp(self, c) -> lp.LinearProgram:
        rows, cols = np.nonzero(self.G)
        return lp.LinearProgram.from_triplets(c, rows, cols, self.G[rows, cols], self.senses,
                                              self.g, self.lb, self.ub)

    def contains(self, x, tol: float = 1e-7) -> bool:
        x = np.asarray(x, float)
        if np.any(x < self.lb - tol) or np.any(x > self.ub + tol):
            return False
        r = self.G @ x - self.g
        eq = np.zeros(r.size, bool)
        eq[list(self.eq_rows)] = True
        return bool(np.all(r[~eq] <= tol) and np.all(np.abs(r[eq]) <= tol))

    def add_to(self, builder: lp.LpBuilder, cost=0.0) -> np.ndarray:
        """Register the decision variables and constraints on an LP builder."""
        x = builder.add_vars(self.n, lb=self.lb, ub=self.ub, cost=cost)
        if self.G.shape[0]:
            rows, cols = np.nonzero(self.G)
            builder.add_rows(rows, x[cols], self.G[rows, cols], self.senses, self.g)
        return x

    @classmethod
    def box(cls, lb, ub) -> "DecisionSet":
        lb = np.atleast_1d(np.asarray(lb, float))
        return cls(np.zeros((0, lb.size)), np.zeros(0), (), lb, np.atleast_1d(np.asarray(ub, float)))

    @classmethod
    def free(cls, n: int) -> "DecisionSet":
        return cls(np.zeros((0, n)), np.zeros(0))

    @classmethod
    def portfolio(cls, n_assets: int) -> "DecisionSet":
        """Long-only fully invested weights plus a free threshold variable."""
        G = np.zeros((1, n_assets + 1))
        G[0, :n_assets] = 1.0
        lb = np.r_[np.zeros(n_assets), -np.inf]
        return cls(G, [1.0], (0,), lb, np.full(n_assets + 1, np.inf))

    @classmethod
    def from_config(cls, doc: dict | None, loss: PiecewiseBiAffineLoss, loss_doc: dict) -> "DecisionSet":
        if doc is None:
            if loss_doc["type"] == "portfolio":
                return cls.portfolio(loss_doc["assets"])
            return cls.free(loss.n)
        if "box" in doc:
            return cls.box(*doc["box"])
        return cls(doc["G"], doc["g"], tuple(doc.get("eq_rows", ())), doc.get("lb"), doc.get("ub"))

    def to_json(self) -> str:
        enc = lambda v: [None if not np.isfinite(t) else float(t) for t in v]
        return json.dumps({"G": self.G.tolist(), "g": self.g.tolist(), "eq_rows": list(self.eq_rows),
                           "lb": enc(self.lb), "ub": enc(self.ub)})
