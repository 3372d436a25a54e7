"""Linear programs: model, solvers and certificate checks.

Two backends share one contract. ``"simplex"`` is the in-house bounded
revised simplex (Dantzig pricing, Bland's rule after a run of degenerate
pivots); ``"highs"`` delegates to the HiGHS dual simplex shipped with SciPy.
Both return row duals with the convention ``y = d(objective)/d(rhs)``, so for
a minimisation ``>=`` rows have ``y >= 0`` and ``<=`` rows have ``y <= 0``.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

log = logging.getLogger(__name__)

LE, EQ, GE = "<", "=", ">"


class LpError(Exception):
    pass


class NumericalFailure(LpError):
    """The simplex could not reach a certified vertex."""


class Status(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


@dataclass(frozen=True)
class Tolerances:
    feasibility: float = 1e-7
    gap: float = 1e-6
    pivot: float = 1e-9
    # simplex internals
    refactor_every: int = 64
    degenerate_before_bland: int = 50
    max_iter: int = 50_000


DEFAULT_TOL = Tolerances()
DEFAULT_BACKEND = "highs"
POLISH_MAX_VARS = 2000


@dataclass(frozen=True, eq=False)
class LinearProgram:
    """``min/max c'x  s.t.  A x (senses) rhs,  lb <= x <= ub``."""

    c: np.ndarray
    A: sp.csr_matrix
    senses: np.ndarray
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    maximize: bool = False

    def __post_init__(self):
        m, n = self.A.shape
        if self.c.shape != (n,) or self.lb.shape != (n,) or self.ub.shape != (n,):
            raise ValueError("column dimensions disagree")
        if self.rhs.shape != (m,) or self.senses.shape != (m,):
            raise ValueError("row dimensions disagree")
        if not set(np.unique(self.senses)) <= {LE, EQ, GE}:
            raise ValueError(f"unknown row sense in {np.unique(self.senses)}")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.A.data))
                and np.all(np.isfinite(self.rhs))):
            raise ValueError("non-finite coefficient")
        if np.any(self.lb > self.ub) or np.any(self.lb == np.inf) or np.any(self.ub == -np.inf):
            raise ValueError("inconsistent variable bounds")

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape

    @classmethod
    def from_triplets(cls, c, rows, cols, vals, senses, rhs, lb=None, ub=None,
                      maximize=False) -> "LinearProgram":
        c = np.asarray(c, dtype=float)
        n = c.size
        rhs = np.asarray(rhs, dtype=float).reshape(-1)
        m = rhs.size
        A = sp.csr_matrix((np.asarray(vals, float), (np.asarray(rows, int), np.asarray(cols, int))),
                          shape=(m, n))
        A.sum_duplicates()
        lb = np.zeros(n) if lb is None else np.asarray(lb, dtype=float)
        ub = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float)
        return cls(c, A, np.asarray(senses, dtype="<U1").reshape(-1), rhs, lb, ub, maximize)

    def with_objective(self, c) -> "LinearProgram":
        return LinearProgram(np.asarray(c, dtype=float), self.A, self.senses, self.rhs,
                             self.lb, self.ub, self.maximize)

    def with_bounds(self, lb=None, ub=None) -> "LinearProgram":
        return LinearProgram(self.c, self.A, self.senses, self.rhs,
                             self.lb if lb is None else np.asarray(lb, float),
                             self.ub if ub is None else np.asarray(ub, float), self.maximize)


@dataclass(frozen=True, eq=False)
class LpSolution:
    status: Status
    x: np.ndarray | None = None
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    objective: float = np.nan
    primal_residual: float = np.nan
    dual_residual: float = np.nan
    gap: float = np.nan
    farkas: np.ndarray | None = None
    backend: str = ""
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


class LpBuilder:
    """Incremental assembly of a sparse LP by named variable blocks."""

    def __init__(self):
        self._lb: list[np.ndarray] = []
        self._ub: list[np.ndarray] = []
        self._c: list[np.ndarray] = []
        self.n = 0
        self.rows: list[np.ndarray] = []
        self.cols: list[np.ndarray] = []
        self.vals: list[np.ndarray] = []
        self.senses: list[np.ndarray] = []
        self.rhs: list[np.ndarray] = []
        self.m = 0

    def add_vars(self, count: int, lb=0.0, ub=np.inf, cost=0.0) -> np.ndarray:
        idx = np.arange(self.n, self.n + count)
        self._lb.append(np.broadcast_to(np.asarray(lb, float), (count,)).copy())
        self._ub.append(np.broadcast_to(np.asarray(ub, float), (count,)).copy())
        self._c.append(np.broadcast_to(np.asarray(cost, float), (count,)).copy())
        self.n += count
        return idx

    def add_rows(self, rows, cols, vals, senses, rhs) -> np.ndarray:
        """Add rows given local row numbers ``0..k-1`` and global column indices."""
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        k = rhs.size
        self.rows.append(np.asarray(rows, int).reshape(-1) + self.m)
        self.cols.append(np.asarray(cols, int).reshape(-1))
        self.vals.append(np.asarray(vals, float).reshape(-1))
        self.senses.append(np.broadcast_to(np.asarray(senses, dtype="<U1"), (k,)).copy())
        self.rhs.append(rhs)
        idx = np.arange(self.m, self.m + k)
        self.m += k
        return idx

    def build(self, maximize: bool = False) -> LinearProgram:
        cat = lambda parts, dt=float: np.concatenate(parts) if parts else np.zeros(0, dt)
        vals = cat(self.vals)
        keep = vals != 0.0
        return LinearProgram.from_triplets(
            cat(self._c), cat(self.rows, int)[keep], cat(self.cols, int)[keep], vals[keep],
            cat(self.senses, "<U1") if self.senses else np.zeros(0, "<U1"), cat(self.rhs),
            cat(self._lb), cat(self._ub), maximize)


# --------------------------------------------------------------------------
# certificates


def _min_form(lp: LinearProgram, x, y):
    sgn = -1.0 if lp.maximize else 1.0
    return sgn * lp.c, sgn * y


def residuals(lp: LinearProgram, x: np.ndarray, y: np.ndarray) -> tuple[float, float, float, float]:
    """Primal residual, dual residual, duality gap and complementarity violation."""
    c, ymin = _min_form(lp, x, y)
    ax = lp.A @ x
    viol = np.zeros(lp.shape[0])
    le, ge, eq = lp.senses == LE, lp.senses == GE, lp.senses == EQ
    viol[le] = np.maximum(ax[le] - lp.rhs[le], 0.0)
    viol[ge] = np.maximum(lp.rhs[ge] - ax[ge], 0.0)
    viol[eq] = np.abs(ax[eq] - lp.rhs[eq])
    bviol = np.maximum(np.maximum(lp.lb - x, x - lp.ub), 0.0)
    primal = float(max(viol.max(initial=0.0), bviol.max(initial=0.0)))

    dviol = np.zeros_like(ymin)
    dviol[le] = np.maximum(ymin[le], 0.0)
    dviol[ge] = np.maximum(-ymin[ge], 0.0)
    d = c - lp.A.T @ ymin
    pos, neg = np.maximum(d, 0.0), np.maximum(-d, 0.0)
    dcol = np.where(np.isinf(lp.lb), pos, 0.0) + np.where(np.isinf(lp.ub), neg, 0.0)
    dual = float(max(dviol.max(initial=0.0), dcol.max(initial=0.0)))

    lbf = np.where(np.isinf(lp.lb), 0.0, lp.lb)
    ubf = np.where(np.isinf(lp.ub), 0.0, lp.ub)
    dual_obj = lp.rhs @ ymin + pos @ lbf - neg @ ubf
    primal_obj = c @ x
    gap = float(abs(primal_obj - dual_obj))

    slack = ax - lp.rhs
    comp_rows = np.abs(ymin * np.where(eq, 0.0, slack))
    comp_cols = pos * np.where(np.isinf(lp.lb), 0.0, x - lbf) + neg * np.where(np.isinf(lp.ub), 0.0, ubf - x)
    comp = float(max(comp_rows.max(initial=0.0), np.abs(comp_cols).max(initial=0.0)))
    return primal, dual, gap, comp


def check_certificate(lp: LinearProgram, sol: LpSolution, tol: Tolerances = DEFAULT_TOL) -> bool:
    """Re-verify an optimal solution from scratch: feasibility, signs, gap, complementarity."""
    if sol.status is not Status.OPTIMAL or sol.x is None or sol.duals is None:
        return False
    primal, dual, gap, comp = residuals(lp, sol.x, sol.duals)
    obj = float(lp.c @ sol.x)
    scale_b = 1.0 + np.abs(lp.rhs).max(initial=0.0)
    scale_c = 1.0 + np.abs(lp.c).max(initial=0.0)
    scale_o = 1.0 + abs(obj)
    return (primal <= tol.feasibility * scale_b
            and dual <= tol.feasibility * scale_c
            and gap <= tol.gap * scale_o
            and comp <= tol.gap * scale_o
            and abs(obj - sol.objective) <= tol.gap * scale_o)


def check_farkas(lp: LinearProgram, y: np.ndarray, tol: float = 1e-9) -> bool:
    """True if ``y`` proves the constraint system empty.

    For every feasible x, ``y'(Ax - b) >= 0`` under the min-form sign rules,
    so ``sup_box (A'y)'x < b'y`` is a contradiction.
    """
    le, ge = lp.senses == LE, lp.senses == GE
    if np.any(y[le] > tol) or np.any(y[ge] < -tol):
        return False
    g = lp.A.T @ y
    hi = np.where(g > 0, lp.ub, lp.lb)
    with np.errstate(invalid="ignore"):
        terms = np.where(np.abs(g) <= tol, 0.0, g * hi)
    if np.any(np.isinf(terms) & (terms > 0)):
        return False
    return float(terms.sum()) < float(lp.rhs @ y) - tol


# --------------------------------------------------------------------------
# HiGHS backend


def _solve_highs(lp: LinearProgram, tol: Tolerances) -> LpSolution:
    c = -lp.c if lp.maximize else lp.c
    le, ge, eq = lp.senses == LE, lp.senses == GE, lp.senses == EQ
    ineq = le | ge
    flip = np.where(ge, -1.0, 1.0)
    A_ub = (sp.diags(flip[ineq]) @ lp.A[ineq]).tocsr() if ineq.any() else None
    b_ub = (flip * lp.rhs)[ineq] if ineq.any() else None
    A_eq = lp.A[eq] if eq.any() else None
    b_eq = lp.rhs[eq] if eq.any() else None
    bounds = np.column_stack([np.where(np.isinf(lp.lb), None, lp.lb),
                              np.where(np.isinf(lp.ub), None, lp.ub)])
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds,
                  method="highs-ds",
                  options={"primal_feasibility_tolerance": tol.feasibility * 1e-2,
                           "dual_feasibility_tolerance": tol.feasibility * 1e-2})
    if res.status == 2:
        return LpSolution(Status.INFEASIBLE, farkas=_elastic_farkas(lp), backend="highs")
    if res.status == 3:
        return LpSolution(Status.UNBOUNDED, backend="highs")
    if res.status != 0:
        raise NumericalFailure(f"HiGHS: {res.message}")
    y = np.zeros(lp.shape[0])
    if ineq.any():
        y[ineq] = flip[ineq] * res.ineqlin.marginals
    if eq.any():
        y[eq] = res.eqlin.marginals
    if lp.maximize:
        y = -y
    return _finish(lp, np.asarray(res.x, float), y, "highs", int(res.nit))


def _elastic_farkas(lp: LinearProgram) -> np.ndarray:
    """Row multipliers proving infeasibility, from the duals of the elastic LP."""
    m, n = lp.shape
    eye = sp.identity(m, format="csr")
    A = sp.hstack([lp.A, eye, -eye]).tocsr()
    c = np.concatenate([np.zeros(n), np.ones(2 * m)])
    el = LinearProgram(c, A, lp.senses, lp.rhs, np.concatenate([lp.lb, np.zeros(2 * m)]),
                       np.concatenate([lp.ub, np.full(2 * m, np.inf)]))
    sol = _solve_highs(el, DEFAULT_TOL)
    return sol.duals


def _finish(lp, x, y, backend, nit) -> LpSolution:
    primal, dual, gap, _ = residuals(lp, x, y)
    d = lp.c - lp.A.T @ y
    return LpSolution(Status.OPTIMAL, x, y, d, float(lp.c @ x), primal, dual, gap,
                      backend=backend, iterations=nit)


def solution_from(lp: LinearProgram, x, y) -> LpSolution:
    """Wrap a candidate primal/dual pair (e.g. one found by hand) for ``check_certificate``."""
    return _finish(lp, np.asarray(x, float), np.asarray(y, float), "external", 0)


# --------------------------------------------------------------------------
# revised simplex backend


@dataclass
class _StandardForm:
    """``min c'x  s.t.  A x = b, x >= 0`` plus the map back to the caller's variables."""

    A: sp.csc_matrix
    b: np.ndarray
    c: np.ndarray
    n_orig_rows: int
    row_flip: np.ndarray
    # x_orig = offset + T @ x_std (T sparse, columns of structural variables only)
    T: sp.csr_matrix
    offset: np.ndarray
    slack_col: np.ndarray  # per row: column of a +1 slack usable as initial basis, or -1
    n_struct: int = 0
    const: float = 0.0


def _standardize(lp: LinearProgram) -> _StandardForm:
    m, n = lp.shape
    c = -lp.c if lp.maximize else lp.c.copy()
    A = lp.A.tocsc()
    lb, ub = lp.lb, lp.ub
    t_rows, t_cols, t_vals = [], [], []
    cols_A, cols_c = [], []
    offset = np.zeros(n)
    ub_rows = []  # (std col, bound)
    k = 0
    for j in range(n):
        a = A[:, j]
        if lb[j] == ub[j]:
            offset[j] = lb[j]
            continue
        if np.isfinite(lb[j]):
            offset[j] = lb[j]
            cols_A.append(a); cols_c.append(c[j])
            t_rows.append(j); t_cols.append(k); t_vals.append(1.0)
            if np.isfinite(ub[j]):
                ub_rows.append((k, ub[j] - lb[j]))
            k += 1
        elif np.isfinite(ub[j]):
            offset[j] = ub[j]
            cols_A.append(-a); cols_c.append(-c[j])
            t_rows.append(j); t_cols.append(k); t_vals.append(-1.0)
            k += 1
        else:
            cols_A.append(a); cols_c.append(c[j])
            cols_A.append(-a); cols_c.append(-c[j])
            t_rows += [j, j]; t_cols += [k, k + 1]; t_vals += [1.0, -1.0]
            k += 2
    n_struct = k
    b = lp.rhs - lp.A @ offset
    const = float(c @ offset)
    Astruct = sp.hstack(cols_A, format="csc") if cols_A else sp.csc_matrix((m, 0))
    # slack columns for inequality rows
    sl_r, sl_c, sl_v = [], [], []
    slack_of_row = np.full(m, -1)
    for i in range(m):
        if lp.senses[i] == EQ:
            continue
        sl_r.append(i); sl_c.append(len(sl_c)); sl_v.append(1.0 if lp.senses[i] == LE else -1.0)
    n_sl = len(sl_c)
    S = sp.csc_matrix((sl_v, (sl_r, sl_c)), shape=(m, n_sl))
    # upper-bound rows:  x_k + s = u
    nu = len(ub_rows)
    if nu:
        U = sp.csc_matrix((np.ones(nu), ([r for r in range(nu)], [kk for kk, _ in ub_rows])),
                          shape=(nu, n_struct))
        Us = sp.identity(nu, format="csc")
        top = sp.hstack([Astruct, S, sp.csc_matrix((m, nu))])
        bot = sp.hstack([U, sp.csc_matrix((nu, n_sl)), Us])
        Afull = sp.vstack([top, bot], format="csc")
        bfull = np.concatenate([b, [u for _, u in ub_rows]])
    else:
        Afull = sp.hstack([Astruct, S], format="csc")
        bfull = b
    mm = m + nu
    flip = np.where(bfull < 0, -1.0, 1.0)
    Afull = (sp.diags(flip) @ Afull).tocsc()
    bfull = flip * bfull
    cfull = np.concatenate([np.asarray(cols_c, float), np.zeros(n_sl + nu)])
    slack_col = np.full(mm, -1)
    for jj, (i, v) in enumerate(zip(sl_r, sl_v)):
        if v * flip[i] > 0:
            slack_col[i] = n_struct + jj
    for r in range(nu):
        if flip[m + r] > 0:
            slack_col[m + r] = n_struct + n_sl + r
    T = sp.csr_matrix((t_vals, (t_rows, t_cols)), shape=(n, Afull.shape[1]))
    return _StandardForm(Afull, bfull, cfull, m, flip, T, offset, slack_col, n_struct, const)


class _Simplex:
    """Revised simplex on ``min c'x, Ax = b, x >= 0`` with an explicit basis inverse.

    Artificial columns live at indices ``>= n`` and are bounded in ``[0, 0]``
    once phase 1 ends, so redundant rows need no special handling.
    """

    def __init__(self, A: sp.csc_matrix, b: np.ndarray, tol: Tolerances, bland: bool = False):
        self.m, self.n = A.shape
        self.A = A
        self.b = b
        self.tol = tol
        self.always_bland = bland
        self.iterations = 0

    def column(self, j):
        if j < self.n:
            col = np.zeros(self.m)
            s, e = self.A.indptr[j], self.A.indptr[j + 1]
            col[self.A.indices[s:e]] = self.A.data[s:e]
            return col
        col = np.zeros(self.m)
        col[self.art_row[j - self.n]] = 1.0
        return col

    def refactor(self):
        B = np.column_stack([self.column(j) for j in self.basis]) if self.m else np.zeros((0, 0))
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure("singular basis") from exc
        self.xB = self.Binv @ self.b
        self.since_refactor = 0

    def run(self, cost_full: np.ndarray, allow_art_entering: bool) -> str:
        """Iterate to optimality. Returns "optimal" or "unbounded"."""
        tol = self.tol
        degenerate_run = 0
        bland = self.always_bland
        AT = self.A.T.tocsr()
        while True:
            if self.iterations >= tol.max_iter:
                raise NumericalFailure("iteration limit")
            if self.since_refactor >= tol.refactor_every:
                self.refactor()
            cB = cost_full[self.basis]
            y = cB @ self.Binv
            d = cost_full[: self.n] - AT @ y
            d[self.in_basis[: self.n]] = 0.0
            if allow_art_entering:
                d_art = cost_full[self.n:] - y[self.art_row]
                d_art[self.in_basis[self.n:]] = 0.0
                d = np.concatenate([d, d_art])
            cand = np.flatnonzero(d < -tol.pivot * (1.0 + np.abs(cost_full[: d.size])))
            if cand.size == 0:
                self.y = y
                return "optimal"
            q = int(cand[0]) if bland else int(cand[np.argmin(d[cand])])
            w = self.Binv @ self.column(q)
            is_art = self.basis >= self.n
            pos = w > tol.pivot
            blocked_art = is_art & (np.abs(w) > tol.pivot) & (not allow_art_entering)
            ratios = np.full(self.m, np.inf)
            ratios[pos] = np.maximum(self.xB[pos], 0.0) / w[pos]
            ratios[blocked_art] = 0.0
            if not np.isfinite(ratios).any():
                self.ray_col = q
                return "unbounded"
            theta = ratios.min()
            ties = np.flatnonzero(ratios <= theta + tol.pivot * (1.0 + theta))
            if bland:
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                r = int(ties[np.argmax(np.abs(w[ties]))])
            theta = ratios[r]
            degenerate_run = degenerate_run + 1 if theta <= tol.pivot else 0
            if not self.always_bland:
                bland = degenerate_run >= tol.degenerate_before_bland
            self.pivot(r, q, w, theta)

    def pivot(self, r, q, w, theta):
        self.xB = self.xB - theta * w
        self.xB[r] = theta
        piv = w[r]
        row_r = self.Binv[r] / piv
        self.Binv -= np.outer(w, row_r)
        self.Binv[r] = row_r
        self.in_basis[self.basis[r]] = False
        self.basis[r] = q
        self.in_basis[q] = True
        self.iterations += 1
        self.since_refactor += 1

    def solve_phases(self, c: np.ndarray, slack_col: np.ndarray) -> tuple[str, np.ndarray | None]:
        m = self.m
        need_art = slack_col < 0
        self.art_row = np.flatnonzero(need_art)
        n_art = self.art_row.size
        self.basis = np.where(need_art, -1, slack_col)
        self.basis[self.art_row] = self.n + np.arange(n_art)
        self.in_basis = np.zeros(self.n + n_art, dtype=bool)
        self.in_basis[self.basis] = True
        self.refactor()
        phase1_y = None
        if n_art:
            c1 = np.concatenate([np.zeros(self.n), np.ones(n_art)])
            self.run(c1, allow_art_entering=True)
            infeas = float(c1[self.basis] @ self.xB)
            phase1_y = self.y
            if infeas > self.tol.feasibility * (1.0 + np.abs(self.b).max(initial=0.0)):
                return "infeasible", phase1_y
        c2 = np.concatenate([c, np.zeros(n_art)])
        status = self.run(c2, allow_art_entering=False)
        if status == "optimal":
            self.refactor()
            self.y = c2[self.basis] @ self.Binv
        return status, phase1_y


def _solve_simplex(lp: LinearProgram, tol: Tolerances) -> LpSolution:
    sf = _standardize(lp)
    last_exc = None
    for attempt, bland in enumerate((False, True)):
        sx = _Simplex(sf.A, sf.b, tol, bland=bland)
        try:
            status, y1 = sx.solve_phases(sf.c, sf.slack_col)
        except NumericalFailure as exc:
            last_exc = exc
            log.debug("simplex attempt %d failed: %s", attempt, exc)
            continue
        m0 = sf.n_orig_rows
        if status == "infeasible":
            farkas = (sf.row_flip * y1)[:m0]
            if lp.maximize:
                pass  # feasibility does not depend on the objective sense
            return LpSolution(Status.INFEASIBLE, farkas=farkas, backend="simplex",
                              iterations=sx.iterations)
        if status == "unbounded":
            return LpSolution(Status.UNBOUNDED, backend="simplex", iterations=sx.iterations)
        xs = np.zeros(sf.A.shape[1] + sx.art_row.size)
        xs[sx.basis] = sx.xB
        x = sf.offset + sf.T @ xs[: sf.A.shape[1]]
        x = np.clip(x, lp.lb, lp.ub)
        y = (sf.row_flip * sx.y)[:m0]
        if lp.maximize:
            y = -y
        sol = _finish(lp, x, y, "simplex", sx.iterations)
        if check_certificate(lp, sol, tol):
            return sol
        last_exc = NumericalFailure(
            f"certificate rejected (primal {sol.primal_residual:.2e}, dual {sol.dual_residual:.2e}, "
            f"gap {sol.gap:.2e})")
    raise NumericalFailure(str(last_exc))


def polish_vertex(lp: LinearProgram, sol: LpSolution, tol: Tolerances = DEFAULT_TOL) -> LpSolution:
    """Recompute an optimal vertex from its active constraints in extended precision.

    Variables sitting at a bound are pinned to it exactly; the rest solve the active
    rows by SVD with iterative refinement whose residuals are accumulated in
    ``longdouble``, so a vertex with exactly representable coordinates comes back
    exactly.  The original solution is kept when the active system does not pin the
    vertex down, is too large, or the refined point fails certification.
    """
    if not sol.optimal:
        return sol
    x = sol.x
    r = lp.A @ x - lp.rhs
    act = (lp.senses == EQ) | (np.abs(r) <= 1e-9 * (1.0 + np.abs(lp.rhs)))
    at_lb = np.isfinite(lp.lb) & (np.abs(x - lp.lb) <= 1e-9 * (1.0 + np.abs(lp.lb)))
    at_ub = ~at_lb & np.isfinite(lp.ub) & (np.abs(x - lp.ub) <= 1e-9 * (1.0 + np.abs(lp.ub)))
    xf = np.where(at_lb, lp.lb, np.where(at_ub, lp.ub, x))
    free = np.flatnonzero(~(at_lb | at_ub))
    if free.size > POLISH_MAX_VARS:
        return sol
    if free.size:
        sub = lp.A[np.flatnonzero(act)].tocoo()
        is_free = np.zeros(lp.shape[1], dtype=bool)
        is_free[free] = True
        pos = np.full(lp.shape[1], -1)
        pos[free] = np.arange(free.size)
        fc = is_free[sub.col]
        ld = np.longdouble
        b_eff = lp.rhs[act].astype(ld)
        np.add.at(b_eff, sub.row[~fc], -sub.data[~fc].astype(ld) * xf[sub.col[~fc]].astype(ld))
        rows, cols, vals = sub.row[fc], pos[sub.col[fc]], sub.data[fc].astype(ld)
        M = np.zeros((b_eff.size, free.size))
        M[rows, cols] = sub.data[fc]
        if M.shape[0] < free.size:
            return sol
        U, sv, Vt = np.linalg.svd(M, full_matrices=False)
        if sv.size == 0 or sv[-1] <= sv[0] * 1e-12:
            return sol
        z = x[free].astype(ld)
        for _ in range(4):
            res = b_eff.copy()
            np.add.at(res, rows, -vals * z[cols])
            z = z + Vt.T @ ((U.T @ res.astype(float)) / sv)
        xf = xf.copy()
        xf[free] = z.astype(float)
    cand = _finish(lp, xf, sol.duals, sol.backend, sol.iterations)
    return cand if check_certificate(lp, cand, tol) else sol


def solve(lp: LinearProgram, backend: str | None = None, tol: Tolerances = DEFAULT_TOL,
          polish: bool = False) -> LpSolution:
    """Solve ``lp``; deterministic for identical input and backend.

    ``polish`` recomputes the optimal vertex from its active set (see ``polish_vertex``).
    """
    backend = backend or DEFAULT_BACKEND
    if backend == "simplex":
        sol = _solve_simplex(lp, tol)
    elif backend == "highs":
        sol = _solve_highs(lp, tol)
    else:
        raise ValueError(f"unknown LP backend {backend!r}")
    return polish_vertex(lp, sol, tol) if polish else sol


# --------------------------------------------------------------------------
# MPS export


def to_mps(lp: LinearProgram, name: str = "TRIMDRO") -> str:
    """Fixed-format MPS text. Maximisation problems are exported negated."""
    m, n = lp.shape
    c = -lp.c if lp.maximize else lp.c
    rname = [f"R{i:07d}" for i in range(m)]
    cname = [f"C{j:07d}" for j in range(n)]
    tag = {LE: "L", EQ: "E", GE: "G"}

    def fmt(v):
        for digits in range(12, 0, -1):
            txt = f"{v:.{digits}g}"
            if len(txt) <= 12:
                return txt
        raise ValueError(v)

    out = [f"NAME          {name}", "ROWS", " N  COST"]
    out += [f" {tag[s]}  {r}" for s, r in zip(lp.senses, rname)]
    out.append("COLUMNS")
    A = lp.A.tocsc()
    for j in range(n):
        entries = [("COST", c[j])] if c[j] != 0 else []
        s, e = A.indptr[j], A.indptr[j + 1]
        entries += [(rname[i], v) for i, v in zip(A.indices[s:e], A.data[s:e])]
        if not entries:
            entries = [("COST", 0.0)]
        for rn, v in entries:
            out.append(f"    {cname[j]:<8}  {rn:<8}  {fmt(v):>12}")
    out.append("RHS")
    for i in np.flatnonzero(lp.rhs):
        out.append(f"    {'RHS':<8}  {rname[i]:<8}  {fmt(lp.rhs[i]):>12}")
    out.append("BOUNDS")
    for j in range(n):
        lo, hi = lp.lb[j], lp.ub[j]
        if lo == hi:
            out.append(f" FX {'BND':<8}  {cname[j]:<8}  {fmt(lo):>12}")
            continue
        if np.isinf(lo) and np.isinf(hi):
            out.append(f" FR {'BND':<8}  {cname[j]}")
            continue
        if np.isinf(lo):
            out.append(f" MI {'BND':<8}  {cname[j]}")
        elif lo != 0.0:
            out.append(f" LO {'BND':<8}  {cname[j]:<8}  {fmt(lo):>12}")
        if np.isfinite(hi):
            out.append(f" UP {'BND':<8}  {cname[j]:<8}  {fmt(hi):>12}")
    out.append("ENDATA")
    return "\n".join(out) + "\n"
