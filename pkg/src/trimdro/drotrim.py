"""Distributionally robust optimisation over Wasserstein balls around trimmed empirical measures.

The worst-case expectation over all distributions on the event within transport
budget ``rho`` of some (1-alpha)-trimming of the sample is dualised into one LP:

    min  lambda*rho + theta + cap * sum_i mu_i
    s.t. mu_i + theta >= sup_{xi in event} g_k(x, xi) - lambda ||xi - xi_i||_1    for all i, k
         x in X, lambda >= 0, mu >= 0

with ``cap = 1/(N alpha)``.  Each inner supremum is replaced by its LP dual in
multipliers ``eta_ik`` of the event constraints ``H xi <= h``:

    ||a_k(x) - H^T eta_ik||_inf <= lambda,
    mu_i + theta >= <eta_ik, h - H xi_i> + <a_k(x), xi_i> + <c_k, x> + d_k.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import lp
from .errors import (DegenerateAtom, DimensionMismatch, InfeasibleBudget, UnboundedDecision,
                     UnsupportedCase)
from .loss import DecisionSet, PiecewiseBiAffineLoss
from .sample import (ConditioningEvent, EmpiricalSample, TrimmedAmbiguitySpec, event_distances,
                     minimum_transport_budget, trimming_cap)

log = logging.getLogger(__name__)

GAMMA_FLOOR = 1e-9
BUDGET_TOL = 1e-12
# displacement cap (relative to data spread plus budget) tried when atoms degenerate
REACH_FACTOR = 1e3


@dataclass(frozen=True, eq=False)
class DroProblem:
    sample: EmpiricalSample
    event: ConditioningEvent
    spec: TrimmedAmbiguitySpec
    loss: PiecewiseBiAffineLoss
    decisions: DecisionSet

    def __post_init__(self):
        if not (self.sample.d == self.event.d == self.loss.d):
            raise DimensionMismatch("sample, event and loss dimensions differ")
        if self.decisions.n != self.loss.n:
            raise DimensionMismatch("decision set and loss disagree on the decision dimension")
        if self.spec.p != 1:
            raise UnsupportedCase("the LP reformulation covers transport order p = 1 only")
        check_budget(self.sample, self.event, self.spec.alpha, self.spec.rho)

    @classmethod
    def build(cls, sample, event, loss, decisions, alpha, rho=None, excess=None) -> "DroProblem":
        spec = TrimmedAmbiguitySpec.build(sample, event, alpha, rho=rho, excess=excess)
        return cls(sample, event, spec, loss, decisions)


def check_budget(sample, event, alpha, rho) -> float:
    floor = minimum_transport_budget(sample, event, alpha, 1.0)
    if rho < floor - BUDGET_TOL * (1.0 + floor):
        raise InfeasibleBudget(f"rho={rho!r} is below the minimum transport budget {floor!r}")
    return floor


@dataclass(frozen=True, eq=False)
class DroSolution:
    x_hat: np.ndarray
    J_hat: float
    lambda_: float
    theta: float
    mu_bar: np.ndarray
    eta: np.ndarray  # (N, K, m)
    status: lp.Status
    rho: float
    alpha: float

    def dual_objective(self) -> float:
        cap = trimming_cap(self.mu_bar.size, self.alpha)
        extra = cap * self.mu_bar.sum() if np.isfinite(cap) else 0.0
        return self.lambda_ * self.rho + self.theta + extra

    def to_dict(self, worst_case: "WorstCaseDistribution | None" = None) -> dict:
        doc = {"x_hat": self.x_hat.tolist(), "J_hat": self.J_hat, "lambda": self.lambda_,
               "theta": self.theta, "mu_bar": self.mu_bar.tolist(), "worst_case": []}
        if worst_case is not None:
            doc["worst_case"] = [{"w": float(w), "xi": p.tolist(), "i": int(i), "k": int(k)}
                                 for w, p, i, k in zip(worst_case.weights, worst_case.points,
                                                       worst_case.source, worst_case.piece)]
        return doc

    def to_json(self, worst_case=None) -> str:
        return json.dumps(self.to_dict(worst_case))


class JointModel:
    """The joint LP for fixed (sample, event, alpha, loss, decisions); ``rho`` enters only
    as the cost of ``lambda`` so the assembled matrix is shared across budgets."""

    def __init__(self, sample: EmpiricalSample, event: ConditioningEvent, alpha: float,
                 loss: PiecewiseBiAffineLoss, decisions: DecisionSet):
        if not (sample.d == event.d == loss.d) or decisions.n != loss.n:
            raise DimensionMismatch("inconsistent problem dimensions")
        self.sample, self.event, self.alpha = sample, event, alpha
        self.loss, self.decisions = loss, decisions
        self.floor = minimum_transport_budget(sample, event, alpha, 1.0)
        self._assemble()

    @classmethod
    def of(cls, problem: DroProblem) -> "JointModel":
        return cls(problem.sample, problem.event, problem.spec.alpha, problem.loss, problem.decisions)

    def _assemble(self):
        S, E, L = self.sample, self.event, self.loss
        N, K, d, m = S.n, L.n_pieces, S.d, E.m
        cap = trimming_cap(N, self.alpha)
        self.cap = cap
        self.use_mu = bool(np.isfinite(cap) and cap < 1.0)
        B = lp.LpBuilder()
        self.ix = self.decisions.add_to(B)
        self.ilam = B.add_vars(1)[0]
        self.itheta = B.add_vars(1, lb=-np.inf, cost=1.0)[0]
        self.imu = B.add_vars(N, cost=cap) if self.use_mu else np.zeros(0, int)
        eta_lb = np.where(E.is_eq, -np.inf, 0.0)
        self.ieta = B.add_vars(N * K * m, lb=np.tile(eta_lb, N * K)).reshape(N, K, m)

        coupled = np.any(E.H != 0.0, axis=0)
        xi = S.points
        for k in range(K):
            Ak = L.A[k]
            for j in range(d):
                xc = np.flatnonzero(Ak[j])
                if coupled[j]:
                    hr = np.flatnonzero(E.H[:, j])
                    nr = N
                    rows = [np.repeat(np.arange(N), xc.size), np.repeat(np.arange(N), hr.size),
                            np.arange(N)]
                    cols = [np.tile(self.ix[xc], N), self.ieta[:, k, hr].reshape(-1),
                            np.full(N, self.ilam)]
                    vals_x = np.tile(Ak[j, xc], N)
                    vals_eta = np.tile(-E.H[hr, j], N)
                else:
                    if xc.size == 0 and L.b[k, j] == 0.0:
                        continue
                    nr = 1
                    rows = [np.zeros(xc.size, int), np.zeros(0, int), np.zeros(1, int)]
                    cols = [self.ix[xc], np.zeros(0, int), np.array([self.ilam])]
                    vals_x, vals_eta = Ak[j, xc], np.zeros(0)
                rhs = np.full(nr, -L.b[k, j])
                r, c = np.concatenate(rows), np.concatenate(cols)
                B.add_rows(r, c, np.concatenate([vals_x, vals_eta, np.full(nr, -1.0)]), lp.LE, rhs)
                B.add_rows(r, c, np.concatenate([vals_x, vals_eta, np.full(nr, 1.0)]), lp.GE, rhs)

            # epigraph rows, one per sample point
            xcoef = xi @ Ak + L.c[k]  # (N, n)
            slack = E.h[None, :] - xi @ E.H.T  # (N, m)
            rr, cc = np.nonzero(xcoef)
            er, ec = np.nonzero(slack)
            rows = [np.arange(N), rr, er]
            cols = [np.full(N, self.itheta), self.ix[cc], self.ieta[er, k, ec]]
            vals = [np.ones(N), -xcoef[rr, cc], -slack[er, ec]]
            if self.use_mu:
                rows.append(np.arange(N)); cols.append(self.imu); vals.append(np.ones(N))
            B.add_rows(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), lp.GE,
                       xi @ L.b[k] + L.d0[k])
        self.lp = B.build()

    def program(self, rho: float, x=None) -> lp.LinearProgram:
        """The joint LP at budget ``rho``; with ``x`` given the decision is pinned."""
        c = self.lp.c.copy()
        c[self.ilam] = rho
        prog = self.lp.with_objective(c)
        if x is not None:
            x = np.asarray(x, dtype=float)
            lb, ub = prog.lb.copy(), prog.ub.copy()
            lb[self.ix] = ub[self.ix] = x
            prog = prog.with_bounds(lb, ub)
        return prog

    def solve(self, rho: float, x=None, backend: str | None = None,
              polish: bool = True) -> DroSolution:
        if rho < self.floor - BUDGET_TOL * (1.0 + self.floor):
            raise InfeasibleBudget(f"rho={rho!r} is below the minimum transport budget {self.floor!r}")
        sol = lp.solve(self.program(rho, x), backend=backend, polish=polish)
        if sol.status is lp.Status.UNBOUNDED:
            raise UnboundedDecision("the robust objective is unbounded below over the decision set")
        if not sol.optimal:
            raise lp.LpError(f"joint LP ended {sol.status.value}")
        v = sol.x
        mu = v[self.imu] if self.use_mu else np.zeros(self.sample.n)
        return DroSolution(v[self.ix].copy(), float(sol.objective), float(v[self.ilam]),
                           float(v[self.itheta]), mu, v[self.ieta], sol.status, float(rho), self.alpha)


def assemble_joint_lp(problem: DroProblem) -> lp.LinearProgram:
    return JointModel.of(problem).program(problem.spec.rho)


def solve(problem: DroProblem, backend: str | None = None) -> DroSolution:
    return JointModel.of(problem).solve(problem.spec.rho, backend=backend)


def worst_case_value(problem: DroProblem, x, backend: str | None = None) -> float:
    """Worst-case expected loss at a fixed decision (the joint LP with ``x`` pinned)."""
    return JointModel.of(problem).solve(problem.spec.rho, x=x, backend=backend).J_hat


@dataclass(frozen=True, eq=False)
class WorstCaseDistribution:
    weights: np.ndarray
    points: np.ndarray
    source: np.ndarray
    piece: np.ndarray
    objective: float
    degenerate: list = field(default_factory=list)

    def expectation(self, loss: PiecewiseBiAffineLoss, x) -> float:
        return float(self.weights @ loss.evaluate(x, self.points)) if self.weights.size else 0.0

    def violations(self, problem: DroProblem, tol: float = 1e-8) -> list[str]:
        """Names of the invariants that fail (empty when the distribution is admissible)."""
        out = []
        if abs(self.weights.sum() - 1.0) > tol:
            out.append("total mass")
        cap = trimming_cap(problem.sample.n, problem.spec.alpha)
        per_src = np.bincount(self.source, weights=self.weights, minlength=problem.sample.n)
        if np.any(per_src > cap + 1e-10):
            out.append("trimming cap")
        for p in self.points:
            r = problem.event.H @ p - problem.event.h
            eq = problem.event.is_eq
            if np.any(r[~eq] > tol) or np.any(np.abs(r[eq]) > tol):
                out.append("event membership")
                break
        moved = np.abs(self.points - problem.sample.points[self.source]).sum(axis=1)
        if self.weights @ moved > problem.spec.rho + tol:
            out.append("transport budget")
        return out


def _worst_case_lp(problem: DroProblem, x: np.ndarray, reach: float | None):
    """The worst-case LP in ``(gamma, q+, q-)``; ``reach`` caps each atom's displacement
    ``||q_ik||_1 <= reach * gamma_ik`` (``None``: uncapped)."""
    S, E, L = problem.sample, problem.event, problem.loss
    N, K, d, m = S.n, L.n_pieces, S.d, E.m
    a = L.slopes(x)
    const = L.offsets(x)
    B = lp.LpBuilder()
    gain = S.points @ a.T + const  # (N, K): g_k(x, xi_i)
    ig = B.add_vars(N * K, cost=gain.reshape(-1)).reshape(N, K)
    iqp = B.add_vars(N * K * d, cost=-np.tile(a, (N, 1)).reshape(-1)).reshape(N, K, d)
    iqm = B.add_vars(N * K * d, cost=np.tile(a, (N, 1)).reshape(-1)).reshape(N, K, d)
    B.add_rows(np.zeros(2 * N * K * d, int), np.r_[iqp.reshape(-1), iqm.reshape(-1)],
               np.ones(2 * N * K * d), lp.LE, problem.spec.rho)
    B.add_rows(np.zeros(N * K, int), ig.reshape(-1), np.ones(N * K), lp.EQ, 1.0)
    cap = trimming_cap(N, problem.spec.alpha)
    if np.isfinite(cap) and cap < 1.0:
        B.add_rows(np.repeat(np.arange(N), K), ig.reshape(-1), np.ones(N * K), lp.LE, np.full(N, cap))
    if reach is not None:
        r = np.arange(N * K)
        B.add_rows(np.r_[np.repeat(r, 2 * d), r],
                   np.r_[np.c_[iqp.reshape(N * K, d), iqm.reshape(N * K, d)].reshape(-1), ig.reshape(-1)],
                   np.r_[np.ones(2 * d * N * K), np.full(N * K, -reach)], lp.LE, np.zeros(N * K))
    if m:
        senses = np.where(E.is_eq, lp.EQ, lp.LE)
        hr, hc = np.nonzero(E.H)
        hv = E.H[hr, hc]
        coef_g = S.points @ E.H.T - E.h  # (N, m)
        for i in range(N):
            for k in range(K):
                gr = np.flatnonzero(coef_g[i])
                rows = np.r_[gr, hr, hr]
                cols = np.r_[np.full(gr.size, ig[i, k]), iqp[i, k, hc], iqm[i, k, hc]]
                vals = np.r_[coef_g[i, gr], -hv, hv]
                B.add_rows(rows, cols, vals, senses, np.zeros(m))
    return B.build(maximize=True), ig, iqp, iqm


def worst_case_distribution(problem: DroProblem, x, backend: str | None = None,
                            gamma_floor: float = GAMMA_FLOOR) -> WorstCaseDistribution:
    """Maximise the expected loss over atoms ``(gamma_ik, xi_i - q_ik / gamma_ik)``.

    ``q_ik`` is the mass-weighted displacement of source ``i`` for piece ``k``; the
    event constraint is imposed in perspective form ``H (gamma xi_i - q) <= gamma h``.
    The supremum may only be approached by vanishing mass sent arbitrarily far
    (``gamma -> 0`` with ``q`` fixed).  Such directions often tie with moving a
    positive-mass atom, so the LP is re-solved with displacements capped and that
    vertex is used whenever it attains the same value.  Remaining vanishing atoms
    that carry transport are dropped and reported as ``DegenerateAtom``.
    """
    x = np.asarray(x, dtype=float)
    S = problem.sample
    prog, ig, iqp, iqm = _worst_case_lp(problem, x, None)
    sol = lp.solve(prog, backend=backend)
    if not sol.optimal:
        raise lp.LpError(f"worst-case LP ended {sol.status.value}")
    gam = sol.x[ig]
    q = sol.x[iqp] - sol.x[iqm]
    if np.any((gam <= gamma_floor) & (np.abs(q).sum(axis=2) > 1e-9)):
        spread = np.abs(S.points - S.points.mean(axis=0)).sum(axis=1).max()
        reach = REACH_FACTOR * (1.0 + spread + problem.spec.rho * S.n)
        capped = lp.solve(_worst_case_lp(problem, x, reach)[0], backend=backend)
        if capped.optimal and capped.objective >= sol.objective - 1e-9 * (1.0 + abs(sol.objective)):
            sol = capped
            gam = sol.x[ig]
            q = sol.x[iqp] - sol.x[iqm]
    keep = gam > gamma_floor
    degenerate = []
    for i, k in zip(*np.nonzero(~keep)):
        qn = np.abs(q[i, k]).sum()
        if qn > 1e-9:
            degenerate.append((int(i), int(k), float(gam[i, k]), float(qn)))
    if degenerate:
        msg = f"{len(degenerate)} atom(s) with vanishing weight carry transport; dropped"
        log.warning(msg)
        warnings.warn(msg, DegenerateAtom, stacklevel=2)
    src, pc = np.nonzero(keep)
    pts = S.points[src] - q[src, pc] / gam[src, pc][:, None]
    return WorstCaseDistribution(gam[src, pc], pts, src, pc, float(sol.objective), degenerate)


# --------------------------------------------------------------------------
# brute-force oracles on a finite support grid


def _grid_inside(grid, event: ConditioningEvent, tol=1e-9):
    grid = np.atleast_2d(np.asarray(grid, float))
    if grid.shape[1] != event.d:
        raise DimensionMismatch("grid dimension differs from event")
    return grid, np.array([event.contains(g, tol) for g in grid], dtype=bool)


def _cost(a: np.ndarray, b: np.ndarray, p: float) -> np.ndarray:
    return np.abs(a[:, None, :] - b[None, :, :]).sum(axis=2) ** p


def solve_sp2_discrete(sample: EmpiricalSample, event_grid, alpha: float, rho: float,
                       loss: PiecewiseBiAffineLoss, x, event: ConditioningEvent | None = None,
                       p: float = 1.0, backend: str | None = None) -> float:
    """Worst-case expectation when the target distribution lives on ``event_grid``.

    One transport LP in the plan ``pi_ij`` from sample points to grid points whose
    row sums form a (1-alpha)-trimming.  Returns ``-inf`` if the grid cannot be
    reached within ``rho``.
    """
    grid = np.atleast_2d(np.asarray(event_grid, float))
    if event is not None:
        grid, inside = _grid_inside(grid, event)
        if not inside.all():
            raise ValueError("grid points must lie in the event")
    N, G = sample.n, grid.shape[0]
    B = lp.LpBuilder()
    pi = B.add_vars(N * G, cost=np.tile(loss.evaluate(x, grid), N)).reshape(N, G)
    B.add_rows(np.zeros(N * G, int), pi.reshape(-1), np.ones(N * G), lp.EQ, 1.0)
    B.add_rows(np.zeros(N * G, int), pi.reshape(-1), _cost(sample.points, grid, p).reshape(-1),
               lp.LE, rho)
    cap = trimming_cap(N, alpha)
    if np.isfinite(cap) and cap < 1.0:
        B.add_rows(np.repeat(np.arange(N), G), pi.reshape(-1), np.ones(N * G), lp.LE, np.full(N, cap))
    sol = lp.solve(B.build(maximize=True), backend=backend)
    if sol.status is lp.Status.INFEASIBLE:
        return -np.inf
    return float(sol.objective)


def solve_sp1_discrete(sample: EmpiricalSample, event_grid, alpha: float, rho: float,
                       loss: PiecewiseBiAffineLoss, x, event: ConditioningEvent,
                       outside_grid=None, p: float = 1.0, backend: str | None = None) -> float:
    """Conditional worst case over joint distributions with event mass exactly ``alpha``.

    The full distribution is transported from the sample at cost at most ``rho*alpha``;
    its restriction to the event lives on ``event_grid`` (plus the sample points inside
    the event) and the remainder on the sample points outside the event plus
    ``outside_grid``.  Returns ``-inf`` if no such distribution exists on the grids.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    grid, inside = _grid_inside(event_grid, event)
    if not inside.all():
        raise ValueError("event grid points must lie in the event")
    dist, _ = event_distances(sample, event)
    interior = sample.points[dist == 0.0]
    grid = np.vstack([grid, interior]) if interior.size else grid
    outer = sample.points[dist > 0.0]
    if outside_grid is not None:
        og, og_in = _grid_inside(outside_grid, event)
        if og_in.any():
            raise ValueError("outside grid points must lie outside the event")
        outer = np.vstack([outer, og])
    support = np.vstack([grid, outer])
    G, T = grid.shape[0], support.shape[0]
    N = sample.n
    B = lp.LpBuilder()
    gain = np.r_[loss.evaluate(x, grid) / alpha, np.zeros(T - G)]
    pi = B.add_vars(N * T, cost=np.tile(gain, N)).reshape(N, T)
    B.add_rows(np.repeat(np.arange(N), T), pi.reshape(-1), np.ones(N * T), lp.EQ, np.full(N, 1.0 / N))
    B.add_rows(np.zeros(N * G, int), pi[:, :G].reshape(-1), np.ones(N * G), lp.EQ, alpha)
    B.add_rows(np.zeros(N * T, int), pi.reshape(-1), _cost(sample.points, support, p).reshape(-1),
               lp.LE, rho * alpha)
    sol = lp.solve(B.build(maximize=True), backend=backend)
    if sol.status is lp.Status.INFEASIBLE:
        return -np.inf
    return float(sol.objective)
