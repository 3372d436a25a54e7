"""Comparator methods: KNN sample average, its Wasserstein-robust and ball-robust variants,
and plain SAA / Wasserstein DRO on the sample points that fall inside the event."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import lp
from .drotrim import JointModel
from .errors import EventNotSingleton, NoInteriorPoints, UnboundedDecision
from .loss import DecisionSet, PiecewiseBiAffineLoss
from .sample import ConditioningEvent, EmpiricalSample, event_distances, order_by_event_distance

# Projections computed by an LP may sit a rounding error away from the event; such
# a residual minimum budget is treated as zero.
PROJECTION_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class WeightedConditionalSample:
    points: np.ndarray
    weights: np.ndarray
    d_z: int = 0

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if pts.shape[0] != w.size or w.size == 0:
            raise ValueError("points and weights must be nonempty and of equal length")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must lie on the probability simplex")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    def as_sample(self) -> EmpiricalSample:
        """The equally weighted sample on these points (weights must be uniform)."""
        if not np.allclose(self.weights, self.weights[0], rtol=0, atol=1e-12):
            raise ValueError("only uniformly weighted samples convert to an empirical sample")
        return EmpiricalSample(self.points, self.d_z, self.points.shape[1] - self.d_z)


def knn_rule(n: int, rule: str = "n_log") -> int:
    """Neighbour counts ``floor(N/log(N+1))``, ``floor(N^0.9)`` or ``floor(sqrt N)``."""
    if rule == "n_log":
        k = int(np.floor(n / np.log(n + 1)))
    elif rule == "n_pow":
        k = int(np.floor(n ** 0.9))
    elif rule == "sqrt":
        k = int(np.floor(np.sqrt(n)))
    else:
        raise ValueError(f"unknown neighbour rule {rule!r}")
    return min(max(k, 1), n)


def knn_weights(sample: EmpiricalSample, event: ConditioningEvent, K: int) -> WeightedConditionalSample:
    """Uniform weights on the K event-nearest points, each moved to its projection."""
    if not 1 <= K <= sample.n:
        raise ValueError("K must lie in 1..N")
    order, _ = order_by_event_distance(sample, event)
    _, proj = event_distances(sample, event)
    return WeightedConditionalSample(proj[order[:K]], np.full(K, 1.0 / K), sample.d_z)


def expected_loss(x, loss: PiecewiseBiAffineLoss, wcs: WeightedConditionalSample) -> float:
    return float(wcs.weights @ loss.evaluate(x, wcs.points))


def _epigraph(wcs, loss, decisions, epsilon=0.0, y_block=None):
    """min sum_i w_i t_i  s.t.  t_i >= g_k(x, xi_i) + epsilon * s_k,
    s_k >= |a_k(x)_j| for j in ``y_block``."""
    B = lp.LpBuilder()
    ix = decisions.add_to(B)
    pts, w = wcs.points, wcs.weights
    M, K = pts.shape[0], loss.n_pieces
    it = B.add_vars(M, lb=-np.inf, cost=w)
    isk = B.add_vars(K) if epsilon > 0 else None
    for k in range(K):
        xcoef = pts @ loss.A[k] + loss.c[k]
        rr, cc = np.nonzero(xcoef)
        rows, cols, vals = [np.arange(M), rr], [it, ix[cc]], [np.ones(M), -xcoef[rr, cc]]
        if isk is not None:
            rows.append(np.arange(M)); cols.append(np.full(M, isk[k])); vals.append(np.full(M, -epsilon))
            for j in y_block:
                xc = np.flatnonzero(loss.A[k, j])
                r = np.zeros(xc.size + 1, int)
                c = np.r_[ix[xc], isk[k]]
                B.add_rows(r, c, np.r_[loss.A[k, j, xc], -1.0], lp.LE, -loss.b[k, j])
                B.add_rows(r, c, np.r_[loss.A[k, j, xc], 1.0], lp.GE, -loss.b[k, j])
        B.add_rows(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), lp.GE,
                   pts @ loss.b[k] + loss.d0[k])
    sol = lp.solve(B.build(), polish=True)
    if sol.status is lp.Status.UNBOUNDED:
        raise UnboundedDecision("sample-average objective is unbounded below")
    if not sol.optimal:
        raise lp.LpError(f"sample-average LP ended {sol.status.value}")
    return sol.x[ix].copy(), float(sol.objective)


def saa_solve(wcs: WeightedConditionalSample, loss: PiecewiseBiAffineLoss,
              decisions: DecisionSet) -> tuple[np.ndarray, float]:
    """Minimise the weighted sample-average loss."""
    return _epigraph(wcs, loss, decisions)


def knn_saa_solve(sample, event, K, loss, decisions):
    return saa_solve(knn_weights(sample, event, K), loss, decisions)


def knndro_model(sample, event, K, loss, decisions) -> JointModel:
    """Wasserstein-ball model (no trimming) around the projected K nearest neighbours."""
    nominal = knn_weights(sample, event, K).as_sample()
    return JointModel(nominal, event, 1.0, loss, decisions)


def _nominal_budget(model: JointModel, radius: float) -> float:
    return max(radius, model.floor) if model.floor <= PROJECTION_SLACK else radius


def knndro_solve(sample, event, K, radius, loss, decisions) -> tuple[np.ndarray, float]:
    model = knndro_model(sample, event, K, loss, decisions)
    sol = model.solve(_nominal_budget(model, radius))
    return sol.x_hat, sol.J_hat


def knnrobust_solve(sample, event, K, epsilon, loss, decisions) -> tuple[np.ndarray, float]:
    """Average over the K neighbours of the worst loss in an l1 ball of radius ``epsilon``
    around each neighbour's outcome, with the feature held at the conditioning value."""
    if event.singleton_center is None:
        raise EventNotSingleton("the ball-robust KNN method needs an event of the form {z = z*}")
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    wcs = knn_weights(sample, event, K)
    return _epigraph(wcs, loss, decisions, epsilon, range(sample.d_z, sample.d))


def interior_sample(sample: EmpiricalSample, event: ConditioningEvent) -> EmpiricalSample:
    dist, _ = event_distances(sample, event)
    inside = np.flatnonzero(dist == 0.0)
    if inside.size == 0:
        raise NoInteriorPoints("no sample point lies inside the event")
    return sample.take(inside)


def saadro_model(sample, event, loss, decisions) -> JointModel:
    return JointModel(interior_sample(sample, event), event, 1.0, loss, decisions)


def saadro_solve(sample, event, radius, loss, decisions) -> tuple[np.ndarray, float]:
    sol = saadro_model(sample, event, loss, decisions).solve(radius)
    return sol.x_hat, sol.J_hat


def saa_interior_solve(sample, event, loss, decisions) -> tuple[np.ndarray, float]:
    inner = interior_sample(sample, event)
    return saa_solve(WeightedConditionalSample(inner.points, np.full(inner.n, 1.0 / inner.n),
                                               sample.d_z), loss, decisions)
