"""Methods as parameterised solvers and the bootstrap reliability tuner."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .. import baselines as bl
from ..baselines import WeightedConditionalSample, expected_loss, knn_weights
from ..drotrim import JointModel
from ..errors import InsufficientData, NoInteriorPoints
from ..sample import EmpiricalSample, event_distances
from ..theory import alpha_hat_empirical
from .config import ExperimentConfig, Instance, MethodSpec

Solver = Callable[[object], tuple[np.ndarray, float]]


def out_of_sample(x, loss, proxy: WeightedConditionalSample) -> float:
    """Expected loss of ``x`` under the evaluation proxy."""
    return expected_loss(x, loss, proxy)


def interior_points(sample: EmpiricalSample, event) -> WeightedConditionalSample | None:
    dist, _ = event_distances(sample, event)
    inside = np.flatnonzero(dist == 0.0)
    if inside.size == 0:
        return None
    return WeightedConditionalSample(sample.points[inside], np.full(inside.size, 1.0 / inside.size),
                                     sample.d_z)


def prepare(method: MethodSpec, sample: EmpiricalSample, inst: Instance, K: int) -> Solver:
    """Per-sample set-up shared by every grid value; returns ``param -> (x, J_hat)``."""
    ev, loss, dec = inst.event, inst.loss, inst.decisions
    name = method.name
    if name == "DROTRIMM":
        if method.alpha is not None:
            alpha = float(method.alpha)
        elif inst.mode == "knn":
            alpha = K / sample.n
        else:
            alpha = alpha_hat_empirical(sample, ev)
        model = JointModel(sample, ev, alpha, loss, dec)

        def run(delta):
            sol = model.solve(model.floor + delta, polish=False)
            return sol.x_hat, sol.J_hat
        return run
    if name == "KNN":
        x, v = bl.knn_saa_solve(sample, ev, K, loss, dec)
        return lambda _p: (x, v)
    if name == "KNNDRO":
        model = bl.knndro_model(sample, ev, K, loss, dec)

        def run(rho):
            sol = model.solve(bl._nominal_budget(model, rho), polish=False)
            return sol.x_hat, sol.J_hat
        return run
    if name == "KNNROBUST":
        return lambda eps: bl.knnrobust_solve(sample, ev, K, eps, loss, dec)
    if name == "SAA":
        x, v = bl.saa_interior_solve(sample, ev, loss, dec)
        return lambda _p: (x, v)
    if name == "SAADRO":
        model = bl.saadro_model(sample, ev, loss, dec)

        def run(rho):
            sol = model.solve(rho, polish=False)
            return sol.x_hat, sol.J_hat
        return run
    raise ValueError(f"unknown method {name!r}")


def validation_set(sample: EmpiricalSample, oob: np.ndarray, inst: Instance,
                   cfg: ExperimentConfig) -> WeightedConditionalSample | None:
    """Out-of-resample validation data: nearest-to-event points (projected) when the
    event has probability zero, points inside the event otherwise."""
    if oob.size == 0:
        return None
    held = sample.take(oob)
    if inst.mode == "knn":
        return knn_weights(held, inst.event, cfg.k_for(held.n))
    return interior_points(held, inst.event)


@dataclass
class TuneResult:
    param: object
    x: np.ndarray
    J_hat: float
    fallback: bool
    n_resamples: int
    pass_counts: dict = field(default_factory=dict)
    mean_validation: dict = field(default_factory=dict)


def bootstrap_tune(method: MethodSpec, sample: EmpiricalSample, inst: Instance,
                   cfg: ExperimentConfig, K: int, rng: np.random.Generator) -> TuneResult:
    """Pick the grid value whose certificate covers validation performance in at least
    ``(1 - beta)`` of the usable resamples and that has the best mean validation loss;
    then re-solve on the full sample."""
    grid = list(method.grid)
    N = sample.n
    passes = {i: 0 for i in range(len(grid))}
    val_sum = {i: 0.0 for i in range(len(grid))}
    used = 0
    if len(grid) > 1:
        for _ in range(cfg.kboot):
            idx = rng.integers(0, N, size=N)
            oob = np.setdiff1d(np.arange(N), idx)
            val = validation_set(sample, oob, inst, cfg)
            if val is None:
                continue
            train = sample.take(np.sort(idx))
            try:
                solver = prepare(method, train, inst, inst_k(cfg, inst, train.n, K))
            except NoInteriorPoints:
                continue
            used += 1
            for gi, param in enumerate(grid):
                x, jh = solver(param)
                jv = out_of_sample(x, inst.loss, val)
                val_sum[gi] += jv
                passes[gi] += int(jh >= jv)
        if used == 0:
            raise InsufficientData("no resample produced a usable validation set")
        need = (1.0 - cfg.beta) * used
        ok = [gi for gi in range(len(grid)) if passes[gi] >= need - 1e-9]
        if ok:
            best = min(ok, key=lambda gi: (val_sum[gi], gi))
            fallback = False
        else:
            best = int(np.argmax([-np.inf if g is None else g for g in grid]))
            fallback = True
    else:
        best, fallback = 0, False
    x, jh = prepare(method, sample, inst, K)(grid[best])
    return TuneResult(grid[best], x, jh, fallback, used,
                      {grid[g]: passes[g] for g in passes},
                      {grid[g]: val_sum[g] / used for g in val_sum} if used else {})


def inst_k(cfg: ExperimentConfig, inst: Instance, n: int, K_full: int) -> int:
    """Neighbour count for a training set of size ``n``; a tuned K is reused as is."""
    return min(K_full, n) if cfg.k_rule == "tuned" else cfg.k_for(n)


def tune_k(sample: EmpiricalSample, inst: Instance, cfg: ExperimentConfig,
           rng: np.random.Generator) -> int:
    """Neighbour count from ``k_grid`` with the best mean validation loss of plain KNN."""
    cands = [k for k in cfg.k_grid if 1 <= k <= sample.n] or [cfg.k_for(sample.n)]
    scores = np.zeros(len(cands))
    used = 0
    for _ in range(cfg.kboot):
        idx = rng.integers(0, sample.n, size=sample.n)
        oob = np.setdiff1d(np.arange(sample.n), idx)
        val = validation_set(sample, oob, inst, cfg)
        if val is None:
            continue
        train = sample.take(np.sort(idx))
        used += 1
        for ci, k in enumerate(cands):
            x, _ = bl.knn_saa_solve(train, inst.event, min(k, train.n), inst.loss, inst.decisions)
            scores[ci] += out_of_sample(x, inst.loss, val)
    return cands[int(np.argmin(scores))] if used else cands[0]

