"""Replication loops, evaluation proxies, record emission and summaries."""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import gen
from ..baselines import WeightedConditionalSample, knn_rule, knn_weights, saa_solve
from ..errors import TrimDroError
from ..gen import rng_for
from .config import ExperimentConfig, Instance
from .tuning import bootstrap_tune, interior_points, out_of_sample, prepare, tune_k

log = logging.getLogger(__name__)

RECORD_COLUMNS = ("method", "N", "run", "K", "param", "x_hat", "J_hat", "J", "disappointment",
                  "fallback", "error")
SWEEP_COLUMNS = ("method", "N", "run", "param", "J_hat", "J")


@dataclass
class RunRecord:
    method: str
    N: int
    run: int
    K: int
    param: float | None
    x_hat: tuple
    J_hat: float
    J: float
    disappointment: float
    fallback: bool
    error: str = ""
    wall_time: float = 0.0

    def row(self) -> list:
        fmt = lambda v: "" if v is None else repr(float(v))
        return [self.method, self.N, self.run, self.K, fmt(self.param),
                " ".join(repr(float(v)) for v in self.x_hat), fmt(self.J_hat), fmt(self.J),
                fmt(self.disappointment), int(self.fallback), self.error]


def build_proxy(inst: Instance, run: int) -> WeightedConditionalSample:
    """Discrete stand-in for the conditional distribution given the event."""
    size = inst.proxy_size
    if inst.proxy_kind == "knn":
        fresh = inst.draw(size, "proxy", run)
        return knn_weights(fresh, inst.event, knn_rule(size, "n_log"))
    if inst.proxy_kind == "interior":
        fresh = inst.draw(size, "proxy", run)
        wcs = interior_points(fresh, inst.event)
        if wcs is None:
            raise TrimDroError("evaluation draw has no point inside the event")
        return wcs
    if inst.proxy_kind == "conditional":
        z = np.asarray(inst.spec.z_star, float)
        y = gen.sample_portfolio_given(inst.spec, z, size, inst.cfg.seed, "proxy", run)
        pts = np.c_[np.tile(z, (size, 1)), y]
        if inst.standardizer is not None:
            pts = (pts - inst.standardizer.loc) / inst.standardizer.scale
        return WeightedConditionalSample(pts, np.full(size, 1.0 / size), inst.d_z)
    raise ValueError(f"unknown proxy kind {inst.proxy_kind!r}")


def _cell(args) -> tuple[list[RunRecord], dict]:
    cfg, N, run = args
    inst = Instance(cfg)
    proxy = build_proxy(inst, run)
    sample = inst.draw(N, "train", N, run)
    K = (tune_k(sample, inst, cfg, rng_for(cfg.seed, "k", N, run)) if cfg.k_rule == "tuned"
         else cfg.k_for(N))
    out = []
    for m in cfg.methods:
        t0 = time.perf_counter()
        try:
            res = bootstrap_tune(m, sample, inst, cfg, K, rng_for(cfg.seed, "boot", N, run))
            J = out_of_sample(res.x, inst.loss, proxy)
            rec = RunRecord(m.label, N, run, K, res.param, tuple(res.x), res.J_hat, J, J - res.J_hat,
                            res.fallback)
        except (TrimDroError, ArithmeticError, ValueError) as exc:
            log.warning("run %d N=%d %s failed: %s", run, N, m.label, exc)
            rec = RunRecord(m.label, N, run, K, None, (), np.nan, np.nan, np.nan, False,
                            f"{type(exc).__name__}: {exc}")
        rec.wall_time = time.perf_counter() - t0
        out.append(rec)
    x_star, J_star = saa_solve(proxy, inst.loss, inst.decisions)
    return out, {"N": N, "run": run, "J_star": J_star, "x_star": list(map(float, x_star))}


def _map(fn, jobs, threads: int):
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, jobs))
    return [fn(j) for j in jobs]


def _pct(v: np.ndarray) -> dict:
    v = v[np.isfinite(v)]
    if v.size == 0:
        return {"mean": None, "p15": None, "p85": None}
    return {"mean": float(v.mean()), "p15": float(np.percentile(v, 15)),
            "p85": float(np.percentile(v, 85))}


def summarize(records: list[RunRecord], extras: list[dict]) -> dict:
    out: dict = {"methods": {}, "full_information": {}}
    for label in dict.fromkeys(r.method for r in records):
        per_n = {}
        for N in sorted({r.N for r in records}):
            rs = [r for r in records if r.method == label and r.N == N]
            J = np.array([r.J for r in rs], float)
            D = np.array([r.disappointment for r in rs], float)
            ok = np.isfinite(D)
            per_n[str(N)] = {"runs": len(rs), "errors": int((~ok).sum()),
                             "fallbacks": int(sum(r.fallback for r in rs)),
                             "J": _pct(J), "disappointment": _pct(D),
                             "J_hat": _pct(np.array([r.J_hat for r in rs], float)),
                             "frac_nonpositive_disappointment":
                                 float((D[ok] <= 0).mean()) if ok.any() else None}
        out["methods"][label] = per_n
    for N in sorted({e["N"] for e in extras}):
        js = np.array([e["J_star"] for e in extras if e["N"] == N])
        out["full_information"][str(N)] = _pct(js)
    return out


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> tuple[list[RunRecord], dict]:
    """All (N, run) cells, each tuning every method on a shared sample and proxy."""
    jobs = [(cfg, N, r) for N in cfg.N for r in range(cfg.runs)]
    results = _map(_cell, jobs, threads)
    records = [rec for recs, _ in results for rec in recs]
    records.sort(key=lambda r: (r.method, r.N, r.run))
    extras = [e for _, e in results]
    return records, summarize(records, extras)


def write_outputs(out_dir, records: list[RunRecord], summary: dict) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "records.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RECORD_COLUMNS)
        for r in records:
            w.writerow(r.row())
    with open(out / "timings.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("method", "N", "run", "wall_time"))
        for r in records:
            w.writerow((r.method, r.N, r.run, f"{r.wall_time:.6f}"))
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))


# --------------------------------------------------------------------------
# robustness-parameter sweep


def _sweep_cell(args) -> list[tuple]:
    cfg, N, run, grid = args
    inst = Instance(cfg)
    proxy = build_proxy(inst, run)
    sample = inst.draw(N, "train", N, run)
    K = cfg.k_for(N)
    rows = []
    for m in cfg.methods:
        params = grid if grid is not None else list(m.grid)
        try:
            solver = prepare(m, sample, inst, K)
        except TrimDroError as exc:
            log.warning("sweep run %d N=%d %s failed: %s", run, N, m.label, exc)
            continue
        for p in params:
            x, jh = solver(p)
            rows.append((m.label, N, run, p, jh, out_of_sample(x, inst.loss, proxy)))
    return rows


def run_sweep(cfg: ExperimentConfig, grid=None, threads: int = 1) -> tuple[list[tuple], dict]:
    """Out-of-sample value of every method at every grid value, without tuning."""
    jobs = [(cfg, N, r, grid) for N in cfg.N for r in range(cfg.runs)]
    rows = sorted((row for rs in _map(_sweep_cell, jobs, threads) for row in rs),
                  key=lambda t: (t[0], t[1], t[2], -np.inf if t[3] is None else t[3]))
    summary: dict = {}
    for label in dict.fromkeys(r[0] for r in rows):
        for N in sorted({r[1] for r in rows if r[0] == label}):
            sel = [r for r in rows if r[0] == label and r[1] == N]
            params = sorted({r[3] for r in sel}, key=lambda v: -np.inf if v is None else v)
            curve = [float(np.mean([r[5] for r in sel if r[3] == p])) for p in params]
            jhat = [float(np.mean([r[4] for r in sel if r[3] == p])) for p in params]
            span = max(curve) - min(curve)
            tail = abs(curve[-1] - curve[-2]) if len(curve) > 1 else 0.0
            summary.setdefault(label, {})[str(N)] = {
                "params": params, "mean_J": curve, "mean_J_hat": jhat, "range": span,
                "tail_change": tail,
                "tail_change_relative": (tail / span) if span > 0 else 0.0}
    return rows, summary


def write_sweep(out_dir, rows, summary) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([r[0], r[1], r[2], "" if r[3] is None else repr(float(r[3])),
                        repr(float(r[4])), repr(float(r[5]))])
    (out / "sweep_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
