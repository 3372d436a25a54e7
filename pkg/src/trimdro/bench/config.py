"""Experiment configuration: JSON document -> generator, loss, event, decisions, methods."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import gen
from ..baselines import knn_rule
from ..loss import DecisionSet, loss_from_config
from ..sample import ConditioningEvent

K_RULES = ("n_log", "n_pow", "sqrt", "tuned")
METHOD_NAMES = ("DROTRIMM", "KNN", "KNNDRO", "KNNROBUST", "SAA", "SAADRO")


def newsvendor_grid() -> list[float]:
    return [float(v) for v in np.linspace(0.0, 2.0, 30)]


def decade_grid(c_min: int = -2, c_max: int = 0) -> list[float]:
    vals = {round(b * 10.0 ** c, 12) for b in range(10) for c in range(c_min, c_max + 1)}
    return sorted(vals)


NAMED_GRIDS = {"newsvendor": newsvendor_grid, "decades": decade_grid,
               "decades3": lambda: decade_grid(-3, 0)}


def _grid(value) -> list:
    if value is None:
        return [None]
    if isinstance(value, str):
        return NAMED_GRIDS[value]()
    return [float(v) for v in value]


@dataclass(frozen=True)
class MethodSpec:
    name: str
    grid: tuple
    label: str
    alpha: float | None = None  # DROTRIMM only: fixed trimming level instead of the default

    @classmethod
    def from_doc(cls, doc) -> "MethodSpec":
        if isinstance(doc, str):
            doc = {"name": doc}
        name = doc["name"].upper()
        if name not in METHOD_NAMES:
            raise ValueError(f"unknown method {name!r}")
        default = None if name in ("KNN", "SAA") else "newsvendor"
        grid = tuple(_grid(doc.get("grid", default)))
        if not grid:
            raise ValueError(f"empty parameter grid for {name}")
        return cls(name, grid, doc.get("label", name), doc.get("alpha"))


@dataclass(frozen=True)
class ExperimentConfig:
    generator: dict
    loss: dict
    event: dict
    methods: tuple
    N: tuple
    runs: int = 10
    beta: float = 0.15
    kboot: int = 50
    k_rule: str = "n_log"
    k_grid: tuple = ()
    proxy_size: int | None = None
    proxy: str | None = None
    decisions: dict | None = None
    standardize: bool | None = None
    seed: int = 0
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if self.kboot < 1 or self.runs < 1:
            raise ValueError("kboot and runs must be positive")
        if not self.N or not self.methods:
            raise ValueError("N grid and method list must be nonempty")
        if self.k_rule not in K_RULES:
            raise ValueError(f"unknown K rule {self.k_rule!r}")
        if self.k_rule == "tuned" and not self.k_grid:
            raise ValueError("the tuned K rule needs a k_grid")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        return cls(generator=doc["generator"], loss=doc["loss"], event=doc.get("event", {"type": "singleton"}),
                   methods=tuple(MethodSpec.from_doc(m) for m in doc["methods"]),
                   N=tuple(int(n) for n in doc["N"]), runs=int(doc.get("runs", 10)),
                   beta=float(doc.get("beta", 0.15)), kboot=int(doc.get("kboot", 50)),
                   k_rule=doc.get("k_rule", "n_log"), k_grid=tuple(int(k) for k in doc.get("k_grid", ())),
                   proxy_size=doc.get("proxy_size"), proxy=doc.get("proxy"),
                   decisions=doc.get("decisions"), standardize=doc.get("standardize"),
                   seed=int(doc.get("seed", 0)), raw=doc)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def with_overrides(self, **kw) -> "ExperimentConfig":
        doc = dict(self.raw)
        doc.update({k: v for k, v in kw.items() if v is not None})
        return ExperimentConfig.from_dict(doc)

    def k_for(self, n: int) -> int:
        rule = "n_log" if self.k_rule == "tuned" else self.k_rule
        return knn_rule(n, rule)


class Instance:
    """Everything a run needs, resolved from the configuration."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        g = dict(cfg.generator)
        self.family = g.pop("family")
        if self.family == "newsvendor":
            self.spec = gen.NewsvendorMixture(**{k: tuple(v) if isinstance(v, list) else v
                                                 for k, v in g.items()})
            self.d_z, self.d_y = 1, 1
        elif self.family == "portfolio":
            conv = {k: tuple(map(tuple, v)) if k == "sqrt_cov" else
                    (tuple(tuple(p) for p in v) if k == "z_params" else tuple(v)) for k, v in g.items()}
            self.spec = gen.PortfolioCovariates(**conv)
            self.d_z, self.d_y = 3, len(self.spec.mu)
        else:
            raise ValueError(f"unknown generator family {self.family!r}")
        std = cfg.standardize if cfg.standardize is not None else self.family == "portfolio"
        self.standardizer = None
        if std:
            if self.family == "portfolio":
                self.standardizer = gen.Standardizer.from_moments(*self.spec.moments())
            else:
                self.standardizer = gen.Standardizer.from_moments(*gen.newsvendor_moments(self.spec))
        self.loss = loss_from_config(cfg.loss, self.d_z)
        self.decisions = DecisionSet.from_config(cfg.decisions, self.loss, cfg.loss)
        self.event = self._event(cfg.event)
        self.singleton = self.event.singleton_center is not None
        self.mode = "knn" if self.singleton else "interior"
        self.proxy_kind = cfg.proxy or ("interior" if self.mode == "interior" else
                                        "conditional" if self.family == "portfolio" else "knn")
        default_size = 50_000 if self.proxy_kind == "interior" else 10_000
        self.proxy_size = int(cfg.proxy_size or default_size)

    def _raw_draw(self, n: int, *labels):
        if self.family == "newsvendor":
            return gen.sample_newsvendor(self.spec, n, self.cfg.seed, *labels)
        return gen.sample_portfolio(self.spec, n, self.cfg.seed, *labels)

    def draw(self, n: int, *labels):
        s = self._raw_draw(n, *labels)
        return self.standardizer.apply(s) if self.standardizer else s

    def _event(self, doc: dict) -> ConditioningEvent:
        kind = doc.get("type", "singleton")
        d = self.d_z + self.d_y
        if kind == "singleton":
            z = np.atleast_1d(np.asarray(doc.get("z_star", self.spec.z_star), float))
            if self.standardizer is not None:
                z = (z - self.standardizer.loc[: self.d_z]) / self.standardizer.scale[: self.d_z]
            return ConditioningEvent.singleton(z, self.d_y)
        if kind == "box":
            # feature box in the (possibly standardised) working coordinates
            r = float(doc["r"])
            return ConditioningEvent.feature_box(np.full(self.d_z, -r), np.full(self.d_z, r), self.d_y)
        if kind == "whole":
            return ConditioningEvent.whole_space(d, self.d_z)
        if kind == "polyhedron":
            return ConditioningEvent(doc["H"], doc["h"], tuple(doc.get("eq_rows", ())), self.d_z)
        raise ValueError(f"unknown event type {kind!r}")
