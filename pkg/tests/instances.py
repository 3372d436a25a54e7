"""Random small problem instances shared by several test modules."""

import numpy as np

from trimdro.drotrim import DroProblem
from trimdro.loss import DecisionSet, PiecewiseBiAffineLoss
from trimdro.sample import ConditioningEvent, EmpiricalSample, minimum_transport_budget


def random_event(g, d_z, d_y, kind=None):
    d = d_z + d_y
    kind = kind or g.choice(["singleton", "box", "halfspace", "whole"])
    if kind == "singleton":
        return ConditioningEvent.singleton(g.normal(size=d_z), d_y)
    if kind == "box":
        lo = g.normal(size=d_z) - 0.5
        return ConditioningEvent.feature_box(lo, lo + g.uniform(0.2, 1.5, d_z), d_y)
    if kind == "halfspace":
        a = g.normal(size=d)
        return ConditioningEvent(a[None, :], [g.normal()], (), d_z)
    return ConditioningEvent.whole_space(d, d_z)


def random_loss(g, d, n, K=None):
    K = K or int(g.integers(1, 4))
    return PiecewiseBiAffineLoss(g.normal(size=(K, d, n)), g.normal(size=(K, d)),
                                 g.normal(size=(K, n)), g.normal(size=K))


def random_problem(g, N_max=8, d_y=1, kind=None, alpha=None, excess=None):
    N = int(g.integers(1, N_max + 1))
    d_z = 1
    sample = EmpiricalSample(g.normal(size=(N, d_z + d_y)) * 1.5, d_z, d_y)
    event = random_event(g, d_z, d_y, kind)
    n = int(g.integers(1, 3))
    loss = random_loss(g, d_z + d_y, n)
    dec = DecisionSet.box(-np.ones(n), np.ones(n))
    alpha = float(g.uniform(0.15, 1.0)) if alpha is None else alpha
    excess = float(g.uniform(0.0, 1.0)) if excess is None else excess
    return DroProblem.build(sample, event, loss, dec, alpha, excess=excess)


def floor(problem):
    return minimum_transport_budget(problem.sample, problem.event, problem.spec.alpha)
