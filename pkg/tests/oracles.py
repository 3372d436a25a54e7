"""Independent reference implementations used to check the package.

Everything here uses scipy's ``linprog`` or plain numpy directly and never calls into
the package's LP layer, so agreement is evidence rather than self-consistency.
"""

import math

import numpy as np
from scipy.optimize import linprog


def l1_projection(point, H, h, eq_rows=()):
    """min ||xi - point||_1 s.t. H xi <= h (rows in eq_rows as equalities)."""
    point = np.asarray(point, float)
    H = np.atleast_2d(np.asarray(H, float))
    h = np.asarray(h, float)
    d = point.size
    if H.shape[0] == 0:
        return 0.0
    # variables (xi, t): min sum t, t >= +-(xi - point)
    c = np.r_[np.zeros(d), np.ones(d)]
    I = np.eye(d)
    A_ub = [np.hstack([I, -I]), np.hstack([-I, -I])]
    b_ub = [point, -point]
    eq = np.zeros(H.shape[0], bool)
    eq[list(eq_rows)] = True
    if (~eq).any():
        A_ub.append(np.hstack([H[~eq], np.zeros(((~eq).sum(), d))]))
        b_ub.append(h[~eq])
    kw = {}
    if eq.any():
        kw = {"A_eq": np.hstack([H[eq], np.zeros((eq.sum(), d))]), "b_eq": h[eq]}
    res = linprog(c, A_ub=np.vstack(A_ub), b_ub=np.concatenate(b_ub),
                  bounds=[(None, None)] * d + [(0, None)] * d, method="highs", **kw)
    assert res.status == 0, res.message
    return float(res.fun)


def min_budget_lp(dist, alpha, p=1.0):
    """min over trimming weights b (sum 1, 0 <= b <= 1/(N alpha)) of (sum b dist^p)^(1/p)."""
    dist = np.asarray(dist, float)
    N = dist.size
    cap = 1.0 / (N * alpha)
    res = linprog(dist ** p, A_eq=np.ones((1, N)), b_eq=[1.0], bounds=[(0, cap)] * N,
                  method="highs")
    assert res.status == 0, res.message
    return max(res.fun, 0.0) ** (1.0 / p)


def transport_cost(a, b, C):
    """Optimal transport cost between weight vectors a and b for cost matrix C."""
    a, b, C = np.asarray(a, float), np.asarray(b, float), np.asarray(C, float)
    m, n = C.shape
    A_eq = np.vstack([np.kron(np.eye(m), np.ones(n)), np.kron(np.ones(m), np.eye(n))])
    res = linprog(C.reshape(-1), A_eq=A_eq, b_eq=np.r_[a, b], bounds=(0, None), method="highs")
    assert res.status == 0
    return float(res.fun)


def transport_2x2_vertices(a, b, C):
    """Enumerate the 2x2 transport polytope: one free parameter t = pi_11."""
    lo, hi = max(0.0, a[0] - b[1]), min(a[0], b[0])
    best = math.inf
    for t in (lo, hi):
        pi = np.array([[t, a[0] - t], [b[0] - t, a[1] - b[0] + t]])
        best = min(best, float((pi * np.asarray(C)).sum()))
    return best


def trimmed_w1(points, alpha, target, weights=None):
    """Closest (1-alpha)-trimming of the points to a discrete target, in W1."""
    points = np.atleast_2d(np.asarray(points, float))
    target = np.atleast_2d(np.asarray(target, float))
    N, G = points.shape[0], target.shape[0]
    w = np.full(G, 1.0 / G) if weights is None else np.asarray(weights, float)
    C = np.abs(points[:, None, :] - target[None, :, :]).sum(axis=2)
    A_ub = np.kron(np.eye(N), np.ones(G))
    A_eq = np.kron(np.ones(N), np.eye(G))
    res = linprog(C.reshape(-1), A_ub=A_ub, b_ub=np.full(N, 1.0 / (N * alpha)), A_eq=A_eq, b_eq=w,
                  bounds=(0, None), method="highs")
    assert res.status == 0
    return float(res.fun)


def pinball_argmin(y, w, h, b):
    """Newsvendor minimiser by brute force over the support points."""
    y, w = np.asarray(y, float), np.asarray(w, float)
    costs = [float(w @ np.maximum(h * (x - y), b * (y - x))) for x in y]
    best = min(costs)
    return min(x for x, c in zip(y, costs) if c <= best + 1e-12), best


def portfolio_cvar(x, tau, y, delta, lam):
    r = float(np.dot(x, y))
    return tau + max(-r - tau, 0.0) / delta - lam * r


def greedy_cap_fill(values, cap):
    """Maximal weighted mean with weights in [0, cap] summing to one."""
    order = np.argsort(-np.asarray(values, float), kind="stable")
    w = np.zeros(len(values))
    left = 1.0
    for i in order:
        w[i] = min(cap, left)
        left -= w[i]
        if left <= 0:
            break
    return float(w @ np.asarray(values, float)), w


def beta_bound_ref(p, d, a, eps, alpha, N, c=1.0, C=1.0):
    """Tail bound written straight from its three-case definition with an indicator."""
    small = 1.0 if eps <= alpha ** (-1.0 / p) else 0.0
    if p > d / 2:
        r = (alpha * eps ** p) ** 2
    elif p == d / 2:
        s = alpha * eps ** p
        r = (s / math.log(2 + 1 / s)) ** 2 if s > 0 else 0.0
    else:
        r = (alpha * eps ** p) ** (d / p)
    return small * C * math.exp(-c * N * r) + (1 - small) * C * math.exp(-c * N * (alpha * eps ** p) ** (a / p))
