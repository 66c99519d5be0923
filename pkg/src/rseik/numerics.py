"""Scalar update solvers shared by the solver backends.

The semi-Lagrangian update minimizes a convex objective over a simplex of
neighbor offsets; for our metrics the norm is quadratic (or piecewise
quadratic for the no-reverse-gear model), so the minimizer is found exactly
by enumerating faces and solving the stationarity conditions in closed
form.  The finite-difference update reduces to the largest root of a
piecewise quadratic built from positive parts of value differences.
"""

from __future__ import annotations

import math
from itertools import combinations

import numpy as np

INF = math.inf
_XI_TOL = 1e-12


def _stationary_on_subset(Q, u, idx):
    """Interior stationary candidate of xi . u + sqrt(xi Q xi) on a face.

    Returns (value, xi_full) or None when the face has no valid candidate.
    """
    m = len(u)
    Qs = Q[np.ix_(idx, idx)]
    us = u[list(idx)]
    if len(idx) == 1:
        q = Qs[0, 0]
        if q < 0.0:
            return None
        xi = np.zeros(m)
        xi[idx[0]] = 1.0
        return us[0] + math.sqrt(q), xi
    try:
        Qinv = np.linalg.inv(Qs)
    except np.linalg.LinAlgError:
        return None
    one = np.ones(len(idx))
    alpha = float(one @ Qinv @ one)
    beta = float(one @ Qinv @ us)
    gamma = float(us @ Qinv @ us)
    disc = beta * beta - alpha * (gamma - 1.0)
    if alpha <= 0.0 or disc < 0.0:
        return None
    lam = (beta + math.sqrt(disc)) / alpha
    r = alpha * lam - beta
    if r <= 0.0:
        return None
    xis = Qinv @ (lam * one - us) / r
    if np.any(xis < -_XI_TOL):
        return None
    xi = np.zeros(m)
    xi[list(idx)] = np.maximum(xis, 0.0)
    s = xi.sum()
    if s <= 0.0:
        return None
    xi /= s
    return lam, xi


def solve_simplex_quadratic(Q, u):
    """min over the simplex of xi . u + sqrt(xi^T Q xi), exactly.

    Q is the Gram matrix of the facet offsets under the (quadratic) metric;
    u holds the neighbor values.  Entries of u may be +inf; those vertices
    are excluded.  Returns (value, xi).
    """
    Q = np.asarray(Q, float)
    u = np.asarray(u, float)
    m = len(u)
    finite = [i for i in range(m) if math.isfinite(u[i])]
    best, best_xi = INF, np.zeros(m)
    for size in range(1, len(finite) + 1):
        for idx in combinations(finite, size):
            got = _stationary_on_subset(Q, u, idx)
            if got is not None and got[0] < best:
                best, best_xi = got
    return best, best_xi


def solve_simplex_piecewise(Q, wdot, u):
    """Forward-variant facet update: norm sqrt(xi Q xi + (wdot . xi)_-^2).

    The norm is quadratic on each side of the hyperplane wdot . xi = 0 and
    C^1 across it, so enumerating both quadratic pieces with a sign
    consistency check finds the exact minimum.  Returns (value, xi).
    """
    Q = np.asarray(Q, float)
    wdot = np.asarray(wdot, float)
    u = np.asarray(u, float)
    m = len(u)
    finite = [i for i in range(m) if math.isfinite(u[i])]
    Q2 = Q + np.outer(wdot, wdot)
    wscale = max(float(np.abs(wdot).max()), 1.0)
    best, best_xi = INF, np.zeros(m)
    for size in range(1, len(finite) + 1):
        for idx in combinations(finite, size):
            for piece, Qp in ((0, Q), (1, Q2)):
                got = _stationary_on_subset(Qp, u, idx)
                if got is None or got[0] >= best:
                    continue
                s = float(wdot @ got[1])
                ok = s >= -_XI_TOL * wscale if piece == 0 else s <= _XI_TOL * wscale
                if ok:
                    best, best_xi = got
    return best, best_xi


def solve_positive_parts(a, b):
    """Largest root of sum_j a_j (lam - b_j)_+^2 = 1 with a_j > 0.

    Entries with b_j = +inf or a_j <= 0 are ignored.  Returns +inf when no
    finite term remains.
    """
    terms = sorted(
        (float(bj), float(aj)) for aj, bj in zip(a, b) if aj > 0.0 and math.isfinite(bj)
    )
    if not terms:
        return INF
    A = B = C = 0.0
    lam = INF
    for m, (bj, aj) in enumerate(terms):
        A += aj
        B += aj * bj
        C += aj * bj * bj
        disc = B * B - A * (C - 1.0)
        if disc < 0.0:
            disc = 0.0
        cand = (B + math.sqrt(disc)) / A
        if m + 1 == len(terms) or cand <= terms[m + 1][0]:
            lam = cand
            break
    return lam


def minimize_facet_generic(offsets, values, F, tol: float = 1e-12):
    """Hopf-Lax facet minimization for an arbitrary convex 1-homogeneous F.

    F maps an offset vector to its cost.  Used for metrics given only as
    callables (reference/diagnostic path); the production updates use the
    closed forms above.  Returns (value, xi).
    """
    offsets = [np.asarray(o, float) for o in offsets]
    values = np.asarray(values, float)
    m = len(values)
    finite = [i for i in range(m) if math.isfinite(values[i])]
    if not finite:
        return INF, np.zeros(m)

    def objective(xi_f):
        v = sum(x * offsets[i] for x, i in zip(xi_f, finite))
        return F(v) + float(sum(x * values[i] for x, i in zip(xi_f, finite)))

    def golden(f, lo, hi):
        invphi = (math.sqrt(5.0) - 1.0) / 2.0
        a, bb = lo, hi
        c = bb - invphi * (bb - a)
        d = a + invphi * (bb - a)
        fc, fd = f(c), f(d)
        while bb - a > tol:
            if fc < fd:
                bb, d, fd = d, c, fc
                c = bb - invphi * (bb - a)
                fc = f(c)
            else:
                a, c, fc = c, d, fd
                d = a + invphi * (bb - a)
                fd = f(d)
        t = (a + bb) / 2.0
        return f(t), t

    k = len(finite)
    if k == 1:
        val = objective([1.0])
        xi = np.zeros(m)
        xi[finite[0]] = 1.0
        return val, xi
    if k == 2:
        val, t = golden(lambda t: objective([t, 1.0 - t]), 0.0, 1.0)
        xi = np.zeros(m)
        xi[finite[0]], xi[finite[1]] = t, 1.0 - t
        return val, xi
    if k == 3:
        def inner(s):
            return golden(lambda t: objective([s, (1.0 - s) * t, (1.0 - s) * (1.0 - t)]),
                          0.0, 1.0)

        val_s, s = golden(lambda s: inner(s)[0], 0.0, 1.0)
        _, t = inner(s)
        xi = np.zeros(m)
        xi[finite[0]] = s
        xi[finite[1]] = (1.0 - s) * t
        xi[finite[2]] = (1.0 - s) * (1.0 - t)
        return val_s, xi
    raise NotImplementedError("generic facets support at most three vertices")
