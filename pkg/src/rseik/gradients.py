"""Vectorized upwind gradients on the product grid, and the dual field.

The signed per-axis upwind derivative picks, per node, the one-sided
difference with the steeper descent; out-of-grid (or infinite) neighbors
contribute nothing.  These feed the explicit iterative solver and the
eikonal residual diagnostic.
"""

from __future__ import annotations

import math

import numpy as np

from .grid import Domain


def _shift(values: np.ndarray, axis: int, step: int, fill: float) -> np.ndarray:
    """values shifted so result[i] = values[i + step] along axis, edge-filled."""
    if step == 0:
        return values
    out = np.full_like(values, fill)
    src = [slice(None)] * values.ndim
    dst = [slice(None)] * values.ndim
    if step > 0:
        src[axis] = slice(step, None)
        dst[axis] = slice(None, -step)
    else:
        src[axis] = slice(None, step)
        dst[axis] = slice(-step, None)
    out[tuple(dst)] = values[tuple(src)]
    return out


def spatial_upwind(values: np.ndarray, domain: Domain):
    """Signed upwind spatial derivatives, one array per axis.

    Also returns the per-axis magnitude arrays (used for ridge detection).
    """
    h = domain.grid.h
    signed = []
    mags = []
    for axis in range(domain.d):
        up = _shift(values, axis, +1, math.inf)     # value at i+1
        dn = _shift(values, axis, -1, math.inf)     # value at i-1
        with np.errstate(invalid="ignore"):
            m_plus = np.maximum(values - up, 0.0)   # descent toward +axis
            m_minus = np.maximum(values - dn, 0.0)  # descent toward -axis
        m_plus = np.where(np.isnan(m_plus), 0.0, m_plus)
        m_minus = np.where(np.isnan(m_minus), 0.0, m_minus)
        mag = np.maximum(m_plus, m_minus) / h
        # descent toward -axis means U grows along +axis
        g = np.where(m_minus >= m_plus, mag, -mag)
        signed.append(g)
        mags.append((m_minus / h, m_plus / h))
    return signed, mags


def angular_upwind_sq(values: np.ndarray, domain: Domain) -> np.ndarray:
    """Squared tangential gradient magnitude from upwind edge differences.

    Uses the sphere grid's upwind scheme: two-sided axis pairs on the
    circle and the latitude-longitude grid, fitted one-sided edge weights
    on the icosphere.
    """
    sphere = domain.sphere
    if domain.d == 2:
        no = sphere.n_vertices
        dth = 2.0 * math.pi / no
        up = np.roll(values, -1, axis=-1)
        dn = np.roll(values, 1, axis=-1)
        with np.errstate(invalid="ignore"):
            m = np.maximum(np.maximum(values - up, values - dn), 0.0)
        m = np.where(np.isnan(m), 0.0, m)
        return (m / dth) ** 2
    out = np.zeros_like(values)
    for j in range(sphere.n_vertices):
        idx, idx2, rho = sphere.upwind_scheme(j)
        vj = values[..., j]
        acc = np.zeros_like(vj)
        for kk, kk2, r in zip(idx, idx2, rho):
            if r <= 0.0:
                continue
            b = values[..., kk]
            if kk2 >= 0:
                b = np.minimum(b, values[..., kk2])
            with np.errstate(invalid="ignore"):
                diff = np.maximum(vj - b, 0.0)
            diff = np.where(np.isnan(diff), 0.0, diff)
            acc += r * diff ** 2
        out[..., j] = acc
    return out


def directional_sample(layer: np.ndarray, shift) -> np.ndarray:
    """layer interpolated at x + shift (index units) for every grid point x.

    The fractional shift is constant, so linear interpolation factorizes
    into one 1-D blend per axis; out-of-grid samples blend in +inf,
    marking them unusable.
    """
    lo = np.floor(shift).astype(int)
    frac = np.asarray(shift, float) - lo
    out = layer
    for k in range(layer.ndim):
        a = _shift(out, k, int(lo[k]), math.inf) if lo[k] else out
        if frac[k] != 0.0:
            b = _shift(out, k, int(lo[k]) + 1, math.inf)
            out = (1.0 - frac[k]) * a + frac[k] * b
        else:
            out = a if a is not out else out
    return out


def _one_sided(layer: np.ndarray, direction, h: float) -> np.ndarray:
    """Non-negative first-order descent rate: (u - u(x - dir))_+ / h."""
    s1 = directional_sample(layer, -np.asarray(direction, float))
    with np.errstate(invalid="ignore"):
        m1 = np.maximum(layer - s1, 0.0)
        m1 = np.where(np.isnan(m1), 0.0, m1)
    return m1 / h


def dual_field(values: np.ndarray, domain: Domain, c1, c2, epsilon: float,
               forward: bool) -> np.ndarray:
    """Dual metric evaluated on an upwind gradient of values, per node.

    This is the left-hand side of the eikonal equation; the distance map
    satisfies it equal to 1 away from the seed.  Spatial derivatives are
    one-sided differences taken along the orientation itself and its
    perpendicular directions (interpolated at unit grid-step offsets), so
    the strongly anisotropic direction of the metric is differenced along
    its own axis rather than assembled from coordinate axes.
    """
    from .geometry import tangent_basis

    h = domain.grid.h
    ang_sq = angular_upwind_sq(values, domain)
    e2 = epsilon * epsilon
    finite = np.isfinite(values)
    if finite.all():
        vals = values
    else:
        big = float(values[finite].max()) if finite.any() else 0.0
        vals = np.where(finite, values, big * 2 + 1e6)
    spatial_sq = np.zeros_like(values)
    for j in range(domain.n_orient):
        layer = vals[..., j]
        n = domain.sphere.vertices[j]
        back = _one_sided(layer, n, h)
        fwd = _one_sided(layer, -n, h)
        if forward:
            dir_sq = back ** 2 + e2 * fwd ** 2
        else:
            dir_sq = np.maximum(back, fwd) ** 2
        perp_sq = np.zeros_like(layer)
        for t in tangent_basis(n):
            m = np.maximum(_one_sided(layer, t, h),
                           _one_sided(layer, -t, h))
            perp_sq += m ** 2
        spatial_sq[..., j] = dir_sq + e2 * perp_sq
    c1a = np.broadcast_to(np.asarray(c1, float), values.shape)
    c2a = np.broadcast_to(np.asarray(c2, float), values.shape)
    return np.sqrt(spatial_sq / c1a ** 2 + ang_sq / c2a ** 2)


def ridge_mask(values: np.ndarray, domain: Domain, ratio: float = 0.3) -> np.ndarray:
    """Nodes where some axis descends steeply on both sides (cut-locus look)."""
    _, mags = spatial_upwind(values, domain)
    bad = np.zeros(values.shape, dtype=bool)
    for m_minus, m_plus in mags:
        lo = np.minimum(m_minus, m_plus)
        hi = np.maximum(m_minus, m_plus)
        bad |= (hi > 1e-12) & (lo > ratio * hi)
    return bad
