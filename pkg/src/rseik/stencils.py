"""Discretization geometry: superbase decompositions and acute stencils.

Two constructions feed the solvers.  For the finite-difference backend, an
anisotropic SPD matrix is decomposed over integer offsets with non-negative
weights (obtuse-superbase reduction), so upwind differences along those
offsets reproduce the quadratic form exactly.  For the semi-Lagrangian
backend in the plane, a fan of integer offsets is refined (mediant
insertion) until every adjacent pair satisfies the generalized acuteness
condition of the metric, which is what makes the update operator causal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SellingError, StencilError

SELLING_MAX_ITER = 1000
FAN_OFFSET_CAP = 64


@dataclass(frozen=True)
class OffsetScheme:
    """Per-orientation weight/offset pairs for the upwind FD scheme."""

    orientation: int
    rho: np.ndarray        # (m,) non-negative weights
    offsets: np.ndarray    # (m, d) integer offsets, sign-normalized

    def quadratic(self, v) -> float:
        """sum_i rho_i (w_i . v)^2."""
        v = np.asarray(v, float)
        return float(self.rho @ (self.offsets @ v) ** 2)


@dataclass(frozen=True)
class SLStencil:
    """Semi-Lagrangian stencil: facets of combined spatial/angular offsets.

    Each facet is an (m, d+1) integer array; a row holds a spatial offset in
    grid steps followed by an angular offset in orientation-index steps.
    """

    orientation: int
    facets: tuple


def selling_decompose(D: np.ndarray) -> list[tuple[float, np.ndarray]]:
    """Decompose an SPD matrix as sum_i rho_i w_i (x) w_i, rho_i >= 0, w_i integral.

    Works in dimension 2 (three pairs) and 3 (six pairs) via iterated
    obtuse-superbase exchange.  The identity sum rho_i (w_i . v)^2 = v . D v
    holds to machine precision.
    """
    D = np.asarray(D, float)
    d = D.shape[0]
    if D.shape != (d, d) or d not in (2, 3):
        raise DomainError(f"D must be 2x2 or 3x3, got shape {D.shape}")
    if not np.allclose(D, D.T, atol=1e-12 * max(1.0, float(np.abs(D).max()))):
        raise DomainError("D must be symmetric")
    try:
        np.linalg.cholesky(D)
    except np.linalg.LinAlgError:
        raise DomainError("D must be positive definite")
    cond = float(np.linalg.cond(D))
    if cond > 1e9:
        raise DomainError(f"condition number {cond:.3g} exceeds 1e9")

    b = np.zeros((d + 1, d), dtype=np.int64)
    b[:d] = np.eye(d, dtype=np.int64)
    b[d] = -np.ones(d, dtype=np.int64)
    tol = 1e-14 * float(np.abs(D).max())

    for _ in range(SELLING_MAX_ITER):
        worst, wi, wj = tol, -1, -1
        for i in range(d + 1):
            for j in range(i + 1, d + 1):
                g = float(b[i] @ D @ b[j])
                if g > worst:
                    worst, wi, wj = g, i, j
        if wi < 0:
            break
        others = [k for k in range(d + 1) if k not in (wi, wj)]
        bi = b[wi].copy()
        b[wi] = -bi
        # Restore the zero sum: one remaining vector in 2D takes 2*b_i,
        # the two remaining vectors in 3D take b_i each.
        shift = 2 if d == 2 else 1
        for k in others:
            b[k] = b[k] + shift * bi
    else:
        raise SellingError(f"superbase reduction failed to converge for D = {D.tolist()}")

    pairs = []
    for i in range(d + 1):
        for j in range(i + 1, d + 1):
            rho = -float(b[i] @ D @ b[j])
            comp = [k for k in range(d + 1) if k not in (i, j)]
            if d == 2:
                w = np.array([-b[comp[0]][1], b[comp[0]][0]], dtype=np.int64)
            else:
                w = np.cross(b[comp[0]], b[comp[1]]).astype(np.int64)
            pairs.append((max(rho, 0.0), w))
    return pairs


def orient_offsets(n: np.ndarray, pairs, orientation: int = 0) -> OffsetScheme:
    """Flip offset signs so every retained offset satisfies n . w >= 0."""
    n = np.asarray(n, float)
    rho = np.array([r for r, _ in pairs], float)
    offs = np.array([w for _, w in pairs], dtype=np.int64)
    flip = (offs @ n) < 0.0
    offs[flip] = -offs[flip]
    return OffsetScheme(orientation, rho, offs)


def offset_scheme(n: np.ndarray, eps: float, orientation: int = 0) -> OffsetScheme:
    """Selling decomposition of the direction-aligned tensor, sign-normalized."""
    from .geometry import dn_matrix

    return orient_offsets(n, selling_decompose(dn_matrix(n, eps)), orientation)


class SpatialNorm:
    """Norm v -> sqrt(v M v + (w . v)_-^2) with cheap gradient evaluation."""

    def __init__(self, M, w=None):
        self.M = np.asarray(M, float)
        d = self.M.shape[0]
        self.w = np.zeros(d) if w is None else np.asarray(w, float)

    def value(self, v) -> float:
        v = np.asarray(v, float)
        return math.sqrt(float(v @ self.M @ v) + min(float(self.w @ v), 0.0) ** 2)

    def gradient(self, v) -> np.ndarray:
        v = np.asarray(v, float)
        g = self.M @ v + min(float(self.w @ v), 0.0) * self.w
        return g / self.value(v)


def build_spatial_stencil_2d(norm: SpatialNorm, cap: int = FAN_OFFSET_CAP):
    """Acute fan of integer offsets for a planar (possibly asymmetric) norm.

    Starts from the four axis offsets and inserts mediants u+v between any
    cyclically adjacent pair that fails the generalized acuteness test
    <dF(u), v> >= 0, until the whole fan is acute.  Returns the list of
    facets (adjacent offset pairs, cyclic).
    """
    fan = [np.array(o, dtype=np.int64) for o in ((1, 0), (0, 1), (-1, 0), (0, -1))]
    i = 0
    guard = 0
    while i < len(fan):
        u = fan[i]
        v = fan[(i + 1) % len(fan)]
        gu = norm.gradient(u.astype(float))
        gv = norm.gradient(v.astype(float))
        if float(gu @ v) >= 0.0 and float(gv @ u) >= 0.0:
            i += 1
            continue
        m = u + v
        if np.abs(m).max() > cap:
            raise StencilError(
                f"offset norm cap {cap} exceeded while refining the fan; "
                "increase the cap or use a larger epsilon"
            )
        fan.insert(i + 1, m)
        guard += 1
        if guard > 100_000:
            raise StencilError("fan refinement failed to terminate")
    return [(fan[i], fan[(i + 1) % len(fan)]) for i in range(len(fan))]


def acuteness_check(p, facet, F, rel_step: float = 1e-6, tol: float = 1e-12) -> bool:
    """Generalized acuteness of one facet under the metric F(p, .).

    True iff <dF(p, q - p), q' - p> >= -tol for every ordered offset pair of
    the facet; the differential is taken numerically (central differences).
    F must be finite near the tested offsets.
    """
    offsets = [np.asarray(q, float) for q in facet]
    if len(offsets) < 2:
        return True
    grads = []
    for q in offsets:
        scale = max(float(np.abs(q).max()), 1.0) * rel_step
        g = np.zeros(len(q))
        for k in range(len(q)):
            e = np.zeros(len(q))
            e[k] = scale
            g[k] = (F(p, q + e) - F(p, q - e)) / (2.0 * scale)
        if not np.all(np.isfinite(g)):
            return False
        grads.append(g)
    fmax = max(F(p, q) for q in offsets)
    for i, gi in enumerate(grads):
        for j, qj in enumerate(offsets):
            if i == j:
                continue
            if float(gi @ qj) < -tol * max(1.0, fmax):
                return False
    return True


def product_stencil(spatial_facets, angular_facets, orientation: int = 0) -> SLStencil:
    """Combine spatial and angular stencils for a split metric F^2 = F1^2 + F2^2.

    Every combined facet joins the vertices of one spatial facet (angular
    offset 0) with those of one angular facet (spatial offset 0); acuteness
    is inherited from the factors because the metric separates.
    """
    facets = []
    for sf in spatial_facets:
        sf = [np.asarray(q, dtype=np.int64) for q in sf]
        d = len(sf[0])
        for af in angular_facets:
            af = np.atleast_1d(np.asarray(af, dtype=np.int64))
            rows = [np.concatenate([q, [0]]) for q in sf]
            rows += [np.concatenate([np.zeros(d, dtype=np.int64), [a]]) for a in af]
            facets.append(np.array(rows, dtype=np.int64))
    return SLStencil(orientation, tuple(facets))
