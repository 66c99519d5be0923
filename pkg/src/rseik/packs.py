"""Flat array layouts consumed by the solver kernels.

A pack freezes everything the inner fast-marching loop needs into plain
numpy arrays: per-orientation facet tables (semi-Lagrangian backend) or
weight/offset schemes (finite-difference backend), per-node costs, the mask,
and reverse-trigger tables saying which nodes and facets to re-solve when a
node is accepted.  Both the compiled and the pure-Python kernels consume the
same pack, which keeps them exactly comparable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import ModelParams, spatial_quadratic
from .grid import Domain
from .stencils import SpatialNorm, build_spatial_stencil_2d, offset_scheme, product_stencil


@dataclass
class SL2DPack:
    nx: int
    ny: int
    no: int
    forward: bool
    c1: np.ndarray
    c2: np.ndarray
    blocked: np.ndarray
    spatial_mask: np.ndarray    # (nx*ny,) uint8; all zero when unmasked
    fac_vert: np.ndarray    # (F, 3, 3) int32: dx, dy, da per vertex
    fac_SM: np.ndarray      # (F, 3, 3) spatial quadratic Gram (h folded in)
    fac_A: np.ndarray       # (F, 3, 3) angular Gram (dtheta folded in)
    fac_wd: np.ndarray      # (F, 3) asymmetry inner products (c1 applied at node)
    fac_start: np.ndarray   # (no+1,) int32
    rev_entry: np.ndarray   # (R, 5) int32: dx, dy, da, t0, t1
    rev_start: np.ndarray   # (no+1,) int32
    trig_fac: np.ndarray    # (T,) int32 facet ids

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny * self.no


@dataclass
class HamPack:
    dims: tuple
    no: int
    two_sided: bool
    h: float
    c1: np.ndarray
    c2: np.ndarray
    blocked: np.ndarray
    spatial_mask: np.ndarray    # flat spatial blocked flags; all zero when unmasked
    sp_off: np.ndarray      # (S, d) int32
    sp_rho: np.ndarray      # (S,) float64
    sp_start: np.ndarray    # (no+1,) int32
    ang_idx: np.ndarray     # (A,) int32 neighbor orientation ids
    ang_idx2: np.ndarray    # (A,) int32 second id of an axis pair, -1 if none
    ang_rho: np.ndarray     # (A,) float64
    ang_start: np.ndarray   # (no+1,) int32

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.dims)) * self.no


def _flat_costs(domain: Domain, cost):
    shape = domain.shape
    c1 = np.broadcast_to(np.asarray(cost.c1, float), shape).reshape(-1).astype(float)
    c2 = np.broadcast_to(np.asarray(cost.c2, float), shape).reshape(-1).astype(float)
    blocked = domain.node_mask().reshape(-1).astype(np.uint8)
    if domain.grid.mask is not None:
        spatial = np.ascontiguousarray(domain.grid.mask.reshape(-1).astype(np.uint8))
    else:
        spatial = np.zeros(int(np.prod(domain.grid.dims)), dtype=np.uint8)
    return np.ascontiguousarray(c1), np.ascontiguousarray(c2), blocked, spatial


def build_sl2d_pack(domain: Domain, cost, params: ModelParams, offset_cap: int = 64) -> SL2DPack:
    """Semi-Lagrangian stencil tables for the planar models."""
    assert domain.d == 2
    nx, ny = domain.grid.dims
    no = domain.n_orient
    h = domain.grid.h
    dth = 2.0 * math.pi / no
    eps = params.epsilon
    c1, c2, blocked, spatial_mask = _flat_costs(domain, cost)

    fac_vert, fac_SM, fac_A, fac_wd = [], [], [], []
    fac_start = [0]
    # offset -> facet ids, per orientation, for the reverse tables
    off2fac: list[dict] = []
    for j in range(no):
        n = domain.sphere.vertices[j]
        M = spatial_quadratic(n, eps)
        # The map holds distances from the seed, so the update at p prices
        # the incoming leg q -> p: the metric acts on p - q = -(q - p).
        # Quadratic terms are even; only the asymmetry vector flips sign.
        wtil = -math.sqrt(1.0 / eps ** 2 - 1.0) * n if (params.forward and eps < 1.0) else None
        norm = SpatialNorm(M, wtil)
        spatial_facets = build_spatial_stencil_2d(norm, cap=offset_cap)
        stencil = product_stencil(spatial_facets, [(-1,), (1,)], orientation=j)
        table: dict = {}
        for facet in stencil.facets:
            fid = len(fac_vert)
            verts = np.asarray(facet, dtype=np.int32)
            if verts.shape[0] != 3:
                raise AssertionError("planar product facets are triangles")
            fac_vert.append(verts)
            disp = verts[:, :2].astype(float) * h
            SM = disp @ M @ disp.T
            ang = verts[:, 2].astype(float) * dth
            fac_SM.append(SM)
            fac_A.append(np.outer(ang, ang))
            if wtil is not None:
                fac_wd.append(disp @ wtil)
            else:
                fac_wd.append(np.zeros(3))
            for v in verts:
                table.setdefault((int(v[0]), int(v[1]), int(v[2])), []).append(fid)
        off2fac.append(table)
        fac_start.append(len(fac_vert))

    rev_entry, rev_start, trig_fac = [], [0], []
    for jq in range(no):
        # node q of orientation jq triggers nodes r of orientation jr = jq - da
        for da in (-1, 0, 1):
            jr = (jq - da) % no
            for (dx, dy, a), fids in off2fac[jr].items():
                if a != da:
                    continue
                t0 = len(trig_fac)
                trig_fac.extend(fids)
                rev_entry.append((dx, dy, da, t0, len(trig_fac)))
        rev_start.append(len(rev_entry))

    return SL2DPack(
        nx, ny, no, bool(params.forward and eps < 1.0),
        c1, c2, blocked, spatial_mask,
        np.array(fac_vert, dtype=np.int32),
        np.ascontiguousarray(np.array(fac_SM, float)),
        np.ascontiguousarray(np.array(fac_A, float)),
        np.ascontiguousarray(np.array(fac_wd, float)),
        np.array(fac_start, dtype=np.int32),
        np.array(rev_entry, dtype=np.int32).reshape(-1, 5),
        np.array(rev_start, dtype=np.int32),
        np.array(trig_fac, dtype=np.int32),
    )


def build_ham_pack(domain: Domain, cost, params: ModelParams) -> HamPack:
    """Upwind finite-difference tables for either dimension."""
    no = domain.n_orient
    eps = params.epsilon
    c1, c2, blocked, spatial_mask = _flat_costs(domain, cost)

    sp_off, sp_rho, sp_start = [], [], [0]
    ang_idx, ang_idx2, ang_rho, ang_start = [], [], [], [0]
    for j in range(no):
        n = domain.sphere.vertices[j]
        scheme = offset_scheme(n, eps, orientation=j)
        for rho, w in zip(scheme.rho, scheme.offsets):
            if rho > 1e-14:
                sp_off.append(w)
                sp_rho.append(rho)
        sp_start.append(len(sp_off))
        idx, idx2, rho_ang = domain.sphere.upwind_scheme(j)
        for k, k2, rho in zip(idx, idx2, rho_ang):
            if rho > 1e-14:
                ang_idx.append(int(k))
                ang_idx2.append(int(k2))
                ang_rho.append(float(rho))
        ang_start.append(len(ang_idx))

    return HamPack(
        domain.grid.dims, no, not params.forward, domain.grid.h,
        c1, c2, blocked, spatial_mask,
        np.array(sp_off, dtype=np.int32).reshape(-1, domain.d),
        np.array(sp_rho, float),
        np.array(sp_start, dtype=np.int32),
        np.array(ang_idx, dtype=np.int32),
        np.array(ang_idx2, dtype=np.int32),
        np.array(ang_rho, float),
        np.array(ang_start, dtype=np.int32),
    )
