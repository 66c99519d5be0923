"""Pure-Python solver kernels: fallback when the compiled core is absent.

Mirrors rseik._kernels.core function by function; the compiled module is a
transliteration of this code.  Both consume the packs of rseik.packs and
must produce identical results (covered by tests).
"""

from __future__ import annotations

import heapq
import math

import numpy as np

INF = math.inf
FAR, TRIAL, ACCEPTED, BLOCKED = 0, 1, 2, 3
_XI_TOL = 1e-12

COMPILED = False


# --------------------------------------------------------------------------
# Facet minimization on a triangle: exact KKT enumeration over sub-simplices.
# Q is the symmetric Gram of the three offsets; wd the asymmetry inner
# products (forward model), u the neighbor values (may be +inf).

def _subset_candidate(Q, u, idx, wd, piece):
    k = len(idx)
    if k == 1:
        i = idx[0]
        qii = Q[i][i] + (piece * wd[i] * wd[i] if piece else 0.0)
        return u[i] + math.sqrt(qii), None
    if k == 2:
        i, j = idx
        a = Q[i][i] + piece * wd[i] * wd[i]
        b = Q[i][j] + piece * wd[i] * wd[j]
        c = Q[j][j] + piece * wd[j] * wd[j]
        det = a * c - b * b
        if det <= 0.0:
            return None
        i00, i01, i11 = c / det, -b / det, a / det
        alpha = i00 + 2 * i01 + i11
        beta = (i00 + i01) * u[i] + (i01 + i11) * u[j]
        gamma = i00 * u[i] * u[i] + 2 * i01 * u[i] * u[j] + i11 * u[j] * u[j]
        disc = beta * beta - alpha * (gamma - 1.0)
        if alpha <= 0.0 or disc < 0.0:
            return None
        lam = (beta + math.sqrt(disc)) / alpha
        r = alpha * lam - beta
        if r <= 0.0:
            return None
        xi_i = (i00 * (lam - u[i]) + i01 * (lam - u[j])) / r
        xi_j = (i01 * (lam - u[i]) + i11 * (lam - u[j])) / r
        if xi_i < -_XI_TOL or xi_j < -_XI_TOL:
            return None
        return lam, (xi_i * wd[i] + xi_j * wd[j])
    # k == 3
    a00 = Q[0][0] + piece * wd[0] * wd[0]
    a01 = Q[0][1] + piece * wd[0] * wd[1]
    a02 = Q[0][2] + piece * wd[0] * wd[2]
    a11 = Q[1][1] + piece * wd[1] * wd[1]
    a12 = Q[1][2] + piece * wd[1] * wd[2]
    a22 = Q[2][2] + piece * wd[2] * wd[2]
    c00 = a11 * a22 - a12 * a12
    c01 = a02 * a12 - a01 * a22
    c02 = a01 * a12 - a02 * a11
    c11 = a00 * a22 - a02 * a02
    c12 = a01 * a02 - a00 * a12
    c22 = a00 * a11 - a01 * a01
    det = a00 * c00 + a01 * c01 + a02 * c02
    if det <= 0.0:
        return None
    inv = [
        [c00 / det, c01 / det, c02 / det],
        [c01 / det, c11 / det, c12 / det],
        [c02 / det, c12 / det, c22 / det],
    ]
    alpha = beta = gamma = 0.0
    for i in range(3):
        for j in range(3):
            alpha += inv[i][j]
            beta += inv[i][j] * u[j]
            gamma += u[i] * inv[i][j] * u[j]
    disc = beta * beta - alpha * (gamma - 1.0)
    if alpha <= 0.0 or disc < 0.0:
        return None
    lam = (beta + math.sqrt(disc)) / alpha
    r = alpha * lam - beta
    if r <= 0.0:
        return None
    s = 0.0
    for i in range(3):
        xi = sum(inv[i][j] * (lam - u[j]) for j in range(3)) / r
        if xi < -_XI_TOL:
            return None
        s += xi * wd[i]
    return lam, s


def facet_min(Q, wd, u, forward):
    """Minimum of xi.u + F(sum xi_i d_i) over the simplex, F per the model."""
    finite = [i for i in range(3) if u[i] < INF]
    if not finite:
        return INF
    best = INF
    subsets = []
    n = len(finite)
    for m in range(1, 1 << n):
        subsets.append([finite[k] for k in range(n) if m >> k & 1])
    wscale = max(abs(wd[0]), abs(wd[1]), abs(wd[2]), 1.0)
    for idx in subsets:
        pieces = (0,) if not forward else ((0, 1) if len(idx) > 1 else (1 if wd[idx[0]] < 0.0 else 0,))
        for piece in pieces:
            got = _subset_candidate(Q, u, idx, wd, piece)
            if got is None or got[0] >= best:
                continue
            lam, s = got
            if forward and s is not None:
                ok = s >= -_XI_TOL * wscale if piece == 0 else s <= _XI_TOL * wscale
                if not ok:
                    continue
            best = lam
    return best


# --------------------------------------------------------------------------
# Largest root of sum a_j (lam - b_j)_+^2 = 1.

def positive_part_root(terms):
    terms = sorted(t for t in terms if t[0] < INF and t[1] > 0.0)
    if not terms:
        return INF
    A = B = C = 0.0
    for m, (bj, aj) in enumerate(terms):
        A += aj
        B += aj * bj
        C += aj * bj * bj
        disc = B * B - A * (C - 1.0)
        if disc < 0.0:
            disc = 0.0
        lam = (B + math.sqrt(disc)) / A
        if m + 1 == len(terms) or lam <= terms[m + 1][0]:
            return lam
    return INF


# --------------------------------------------------------------------------
# Mask line-of-sight: cells strictly between two cell centers must be clear.
# Walls thinner than a stencil offset would otherwise be jumped over.  The
# traversal advances one boundary crossing at a time (ties near corners
# visit both adjacent cells, which errs on the blocked side).

def segment_clear(smask, dims, p0, p1):
    d = len(dims)
    delta = [p1[k] - p0[k] for k in range(d)]
    steps = sum(abs(v) for v in delta)
    if steps <= 1:
        return True
    cell = list(p0)
    step = [0] * d
    tmax = [INF] * d
    tdelta = [INF] * d
    for k in range(d):
        if delta[k] > 0:
            step[k] = 1
        elif delta[k] < 0:
            step[k] = -1
        if delta[k] != 0:
            tdelta[k] = 1.0 / abs(delta[k])
            tmax[k] = 0.5 * tdelta[k]
    while True:
        k = min(range(d), key=lambda i: tmax[i])
        if tmax[k] >= 1.0 - 1e-12:
            return True
        cell[k] += step[k]
        tmax[k] += tdelta[k]
        if cell == list(p1):
            return True
        flat = cell[0]
        for i in range(1, d):
            flat = flat * dims[i] + cell[i]
        if smask[flat]:
            return False


# --------------------------------------------------------------------------
# Semi-Lagrangian planar solver.

def _sl_facet_value(pack, u, state, rx, ry, jr, fid, c1r, c2r, accepted_only,
                    has_mask):
    nx, ny, no = pack.nx, pack.ny, pack.no
    verts = pack.fac_vert[fid]
    vals = [INF, INF, INF]
    for k in range(3):
        vx = rx + verts[k, 0]
        vy = ry + verts[k, 1]
        if vx < 0 or vx >= nx or vy < 0 or vy >= ny:
            continue
        vj = (jr + verts[k, 2]) % no
        v = (vx * ny + vy) * no + vj
        if accepted_only and state[v] != ACCEPTED:
            continue
        if has_mask and not segment_clear(pack.spatial_mask, (nx, ny),
                                          (rx, ry), (vx, vy)):
            continue
        vals[k] = float(u[v])
    if vals[0] == INF and vals[1] == INF and vals[2] == INF:
        return INF
    c1sq, c2sq = c1r * c1r, c2r * c2r
    SM = pack.fac_SM[fid]
    A = pack.fac_A[fid]
    Q = [[c1sq * SM[i, j] + c2sq * A[i, j] for j in range(3)] for i in range(3)]
    if pack.forward:
        wd = [c1r * pack.fac_wd[fid, k] for k in range(3)]
    else:
        wd = [0.0, 0.0, 0.0]
    return facet_min(Q, wd, vals, pack.forward)


def solve_sl2d(pack, seeds, stop_nodes=None):
    n = pack.n_nodes
    nx, ny, no = pack.nx, pack.ny, pack.no
    has_mask = bool(pack.spatial_mask.any())
    u = np.full(n, INF)
    state = np.where(pack.blocked != 0, BLOCKED, FAR).astype(np.uint8)
    order = []
    heap = []
    for s in seeds:
        s = int(s)
        u[s] = 0.0
        state[s] = TRIAL
        heapq.heappush(heap, (0.0, s))
    stop = set(int(s) for s in stop_nodes) if stop_nodes is not None else None
    pops = 0
    while heap:
        val, q = heapq.heappop(heap)
        pops += 1
        if state[q] == ACCEPTED or val > u[q]:
            continue
        state[q] = ACCEPTED
        order.append(q)
        if stop is not None:
            stop.discard(q)
            if not stop:
                break
        jq = q % no
        rest = q // no
        qy = rest % ny
        qx = rest // ny
        for e in range(pack.rev_start[jq], pack.rev_start[jq + 1]):
            dx, dy, da, t0, t1 = pack.rev_entry[e]
            rx, ry = qx - dx, qy - dy
            if rx < 0 or rx >= nx or ry < 0 or ry >= ny:
                continue
            jr = (jq - da) % no
            r = (rx * ny + ry) * no + jr
            if state[r] >= ACCEPTED:
                continue
            best = float(u[r])
            c1r, c2r = float(pack.c1[r]), float(pack.c2[r])
            for t in range(t0, t1):
                cand = _sl_facet_value(
                    pack, u, state, rx, ry, jr, int(pack.trig_fac[t]), c1r, c2r,
                    True, has_mask,
                )
                if cand < best:
                    best = cand
            if best < u[r]:
                u[r] = best
                state[r] = TRIAL
                heapq.heappush(heap, (best, r))
    return u, state, np.array(order, dtype=np.int64), pops


def apply_sl2d(pack, u, nodes):
    """One application of the update operator at the given nodes, from raw u."""
    nx, ny, no = pack.nx, pack.ny, pack.no
    has_mask = bool(pack.spatial_mask.any())
    out = np.empty(len(nodes))
    for i, r in enumerate(nodes):
        r = int(r)
        if pack.blocked[r]:
            out[i] = INF
            continue
        jr = r % no
        rest = r // no
        ry = rest % ny
        rx = rest // ny
        best = INF
        c1r, c2r = float(pack.c1[r]), float(pack.c2[r])
        for fid in range(pack.fac_start[jr], pack.fac_start[jr + 1]):
            cand = _sl_facet_value(pack, u, None, rx, ry, jr, fid, c1r, c2r,
                                   False, has_mask)
            if cand < best:
                best = cand
        out[i] = best
    return out


# --------------------------------------------------------------------------
# Upwind finite-difference solver (Hamiltonian form), d = 2 or 3.

def _ham_decode(pack, q):
    no = pack.no
    io = q % no
    rest = q // no
    if len(pack.dims) == 2:
        nx, ny = pack.dims
        return (rest // ny, rest % ny), io
    nx, ny, nz = pack.dims
    iz = rest % nz
    rest //= nz
    return (rest // ny, rest % ny, iz), io


def _ham_flat(pack, pos, io):
    if len(pack.dims) == 2:
        return (pos[0] * pack.dims[1] + pos[1]) * pack.no + io
    return ((pos[0] * pack.dims[1] + pos[1]) * pack.dims[2] + pos[2]) * pack.no + io


def _ham_inside(pack, pos):
    return all(0 <= pos[k] < pack.dims[k] for k in range(len(pack.dims)))


def _ham_value(pack, u, state, pos, jr, accepted_only, has_mask):
    c1r = pack.c1[_ham_flat(pack, pos, jr)]
    c2r = pack.c2[_ham_flat(pack, pos, jr)]
    inv_sp = 1.0 / (c1r * c1r * pack.h * pack.h)
    inv_ang = 1.0 / (c2r * c2r)
    terms = []

    def fetch(p, io):
        if not _ham_inside(pack, p):
            return INF
        v = _ham_flat(pack, p, io)
        if accepted_only and state[v] != ACCEPTED:
            return INF
        if has_mask and p != pos and not segment_clear(
            pack.spatial_mask, pack.dims, pos, p
        ):
            return INF
        return float(u[v])

    d = len(pack.dims)
    for s in range(pack.sp_start[jr], pack.sp_start[jr + 1]):
        w = pack.sp_off[s]
        b = fetch(tuple(pos[k] - w[k] for k in range(d)), jr)
        if pack.two_sided:
            b = min(b, fetch(tuple(pos[k] + w[k] for k in range(d)), jr))
        terms.append((b, float(pack.sp_rho[s]) * inv_sp))
    for s in range(pack.ang_start[jr], pack.ang_start[jr + 1]):
        b = fetch(pos, int(pack.ang_idx[s]))
        k2 = int(pack.ang_idx2[s])
        if k2 >= 0:
            b = min(b, fetch(pos, k2))
        terms.append((b, float(pack.ang_rho[s]) * inv_ang))
    return positive_part_root(terms)


def solve_ham(pack, seeds, stop_nodes=None):
    n = pack.n_nodes
    has_mask = bool(pack.spatial_mask.any())
    u = np.full(n, INF)
    state = np.where(pack.blocked != 0, BLOCKED, FAR).astype(np.uint8)
    order = []
    heap = []
    for s in seeds:
        s = int(s)
        u[s] = 0.0
        state[s] = TRIAL
        heapq.heappush(heap, (0.0, s))
    stop = set(int(s) for s in stop_nodes) if stop_nodes is not None else None
    pops = 0
    d = len(pack.dims)
    while heap:
        val, q = heapq.heappop(heap)
        pops += 1
        if state[q] == ACCEPTED or val > u[q]:
            continue
        state[q] = ACCEPTED
        order.append(q)
        if stop is not None:
            stop.discard(q)
            if not stop:
                break
        pos, jq = _ham_decode(pack, q)
        targets = []
        for s in range(pack.sp_start[jq], pack.sp_start[jq + 1]):
            w = pack.sp_off[s]
            targets.append((tuple(pos[k] + w[k] for k in range(d)), jq))
            if pack.two_sided:
                targets.append((tuple(pos[k] - w[k] for k in range(d)), jq))
        for s in range(pack.ang_start[jq], pack.ang_start[jq + 1]):
            targets.append((pos, int(pack.ang_idx[s])))
            if pack.ang_idx2[s] >= 0:
                targets.append((pos, int(pack.ang_idx2[s])))
        for rpos, jr in targets:
            if not _ham_inside(pack, rpos):
                continue
            r = _ham_flat(pack, rpos, jr)
            if state[r] >= ACCEPTED:
                continue
            cand = _ham_value(pack, u, state, rpos, jr, True, has_mask)
            if cand < u[r]:
                u[r] = cand
                state[r] = TRIAL
                heapq.heappush(heap, (cand, r))
    return u, state, np.array(order, dtype=np.int64), pops


def apply_ham(pack, u, nodes):
    has_mask = bool(pack.spatial_mask.any())
    out = np.empty(len(nodes))
    for i, r in enumerate(nodes):
        r = int(r)
        if pack.blocked[r]:
            out[i] = INF
            continue
        pos, jr = _ham_decode(pack, r)
        out[i] = _ham_value(pack, u, None, pos, jr, False, has_mask)
    return out
