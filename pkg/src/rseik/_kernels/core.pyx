# Compiled solver kernels: transliteration of rseik._kernels.pure.
# Both consume the packs built in rseik.packs and must return identical
# results; the pure module is the reference, this one is the fast path.

import numpy as np

cimport cython
from libc.math cimport INFINITY, sqrt
from libc.stdlib cimport free, malloc, realloc

cdef enum:
    FAR = 0
    TRIAL = 1
    ACCEPTED = 2
    BLOCKED = 3

cdef double XI_TOL = 1e-12

COMPILED = True


# --------------------------------------------------------------------------
# binary heap of (value, node), ties broken on the node index

cdef struct Heap:
    double* val
    long long* node
    Py_ssize_t size
    Py_ssize_t cap

cdef inline bint heap_init(Heap* h, Py_ssize_t cap) noexcept nogil:
    h.val = <double*> malloc(cap * sizeof(double))
    h.node = <long long*> malloc(cap * sizeof(long long))
    h.size = 0
    h.cap = cap
    return h.val != NULL and h.node != NULL

cdef inline void heap_free(Heap* h) noexcept nogil:
    free(h.val)
    free(h.node)

cdef inline bint heap_less(Heap* h, Py_ssize_t i, Py_ssize_t j) noexcept nogil:
    if h.val[i] != h.val[j]:
        return h.val[i] < h.val[j]
    return h.node[i] < h.node[j]

cdef inline bint heap_push(Heap* h, double v, long long nd) noexcept nogil:
    cdef Py_ssize_t i, p
    cdef double tv
    cdef long long tn
    if h.size == h.cap:
        h.cap *= 2
        h.val = <double*> realloc(h.val, h.cap * sizeof(double))
        h.node = <long long*> realloc(h.node, h.cap * sizeof(long long))
        if h.val == NULL or h.node == NULL:
            return False
    i = h.size
    h.val[i] = v
    h.node[i] = nd
    h.size += 1
    while i > 0:
        p = (i - 1) >> 1
        if heap_less(h, i, p):
            tv = h.val[i]; h.val[i] = h.val[p]; h.val[p] = tv
            tn = h.node[i]; h.node[i] = h.node[p]; h.node[p] = tn
            i = p
        else:
            break
    return True

cdef inline void heap_pop(Heap* h, double* v, long long* nd) noexcept nogil:
    cdef Py_ssize_t i = 0, l, r, m
    cdef double tv
    cdef long long tn
    v[0] = h.val[0]
    nd[0] = h.node[0]
    h.size -= 1
    h.val[0] = h.val[h.size]
    h.node[0] = h.node[h.size]
    while True:
        l = 2 * i + 1
        r = l + 1
        m = i
        if l < h.size and heap_less(h, l, m):
            m = l
        if r < h.size and heap_less(h, r, m):
            m = r
        if m == i:
            break
        tv = h.val[i]; h.val[i] = h.val[m]; h.val[m] = tv
        tn = h.node[i]; h.node[i] = h.node[m]; h.node[m] = tn
        i = m


# --------------------------------------------------------------------------
# triangle facet minimization (exact KKT over sub-simplices, two quadratic
# pieces for the forward model)

cdef inline double _cand1(double* Q, double* wd, double* u, int i, bint forward) noexcept nogil:
    cdef double qii = Q[4 * i]
    cdef double w
    if forward:
        w = wd[i]
        if w < 0.0:
            qii += w * w
    return u[i] + sqrt(qii)


cdef inline double _cand2(double* Q, double* wd, double* u, int i, int j,
                          int piece, double wscale) noexcept nogil:
    cdef double a = Q[3 * i + i]
    cdef double b = Q[3 * i + j]
    cdef double c = Q[3 * j + j]
    cdef double det, i00, i01, i11, alpha, beta, gamma, disc, lam, r, xi_i, xi_j, s
    if piece:
        a += wd[i] * wd[i]
        b += wd[i] * wd[j]
        c += wd[j] * wd[j]
    det = a * c - b * b
    if det <= 0.0:
        return INFINITY
    i00 = c / det; i01 = -b / det; i11 = a / det
    alpha = i00 + 2.0 * i01 + i11
    beta = (i00 + i01) * u[i] + (i01 + i11) * u[j]
    gamma = i00 * u[i] * u[i] + 2.0 * i01 * u[i] * u[j] + i11 * u[j] * u[j]
    disc = beta * beta - alpha * (gamma - 1.0)
    if alpha <= 0.0 or disc < 0.0:
        return INFINITY
    lam = (beta + sqrt(disc)) / alpha
    r = alpha * lam - beta
    if r <= 0.0:
        return INFINITY
    xi_i = (i00 * (lam - u[i]) + i01 * (lam - u[j])) / r
    xi_j = (i01 * (lam - u[i]) + i11 * (lam - u[j])) / r
    if xi_i < -XI_TOL or xi_j < -XI_TOL:
        return INFINITY
    if wscale >= 0.0:
        s = xi_i * wd[i] + xi_j * wd[j]
        if piece == 0:
            if s < -XI_TOL * wscale:
                return INFINITY
        else:
            if s > XI_TOL * wscale:
                return INFINITY
    return lam


cdef inline double _cand3(double* Q, double* wd, double* u, int piece,
                          double wscale) noexcept nogil:
    cdef double a00 = Q[0], a01 = Q[1], a02 = Q[2]
    cdef double a11 = Q[4], a12 = Q[5], a22 = Q[8]
    cdef double c00, c01, c02, c11, c12, c22, det
    cdef double inv[9]
    cdef double alpha, beta, gamma, disc, lam, r, s, xi
    cdef int i, j
    if piece:
        a00 += wd[0] * wd[0]; a01 += wd[0] * wd[1]; a02 += wd[0] * wd[2]
        a11 += wd[1] * wd[1]; a12 += wd[1] * wd[2]; a22 += wd[2] * wd[2]
    c00 = a11 * a22 - a12 * a12
    c01 = a02 * a12 - a01 * a22
    c02 = a01 * a12 - a02 * a11
    c11 = a00 * a22 - a02 * a02
    c12 = a01 * a02 - a00 * a12
    c22 = a00 * a11 - a01 * a01
    det = a00 * c00 + a01 * c01 + a02 * c02
    if det <= 0.0:
        return INFINITY
    inv[0] = c00 / det; inv[1] = c01 / det; inv[2] = c02 / det
    inv[3] = c01 / det; inv[4] = c11 / det; inv[5] = c12 / det
    inv[6] = c02 / det; inv[7] = c12 / det; inv[8] = c22 / det
    alpha = 0.0; beta = 0.0; gamma = 0.0
    for i in range(3):
        for j in range(3):
            alpha += inv[3 * i + j]
            beta += inv[3 * i + j] * u[j]
            gamma += u[i] * inv[3 * i + j] * u[j]
    disc = beta * beta - alpha * (gamma - 1.0)
    if alpha <= 0.0 or disc < 0.0:
        return INFINITY
    lam = (beta + sqrt(disc)) / alpha
    r = alpha * lam - beta
    if r <= 0.0:
        return INFINITY
    s = 0.0
    for i in range(3):
        xi = (inv[3 * i] * (lam - u[0]) + inv[3 * i + 1] * (lam - u[1])
              + inv[3 * i + 2] * (lam - u[2])) / r
        if xi < -XI_TOL:
            return INFINITY
        s += xi * wd[i]
    if wscale >= 0.0:
        if piece == 0:
            if s < -XI_TOL * wscale:
                return INFINITY
        else:
            if s > XI_TOL * wscale:
                return INFINITY
    return lam


cdef double facet_min(double* Q, double* wd, double* u, bint forward) noexcept nogil:
    cdef double best = INFINITY
    cdef double cand, wscale
    cdef int i, j, piece, npieces
    cdef bint fin[3]
    cdef int nfin = 0
    for i in range(3):
        fin[i] = u[i] < INFINITY
        if fin[i]:
            nfin += 1
    if nfin == 0:
        return INFINITY
    if forward:
        wscale = 1.0
        for i in range(3):
            if wd[i] > wscale:
                wscale = wd[i]
            elif -wd[i] > wscale:
                wscale = -wd[i]
        npieces = 2
    else:
        wscale = -1.0
        npieces = 1
    for i in range(3):
        if fin[i]:
            cand = _cand1(Q, wd, u, i, forward)
            if cand < best:
                best = cand
    for i in range(3):
        if not fin[i]:
            continue
        for j in range(i + 1, 3):
            if not fin[j]:
                continue
            for piece in range(npieces):
                cand = _cand2(Q, wd, u, i, j, piece, wscale)
                if cand < best:
                    best = cand
    if nfin == 3:
        for piece in range(npieces):
            cand = _cand3(Q, wd, u, piece, wscale)
            if cand < best:
                best = cand
    return best


# --------------------------------------------------------------------------
# largest root of sum a_j (lam - b_j)_+^2 = 1 (terms pre-gathered)

cdef double positive_part_root(double* bs, double* as_, int nterms) noexcept nogil:
    cdef int i, j, m, cnt = 0
    cdef double A = 0.0, B = 0.0, C = 0.0
    cdef double tb, ta, disc, lam
    # insertion sort by b
    for i in range(nterms):
        if bs[i] == INFINITY or as_[i] <= 0.0:
            continue
        tb = bs[i]; ta = as_[i]
        j = cnt
        while j > 0 and bs[j - 1] > tb:
            bs[j] = bs[j - 1]; as_[j] = as_[j - 1]
            j -= 1
        bs[j] = tb; as_[j] = ta
        cnt += 1
    if cnt == 0:
        return INFINITY
    for m in range(cnt):
        A += as_[m]
        B += as_[m] * bs[m]
        C += as_[m] * bs[m] * bs[m]
        disc = B * B - A * (C - 1.0)
        if disc < 0.0:
            disc = 0.0
        lam = (B + sqrt(disc)) / A
        if m + 1 == cnt or lam <= bs[m + 1]:
            return lam
    return INFINITY


# --------------------------------------------------------------------------
# mask line-of-sight between cell centers (cells strictly between must be
# clear; boundary-corner ties visit both neighbors, erring on blocked)

cdef bint segment_clear(unsigned char[::1] smask, int n0, int n1, int n2,
                        int d, int a0, int a1, int a2,
                        int b0, int b1, int b2) noexcept nogil:
    cdef int cell[3]
    cdef int dest[3]
    cdef int dims[3]
    cdef int step[3]
    cdef double tmax[3]
    cdef double tdelta[3]
    cdef int k, kmin, delta, nsteps = 0
    cdef long long flat
    cell[0] = a0; cell[1] = a1; cell[2] = a2
    dest[0] = b0; dest[1] = b1; dest[2] = b2
    dims[0] = n0; dims[1] = n1; dims[2] = n2
    for k in range(3):
        delta = dest[k] - cell[k]
        nsteps += delta if delta > 0 else -delta
        if delta > 0:
            step[k] = 1
        elif delta < 0:
            step[k] = -1
        else:
            step[k] = 0
        if delta != 0:
            tdelta[k] = 1.0 / (delta if delta > 0 else -delta)
            tmax[k] = 0.5 * tdelta[k]
        else:
            tdelta[k] = INFINITY
            tmax[k] = INFINITY
    if nsteps <= 1:
        return True
    while True:
        kmin = 0
        if tmax[1] < tmax[kmin]:
            kmin = 1
        if d == 3 and tmax[2] < tmax[kmin]:
            kmin = 2
        if tmax[kmin] >= 1.0 - 1e-12:
            return True
        cell[kmin] += step[kmin]
        tmax[kmin] += tdelta[kmin]
        if cell[0] == dest[0] and cell[1] == dest[1] and cell[2] == dest[2]:
            return True
        flat = cell[0]
        for k in range(1, d):
            flat = flat * dims[k] + cell[k]
        if smask[flat]:
            return False


# --------------------------------------------------------------------------
# semi-Lagrangian planar solver

@cython.boundscheck(False)
@cython.wraparound(False)
cdef double _sl_facet_value(
    int nx, int ny, int no, bint forward,
    double[::1] c1, double[::1] c2, unsigned char[::1] state, double[::1] u,
    int[:, :, ::1] fac_vert, double[:, :, ::1] fac_SM, double[:, :, ::1] fac_A,
    double[:, ::1] fac_wd,
    int rx, int ry, int jr, int fid, double c1r, double c2r,
    bint accepted_only, bint has_mask, unsigned char[::1] smask,
) noexcept nogil:
    cdef double vals[3]
    cdef double Q[9]
    cdef double wd[3]
    cdef int k, i, j, vx, vy, vj
    cdef long long v
    cdef bint any_fin = False
    cdef double c1sq = c1r * c1r, c2sq = c2r * c2r
    for k in range(3):
        vals[k] = INFINITY
        vx = rx + fac_vert[fid, k, 0]
        vy = ry + fac_vert[fid, k, 1]
        if vx < 0 or vx >= nx or vy < 0 or vy >= ny:
            continue
        vj = jr + fac_vert[fid, k, 2]
        if vj < 0:
            vj += no
        elif vj >= no:
            vj -= no
        v = (<long long> vx * ny + vy) * no + vj
        if accepted_only and state[v] != ACCEPTED:
            continue
        if has_mask and not segment_clear(smask, nx, ny, 1, 2,
                                          rx, ry, 0, vx, vy, 0):
            continue
        vals[k] = u[v]
        if vals[k] < INFINITY:
            any_fin = True
    if not any_fin:
        return INFINITY
    for i in range(3):
        for j in range(3):
            Q[3 * i + j] = c1sq * fac_SM[fid, i, j] + c2sq * fac_A[fid, i, j]
        wd[i] = c1r * fac_wd[fid, i] if forward else 0.0
    return facet_min(Q, wd, vals, forward)


@cython.boundscheck(False)
@cython.wraparound(False)
def solve_sl2d(pack, seeds, stop_nodes=None):
    cdef int nx = pack.nx, ny = pack.ny, no = pack.no
    cdef bint forward = pack.forward
    cdef double[::1] c1 = pack.c1
    cdef double[::1] c2 = pack.c2
    cdef unsigned char[::1] blocked = pack.blocked
    cdef int[:, :, ::1] fac_vert = pack.fac_vert
    cdef double[:, :, ::1] fac_SM = pack.fac_SM
    cdef double[:, :, ::1] fac_A = pack.fac_A
    cdef double[:, ::1] fac_wd = pack.fac_wd
    cdef int[:, ::1] rev_entry = pack.rev_entry
    cdef int[::1] rev_start = pack.rev_start
    cdef int[::1] trig_fac = pack.trig_fac
    cdef unsigned char[::1] smask = pack.spatial_mask
    cdef bint has_mask = bool(np.asarray(pack.spatial_mask).any())

    cdef long long n = <long long> nx * ny * no
    u_arr = np.full(n, np.inf)
    state_arr = np.where(np.asarray(pack.blocked) != 0, BLOCKED, FAR).astype(np.uint8)
    order_arr = np.empty(n, dtype=np.int64)
    cdef double[::1] u = u_arr
    cdef unsigned char[::1] state = state_arr
    cdef long long[::1] order = order_arr

    stop_arr = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] stopf = stop_arr
    cdef long long n_stop = 0
    if stop_nodes is not None:
        for sn in np.unique(np.asarray(stop_nodes, dtype=np.int64)):
            if not stopf[sn]:
                stopf[sn] = 1
                n_stop += 1

    cdef Heap heap
    if not heap_init(&heap, max(<Py_ssize_t> n, 1024)):
        raise MemoryError
    cdef long long q, r, pops = 0, n_acc = 0
    cdef double val, best, cand, c1r, c2r
    cdef int jq, jr, qx, qy, rx, ry, e, t, dx, dy, da
    cdef long long rest

    for s0 in np.asarray(seeds, dtype=np.int64):
        u[s0] = 0.0
        state[s0] = TRIAL
        heap_push(&heap, 0.0, s0)

    with nogil:
        while heap.size > 0:
            heap_pop(&heap, &val, &q)
            pops += 1
            if state[q] == ACCEPTED or val > u[q]:
                continue
            state[q] = ACCEPTED
            order[n_acc] = q
            n_acc += 1
            if n_stop > 0 and stopf[q]:
                n_stop -= 1
                if n_stop == 0:
                    break
            jq = <int> (q % no)
            rest = q // no
            qy = <int> (rest % ny)
            qx = <int> (rest // ny)
            for e in range(rev_start[jq], rev_start[jq + 1]):
                dx = rev_entry[e, 0]
                dy = rev_entry[e, 1]
                da = rev_entry[e, 2]
                rx = qx - dx
                ry = qy - dy
                if rx < 0 or rx >= nx or ry < 0 or ry >= ny:
                    continue
                jr = jq - da
                if jr < 0:
                    jr += no
                elif jr >= no:
                    jr -= no
                r = (<long long> rx * ny + ry) * no + jr
                if state[r] >= ACCEPTED:
                    continue
                best = u[r]
                c1r = c1[r]
                c2r = c2[r]
                for t in range(rev_entry[e, 3], rev_entry[e, 4]):
                    cand = _sl_facet_value(
                        nx, ny, no, forward, c1, c2, state, u,
                        fac_vert, fac_SM, fac_A, fac_wd,
                        rx, ry, jr, trig_fac[t], c1r, c2r, True,
                        has_mask, smask,
                    )
                    if cand < best:
                        best = cand
                if best < u[r]:
                    u[r] = best
                    state[r] = TRIAL
                    with gil:
                        if not heap_push(&heap, best, r):
                            raise MemoryError
    heap_free(&heap)
    return u_arr, state_arr, order_arr[:n_acc].copy(), int(pops)


@cython.boundscheck(False)
@cython.wraparound(False)
def apply_sl2d(pack, u_in, nodes):
    cdef int nx = pack.nx, ny = pack.ny, no = pack.no
    cdef bint forward = pack.forward
    cdef double[::1] c1 = pack.c1
    cdef double[::1] c2 = pack.c2
    cdef unsigned char[::1] blocked = pack.blocked
    cdef int[:, :, ::1] fac_vert = pack.fac_vert
    cdef double[:, :, ::1] fac_SM = pack.fac_SM
    cdef double[:, :, ::1] fac_A = pack.fac_A
    cdef double[:, ::1] fac_wd = pack.fac_wd
    cdef int[::1] fac_start = pack.fac_start
    cdef unsigned char[::1] smask = pack.spatial_mask
    cdef bint has_mask = bool(np.asarray(pack.spatial_mask).any())
    u_arr = np.ascontiguousarray(u_in, dtype=np.float64)
    cdef double[::1] u = u_arr
    nodes_arr = np.asarray(nodes, dtype=np.int64)
    cdef long long[::1] nd = nodes_arr
    out_arr = np.empty(len(nodes_arr))
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    cdef long long r, rest
    cdef int jr, rx, ry, fid
    cdef double best, cand, c1r, c2r
    for i in range(nd.shape[0]):
        r = nd[i]
        if blocked[r]:
            out[i] = INFINITY
            continue
        jr = <int> (r % no)
        rest = r // no
        ry = <int> (rest % ny)
        rx = <int> (rest // ny)
        best = INFINITY
        c1r = c1[r]
        c2r = c2[r]
        for fid in range(fac_start[jr], fac_start[jr + 1]):
            cand = _sl_facet_value(
                nx, ny, no, forward, c1, c2, None, u,
                fac_vert, fac_SM, fac_A, fac_wd,
                rx, ry, jr, fid, c1r, c2r, False,
                has_mask, smask,
            )
            if cand < best:
                best = cand
        out[i] = best
    return out_arr


# --------------------------------------------------------------------------
# upwind finite-difference solver (2D or 3D spatial grid)

@cython.boundscheck(False)
@cython.wraparound(False)
cdef double _ham_value(
    int d, int nx, int ny, int nz, int no, bint two_sided, double h,
    double[::1] c1, double[::1] c2, unsigned char[::1] state, double[::1] u,
    int[:, ::1] sp_off, double[::1] sp_rho, int[::1] sp_start,
    int[::1] ang_idx, int[::1] ang_idx2, double[::1] ang_rho, int[::1] ang_start,
    int px, int py, int pz, int jr, bint accepted_only,
    bint has_mask, unsigned char[::1] smask,
) noexcept nogil:
    cdef double bs[40]
    cdef double as_[40]
    cdef int nterms = 0
    cdef long long r, v
    cdef int s, vx, vy, vz
    cdef double b, b2, c1r, c2r, inv_sp, inv_ang
    if d == 2:
        r = (<long long> px * ny + py) * no + jr
    else:
        r = ((<long long> px * ny + py) * nz + pz) * no + jr
    c1r = c1[r]
    c2r = c2[r]
    inv_sp = 1.0 / (c1r * c1r * h * h)
    inv_ang = 1.0 / (c2r * c2r)
    for s in range(sp_start[jr], sp_start[jr + 1]):
        vx = px - sp_off[s, 0]
        vy = py - sp_off[s, 1]
        vz = pz - sp_off[s, 2] if d == 3 else 0
        b = INFINITY
        if 0 <= vx < nx and 0 <= vy < ny and (d == 2 or 0 <= vz < nz):
            if d == 2:
                v = (<long long> vx * ny + vy) * no + jr
            else:
                v = ((<long long> vx * ny + vy) * nz + vz) * no + jr
            if (not accepted_only or state[v] == ACCEPTED) and (
                not has_mask or segment_clear(smask, nx, ny, nz, d,
                                              px, py, pz, vx, vy, vz)
            ):
                b = u[v]
        if two_sided:
            vx = px + sp_off[s, 0]
            vy = py + sp_off[s, 1]
            vz = pz + sp_off[s, 2] if d == 3 else 0
            if 0 <= vx < nx and 0 <= vy < ny and (d == 2 or 0 <= vz < nz):
                if d == 2:
                    v = (<long long> vx * ny + vy) * no + jr
                else:
                    v = ((<long long> vx * ny + vy) * nz + vz) * no + jr
                if (not accepted_only or state[v] == ACCEPTED) and (
                    not has_mask or segment_clear(smask, nx, ny, nz, d,
                                                  px, py, pz, vx, vy, vz)
                ):
                    b2 = u[v]
                    if b2 < b:
                        b = b2
        bs[nterms] = b
        as_[nterms] = sp_rho[s] * inv_sp
        nterms += 1
    for s in range(ang_start[jr], ang_start[jr + 1]):
        if d == 2:
            v = (<long long> px * ny + py) * no + ang_idx[s]
        else:
            v = ((<long long> px * ny + py) * nz + pz) * no + ang_idx[s]
        b = INFINITY
        if not accepted_only or state[v] == ACCEPTED:
            b = u[v]
        if ang_idx2[s] >= 0:
            if d == 2:
                v = (<long long> px * ny + py) * no + ang_idx2[s]
            else:
                v = ((<long long> px * ny + py) * nz + pz) * no + ang_idx2[s]
            if not accepted_only or state[v] == ACCEPTED:
                b2 = u[v]
                if b2 < b:
                    b = b2
        bs[nterms] = b
        as_[nterms] = ang_rho[s] * inv_ang
        nterms += 1
    return positive_part_root(bs, as_, nterms)


@cython.boundscheck(False)
@cython.wraparound(False)
def solve_ham(pack, seeds, stop_nodes=None):
    dims = pack.dims
    cdef int d = len(dims)
    cdef int nx = dims[0], ny = dims[1]
    cdef int nz = dims[2] if d == 3 else 1
    cdef int no = pack.no
    cdef bint two_sided = pack.two_sided
    cdef double h = pack.h
    cdef double[::1] c1 = pack.c1
    cdef double[::1] c2 = pack.c2
    cdef int[:, ::1] sp_off = pack.sp_off
    cdef double[::1] sp_rho = pack.sp_rho
    cdef int[::1] sp_start = pack.sp_start
    cdef int[::1] ang_idx = pack.ang_idx
    cdef int[::1] ang_idx2 = pack.ang_idx2
    cdef double[::1] ang_rho = pack.ang_rho
    cdef int[::1] ang_start = pack.ang_start
    cdef unsigned char[::1] smask = pack.spatial_mask
    cdef bint has_mask = bool(np.asarray(pack.spatial_mask).any())

    cdef long long n = <long long> nx * ny * nz * no
    u_arr = np.full(n, np.inf)
    state_arr = np.where(np.asarray(pack.blocked) != 0, BLOCKED, FAR).astype(np.uint8)
    order_arr = np.empty(n, dtype=np.int64)
    cdef double[::1] u = u_arr
    cdef unsigned char[::1] state = state_arr
    cdef long long[::1] order = order_arr

    stop_arr = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] stopf = stop_arr
    cdef long long n_stop = 0
    if stop_nodes is not None:
        for sn in np.unique(np.asarray(stop_nodes, dtype=np.int64)):
            if not stopf[sn]:
                stopf[sn] = 1
                n_stop += 1

    cdef Heap heap
    if not heap_init(&heap, max(<Py_ssize_t> n, 1024)):
        raise MemoryError
    cdef long long q, r, rest, pops = 0, n_acc = 0
    cdef double val, cand
    cdef int jq, jr, qx, qy, qz, rx, ry, rz, s, side, nsides

    for s0 in np.asarray(seeds, dtype=np.int64):
        u[s0] = 0.0
        state[s0] = TRIAL
        heap_push(&heap, 0.0, s0)

    nsides = 2 if two_sided else 1
    with nogil:
        while heap.size > 0:
            heap_pop(&heap, &val, &q)
            pops += 1
            if state[q] == ACCEPTED or val > u[q]:
                continue
            state[q] = ACCEPTED
            order[n_acc] = q
            n_acc += 1
            if n_stop > 0 and stopf[q]:
                n_stop -= 1
                if n_stop == 0:
                    break
            jq = <int> (q % no)
            rest = q // no
            if d == 2:
                qz = 0
                qy = <int> (rest % ny)
                qx = <int> (rest // ny)
            else:
                qz = <int> (rest % nz)
                rest = rest // nz
                qy = <int> (rest % ny)
                qx = <int> (rest // ny)
            # spatial triggers (same orientation)
            for s in range(sp_start[jq], sp_start[jq + 1]):
                for side in range(nsides):
                    if side == 0:
                        rx = qx + sp_off[s, 0]
                        ry = qy + sp_off[s, 1]
                        rz = qz + sp_off[s, 2] if d == 3 else 0
                    else:
                        rx = qx - sp_off[s, 0]
                        ry = qy - sp_off[s, 1]
                        rz = qz - sp_off[s, 2] if d == 3 else 0
                    if rx < 0 or rx >= nx or ry < 0 or ry >= ny:
                        continue
                    if d == 3 and (rz < 0 or rz >= nz):
                        continue
                    if d == 2:
                        r = (<long long> rx * ny + ry) * no + jq
                    else:
                        r = ((<long long> rx * ny + ry) * nz + rz) * no + jq
                    if state[r] >= ACCEPTED:
                        continue
                    cand = _ham_value(
                        d, nx, ny, nz, no, two_sided, h, c1, c2, state, u,
                        sp_off, sp_rho, sp_start, ang_idx, ang_idx2, ang_rho,
                        ang_start, rx, ry, rz, jq, True, has_mask, smask,
                    )
                    if cand < u[r]:
                        u[r] = cand
                        state[r] = TRIAL
                        with gil:
                            if not heap_push(&heap, cand, r):
                                raise MemoryError
            # angular triggers (same position)
            for s in range(ang_start[jq], ang_start[jq + 1]):
                for side in range(2):
                    jr = ang_idx[s] if side == 0 else ang_idx2[s]
                    if jr < 0:
                        continue
                    if d == 2:
                        r = (<long long> qx * ny + qy) * no + jr
                    else:
                        r = ((<long long> qx * ny + qy) * nz + qz) * no + jr
                    if state[r] >= ACCEPTED:
                        continue
                    cand = _ham_value(
                        d, nx, ny, nz, no, two_sided, h, c1, c2, state, u,
                        sp_off, sp_rho, sp_start, ang_idx, ang_idx2, ang_rho,
                        ang_start, qx, qy, qz, jr, True, has_mask, smask,
                    )
                    if cand < u[r]:
                        u[r] = cand
                        state[r] = TRIAL
                        with gil:
                            if not heap_push(&heap, cand, r):
                                raise MemoryError
    heap_free(&heap)
    return u_arr, state_arr, order_arr[:n_acc].copy(), int(pops)


@cython.boundscheck(False)
@cython.wraparound(False)
def apply_ham(pack, u_in, nodes):
    dims = pack.dims
    cdef int d = len(dims)
    cdef int nx = dims[0], ny = dims[1]
    cdef int nz = dims[2] if d == 3 else 1
    cdef int no = pack.no
    cdef bint two_sided = pack.two_sided
    cdef double h = pack.h
    cdef double[::1] c1 = pack.c1
    cdef double[::1] c2 = pack.c2
    cdef unsigned char[::1] blocked = pack.blocked
    cdef int[:, ::1] sp_off = pack.sp_off
    cdef double[::1] sp_rho = pack.sp_rho
    cdef int[::1] sp_start = pack.sp_start
    cdef int[::1] ang_idx = pack.ang_idx
    cdef int[::1] ang_idx2 = pack.ang_idx2
    cdef double[::1] ang_rho = pack.ang_rho
    cdef int[::1] ang_start = pack.ang_start
    cdef unsigned char[::1] smask = pack.spatial_mask
    cdef bint has_mask = bool(np.asarray(pack.spatial_mask).any())
    u_arr = np.ascontiguousarray(u_in, dtype=np.float64)
    cdef double[::1] u = u_arr
    nodes_arr = np.asarray(nodes, dtype=np.int64)
    cdef long long[::1] nd = nodes_arr
    out_arr = np.empty(len(nodes_arr))
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    cdef long long r, rest
    cdef int jr, rx, ry, rz
    for i in range(nd.shape[0]):
        r = nd[i]
        if blocked[r]:
            out[i] = INFINITY
            continue
        jr = <int> (r % no)
        rest = r // no
        if d == 2:
            rz = 0
            ry = <int> (rest % ny)
            rx = <int> (rest // ny)
        else:
            rz = <int> (rest % nz)
            rest = rest // nz
            ry = <int> (rest % ny)
            rx = <int> (rest // ny)
        out[i] = _ham_value(
            d, nx, ny, nz, no, two_sided, h, c1, c2, None, u,
            sp_off, sp_rho, sp_start, ang_idx, ang_idx2, ang_rho, ang_start,
            rx, ry, rz, jr, False, has_mask, smask,
        )
    return out_arr
