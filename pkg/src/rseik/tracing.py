"""Geodesic extraction from a solved distance map.

The minimizing path into a state descends the map along the intrinsic
gradient: the covector dU is raised with the inverse metric tensor, with a
mode switch for the no-reverse-gear model (driving mode where the spatial
gradient points along the orientation, in-place-rotation mode where it
points against it).  Post-processing classifies cusps (driving direction
reversals) and keypoints (in-place rotation intervals).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.ndimage import gaussian_filter1d

from .errors import DomainError, RseikError
from .geometry import CostSample, ModelParams, PointPO, Tangent, Cotangent, finsler_cost
from .grid import Domain
from .solver import DistanceMap


class TracingError(RseikError):
    """Backtracking failed (step budget, stationary gradient, ...)."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class PathSample:
    t: float
    point: PointPO
    mode: str        # "plus" | "minus" | "boundary"
    u: float         # map value at the sample


@dataclass
class GeodesicPath:
    samples: list
    length: float
    source: PointPO
    end: PointPO

    def positions(self) -> np.ndarray:
        return np.array([s.point.x for s in self.samples])

    def orientations(self) -> np.ndarray:
        return np.array([s.point.n for s in self.samples])

    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])


@dataclass(frozen=True)
class InterestPoint:
    kind: str               # "cusp" | "keypoint"
    t_interval: tuple       # (t0, t1)
    location: np.ndarray    # spatial position


def sample_cost(cost, domain: Domain, p: PointPO) -> CostSample:
    """Cost pair at the node nearest to p (uniform fields broadcast)."""
    c1, c2 = cost.c1, cost.c2
    if np.ndim(c1) == 0 and np.ndim(c2) == 0:
        return CostSample(float(c1), float(c2))
    idx = domain.snap_point(p)
    c1a = np.broadcast_to(np.asarray(c1, float), domain.shape)
    c2a = np.broadcast_to(np.asarray(c2, float), domain.shape)
    return CostSample(float(c1a[idx]), float(c2a[idx]))


# --------------------------------------------------------------------------
# Differentiation and interpolation of the map

class MapField:
    """Interpolated values and gradients of a distance map.

    Spatial derivatives are Gaussian-derivative filtered at a configurable
    scale (in voxels); the angular part uses cyclic central differences on
    the circle and a tangent-plane least-squares fit over the tessellation
    neighbors on the 2-sphere.  Unreached or masked nodes are filled with a
    finite ceiling before filtering, so gradients near them point back into
    the solved region.
    """

    def __init__(self, dmap: DistanceMap, smoothing: float = 0.5):
        self.dmap = dmap
        self.domain = dmap.domain
        self.smoothing = smoothing
        U = dmap.values
        finite = np.isfinite(U)
        if not finite.any():
            raise DomainError("distance map holds no finite values")
        self.valid = finite
        # Fill walls and unreached nodes with the nearest solved value in
        # their orientation layer plus a ramp growing into the invalid
        # region.  A flat-ish extension keeps the smoothed gradient
        # tangential along walls (a constant ceiling would repel the
        # descent away from doorways); the ramp still makes wall interiors
        # uphill so the descent cannot tunnel through.
        Uf = U.copy()
        if not finite.all():
            from scipy.ndimage import distance_transform_edt

            with np.errstate(invalid="ignore"):
                diffs = np.abs(np.diff(U, axis=0))
            diffs = diffs[np.isfinite(diffs)]
            gscale = float(np.median(diffs)) if diffs.size else self.domain.grid.h
            ramp = 10.0 * max(gscale, 1e-12)
            for j in range(self.domain.n_orient):
                layer = U[..., j]
                bad = ~finite[..., j]
                if not bad.any():
                    continue
                if bad.all():
                    Uf[..., j] = float(U[finite].max()) + 1.0
                    continue
                dist, idx = distance_transform_edt(bad, return_indices=True)
                Uf[..., j] = np.where(bad, layer[tuple(idx)] + ramp * dist, layer)
        if smoothing > 0:
            Us = Uf
            for axis in range(self.domain.d):
                Us = gaussian_filter1d(Us, smoothing, axis=axis, mode="nearest")
            self.U_smooth = Us
        else:
            self.U_smooth = Uf
        self.U_fill = Uf
        h = self.domain.grid.h
        # central differences of the smoothed map (exact on linear ramps,
        # unlike the sampled Gaussian-derivative kernel at sub-cell scales)
        self.dsp = [np.gradient(self.U_smooth, h, axis=axis)
                    for axis in range(self.domain.d)]
        self.dang = self._angular_gradients()

    def _angular_gradients(self) -> np.ndarray:
        dom = self.domain
        U = self.U_smooth
        if dom.d == 2:
            no = dom.n_orient
            dth = 2.0 * math.pi / no
            dU = (np.roll(U, -1, axis=-1) - np.roll(U, 1, axis=-1)) / (2.0 * dth)
            tangents = np.stack([-dom.sphere.vertices[:, 1],
                                 dom.sphere.vertices[:, 0]], axis=1)
            return dU[..., None] * tangents          # (..., no, 2)
        out = np.zeros(U.shape + (3,))
        for j in range(dom.n_orient):
            nbrs, A = dom.sphere.gradient_operator(j)
            diff = U[..., nbrs] - U[..., j : j + 1]
            out[..., j, :] = diff @ A.T
        return out

    # -- interpolation helpers --

    def _spatial_weights(self, x):
        grid = self.domain.grid
        f = (np.asarray(x, float) - grid.origin) / grid.h
        lo = np.floor(f).astype(int)
        lo = np.clip(lo, 0, np.array(grid.dims) - 2)
        w = np.clip(f - lo, 0.0, 1.0)
        corners = []
        for bits in range(1 << self.domain.d):
            idx = tuple(lo[k] + (bits >> k & 1) for k in range(self.domain.d))
            wt = 1.0
            for k in range(self.domain.d):
                wt *= w[k] if (bits >> k & 1) else 1.0 - w[k]
            corners.append((idx, wt))
        return corners

    def _orient_weights(self, n):
        dom = self.domain
        if dom.d == 2:
            no = dom.n_orient
            theta = math.atan2(n[1], n[0]) % (2.0 * math.pi)
            f = theta / (2.0 * math.pi / no)
            j0 = int(math.floor(f)) % no
            w1 = f - math.floor(f)
            return [(j0, 1.0 - w1), ((j0 + 1) % no, w1)]
        sphere = dom.sphere
        j0 = sphere.nearest(n)
        best = None
        for t in sphere.vertex_triangles(j0):
            tri = sphere.triangles[t]
            P = sphere.vertices[tri].T           # 3x3, columns = vertices
            try:
                w = np.linalg.solve(P, np.asarray(n, float))
            except np.linalg.LinAlgError:
                continue
            s = w.sum()
            if s <= 0:
                continue
            w = w / s
            if np.all(w >= -1e-9):
                best = list(zip(map(int, tri), np.maximum(w, 0.0)))
                break
        if best is None:
            best = [(j0, 1.0)]
        return best

    def inside(self, x, margin_cells: float = 1.0) -> bool:
        grid = self.domain.grid
        f = (np.asarray(x, float) - grid.origin) / grid.h
        return bool(
            np.all(f >= margin_cells - 1e-9)
            and np.all(f <= np.array(grid.dims) - 1 - margin_cells + 1e-9)
        )

    def value(self, p: PointPO) -> float:
        total, wsum = 0.0, 0.0
        for (idx, ws) in self._spatial_weights(p.x):
            for (j, wo) in self._orient_weights(p.n):
                v = self.U_fill[idx + (j,)]
                total += ws * wo * v
                wsum += ws * wo
        return total / max(wsum, 1e-300)

    def gradient(self, p: PointPO) -> Cotangent:
        d = self.domain.d
        xhat = np.zeros(d)
        nhat = np.zeros(d)
        for (idx, ws) in self._spatial_weights(p.x):
            for (j, wo) in self._orient_weights(p.n):
                w = ws * wo
                node = idx + (j,)
                for k in range(d):
                    xhat[k] += w * self.dsp[k][node]
                nhat += w * self.dang[node]
        return Cotangent(xhat, nhat).attached_at(p)


def grid_gradient(dmap: DistanceMap, p: PointPO, smoothing: float = 0.5) -> Cotangent:
    """Differential of the map at p (spatial Gaussian derivative at the
    given scale in voxels; angular tangent-plane fit).  p must sit at least
    one cell inside the grid."""
    key = ("field", smoothing)
    if key not in dmap._cache:
        dmap._cache[key] = MapField(dmap, smoothing)
    fld = dmap._cache[key]
    if not fld.inside(p.x):
        raise DomainError(f"state {p.x} is outside the differentiable margin")
    return fld.gradient(p)


# --------------------------------------------------------------------------
# Backtracking

MODE_BAND = 1e-3


def _covector_norm(ph: Cotangent) -> float:
    return math.sqrt(float(ph.xhat @ ph.xhat + ph.nhat @ ph.nhat))


def backtrack(dmap: DistanceMap, cost, params: ModelParams, end: PointPO,
              step: float = 0.04, seed_radius: float = None,
              smoothing: float = 0.5) -> GeodesicPath:
    """Trace the minimizing path from end back to the seed of the map.

    Forward-Euler descent of the map along the intrinsic gradient,
    normalized to unit metric speed, so the parameter advances by `step`
    map-units per sample.  The mode (driving vs in-place rotation) is
    re-selected at each sample from the sign of the spatial gradient
    against the orientation.
    """
    domain = dmap.domain
    key = ("field", smoothing)
    if key not in dmap._cache:
        dmap._cache[key] = MapField(dmap, smoothing)
    fld: MapField = dmap._cache[key]

    u_end = fld.value(end)
    end_idx = domain.snap_point(end)
    if not np.isfinite(dmap.values[end_idx]):
        raise DomainError("end state has infinite distance; nothing to trace")
    h = domain.grid.h
    if seed_radius is None:
        seed_radius = 1.5 * h

    seed_states = [domain.point(s) for s in dmap.seeds]
    cs_seed = sample_cost(cost, domain, seed_states[0])
    if domain.d == 2:
        ang_res = 2.0 * math.pi / domain.n_orient
    else:
        j0 = domain.sphere.neighbors[0][0]
        ang_res = math.acos(
            max(-1.0, min(1.0, float(domain.sphere.vertices[0] @ domain.sphere.vertices[j0])))
        )
    u_stop = 1.5 * max(cs_seed.c1 * h, cs_seed.c2 * ang_res)

    eps = params.epsilon
    e2 = eps * eps
    budget = max(int(50.0 * max(u_end, u_stop) / step), 200)

    blocked = domain.grid.mask

    def entry_blocked(x):
        if blocked is None:
            return False
        ix = np.clip(
            np.rint((x - domain.grid.origin) / h).astype(int),
            0, np.array(domain.grid.dims) - 1,
        )
        return bool(blocked[tuple(ix)])

    def descent_hop(p, u_here):
        """Discrete sub-gradient rescue: step to the best neighboring node.

        Where the map is not differentiable (orientation ridges with two
        equally short rotation senses, spatial cut loci) the interpolated
        gradient can cancel; any neighbor with a lower nodal value is a
        valid descent direction, so jump to the best one.
        """
        vox = np.clip(np.rint((p.x - domain.grid.origin) / h).astype(int),
                      0, np.array(domain.grid.dims) - 1)
        if domain.d == 2:
            theta = math.atan2(p.n[1], p.n[0]) % (2.0 * math.pi)
            j0 = int(round(theta / (2.0 * math.pi / domain.n_orient))) % domain.n_orient
        else:
            j0 = domain.sphere.nearest(p.n)
        orients = (j0,) + tuple(domain.sphere.neighbors[j0])
        best_val, best_idx = u_here - 1e-12, None
        # +-2 cells covers discrete dependencies reaching past the adjacent
        # ring (long anisotropic offsets)
        for delta in np.ndindex(*(5,) * domain.d):
            nb = vox + np.array(delta) - 2
            if np.any(nb < 0) or np.any(nb >= np.array(domain.grid.dims)):
                continue
            if blocked is not None and blocked[tuple(nb)]:
                continue
            for jo in orients:
                val = dmap.values[tuple(nb) + (jo,)]
                if val < best_val:
                    best_val, best_idx = val, tuple(nb) + (jo,)
        # the full orientation fiber at the current voxel (rotation wells)
        col = dmap.values[tuple(vox)]
        jbest = int(np.argmin(np.where(np.isfinite(col), col, np.inf)))
        if col[jbest] < best_val:
            best_val, best_idx = float(col[jbest]), tuple(vox) + (jbest,)
        if best_idx is None:
            return None
        return domain.point(best_idx), float(best_val)

    samples = []
    tau = 0.0
    p = end
    best_u, best_it = math.inf, 0
    for it in range(budget + 1):
        ph = fld.gradient(p)
        cs = sample_cost(cost, domain, p)
        s = float(ph.xhat @ p.n)
        scale = _covector_norm(ph)
        if params.forward:
            if s > MODE_BAND * scale:
                mode = "plus"
            elif s < -MODE_BAND * scale:
                mode = "minus"
            else:
                mode = "boundary"
        else:
            mode = "plus"
        u_here = fld.value(p)
        samples.append(PathSample(tau, p, mode, u_here))

        close_enough = any(
            np.linalg.norm(p.x - q.x) <= seed_radius for q in seed_states
        )
        if u_here <= u_stop or (close_enough and u_here <= 2.0 * u_stop):
            break
        if u_here < best_u - 0.25 * step:
            best_u, best_it = u_here, it
        elif it - best_it > 25:
            # The smoothed gradient stopped making progress (orientation
            # ridge or cut locus).  Finish with greedy nodal descent, which
            # provably terminates at a seed: every non-seed node takes its
            # value from strictly smaller neighbors.
            cur_u = u_here
            while cur_u > u_stop:
                hop = descent_hop(p, cur_u)
                if hop is None:
                    raise TracingError(
                        f"descent stalled near x={p.x} at u={cur_u:.4g} "
                        "(flat or non-differentiable region)",
                        partial=samples,
                    )
                p, cur_u = hop
                tau += step
                samples.append(PathSample(tau, p, samples[-1].mode, cur_u))
            tau += step
            break

        if mode in ("minus", "boundary") and params.forward:
            xdot = (e2 / cs.c1 ** 2) * ph.xhat
        else:
            D = np.outer(p.n, p.n) + e2 * (np.eye(domain.d) - np.outer(p.n, p.n))
            xdot = (D @ ph.xhat) / cs.c1 ** 2
        ndot = ph.nhat / cs.c2 ** 2
        v = Tangent(xdot, ndot).attached_at(p)
        speed = finsler_cost(params, cs, p, v)
        if not math.isfinite(speed) or speed < 1e-12:
            hop = descent_hop(p, u_here)
            if hop is None:
                raise TracingError(
                    f"gradient vanished away from the seed at x={p.x}, "
                    f"u={u_here:.4g}",
                    partial=samples,
                )
            p, _ = hop
            tau += step
            continue
        x_new = p.x - (step / speed) * v.xdot
        n_new = p.n - (step / speed) * v.ndot
        n_new = n_new / np.linalg.norm(n_new)
        if not fld.inside(x_new, margin_cells=0.0):
            x_new = np.clip(
                x_new,
                domain.grid.origin,
                domain.grid.origin + h * (np.array(domain.grid.dims) - 1),
            )
        if entry_blocked(x_new):
            shrunk = x_new
            for _ in range(4):
                shrunk = 0.5 * (shrunk + p.x)
                if not entry_blocked(shrunk):
                    break
            x_new = shrunk if not entry_blocked(shrunk) else p.x
        p = PointPO(x_new, n_new)
        tau += step
    else:
        raise TracingError(
            f"step budget {budget} exhausted before reaching the seed "
            f"(u left: {fld.value(p):.4g})",
            partial=samples,
        )

    # land exactly on the nearest seed state
    q = min(seed_states, key=lambda q: np.linalg.norm(p.x - q.x))
    samples.append(PathSample(tau + step, q, samples[-1].mode, 0.0))
    total = samples[-1].t
    samples = [
        PathSample(s.t / total if total > 0 else float(i > 0), s.point, s.mode, s.u)
        for i, s in enumerate(samples)
    ]
    path = GeodesicPath(samples, 0.0, source=q, end=end)
    path.length = path_length(path, cost, params, domain=domain)
    return path


def path_length(path: GeodesicPath, cost, params: ModelParams,
                domain: Domain | None = None) -> float:
    """Metric length by the trapezoid rule on chord tangents."""
    if len(path.samples) < 2:
        return 0.0
    total = 0.0
    for a, b in zip(path.samples[:-1], path.samples[1:]):
        dx = b.point.x - a.point.x
        dn = b.point.n - a.point.n
        v = Tangent(dx, dn)
        if domain is not None:
            ca = sample_cost(cost, domain, a.point)
            cb = sample_cost(cost, domain, b.point)
        else:
            ca = cb = cost
        fa = finsler_cost(params, ca, a.point, v)
        fb = finsler_cost(params, cb, b.point, v)
        total += 0.5 * (fa + fb)
    return total


# --------------------------------------------------------------------------
# Interest points

def detect_interest_points(path: GeodesicPath, params: ModelParams,
                           theta_x: float = 0.1, persistence: int = 3,
                           align_tol: float = 0.05,
                           min_peak_u: float = 0.0) -> list:
    """Cusps and keypoints of a traced path.

    Cusps (symmetric model): the driving direction n . xdot changes sign
    between samples where it is decisive (|n . xdot| above align_tol times
    the sample speed).  Keypoints (forward model): spatial speed below
    theta_x times the angular speed for at least `persistence` consecutive
    chords.  Keypoint runs whose map values stay below min_peak_u are
    dropped; the landing cell around the seed produces sub-resolution
    rotation jitter, so callers pass a few cell-scales here.
    """
    pts = []
    samples = path.samples
    if len(samples) < 2:
        return pts
    ts, align, xspeed, nspeed = [], [], [], []
    for a, b in zip(samples[:-1], samples[1:]):
        dt = max(b.t - a.t, 1e-12)
        dx = (b.point.x - a.point.x) / dt
        dn = (b.point.n - a.point.n) / dt
        ts.append((a.t, b.t))
        xspeed.append(np.linalg.norm(dx))
        nspeed.append(np.linalg.norm(dn))
        align.append(float(dx @ a.point.n))

    if not params.forward:
        last_sign, last_k = 0, None
        for k in range(len(align)):
            speed = xspeed[k] + nspeed[k]
            if speed <= 0 or abs(align[k]) < align_tol * speed:
                continue
            sign = 1 if align[k] > 0 else -1
            if last_sign and sign != last_sign:
                t0 = ts[last_k][0]
                t1 = ts[k][1]
                loc = samples[k].point.x.copy()
                pts.append(InterestPoint("cusp", (t0, t1), loc))
            last_sign, last_k = sign, k
    else:
        def flush(run):
            if len(run) < persistence:
                return
            peak = max(max(samples[i].u, samples[i + 1].u) for i in run)
            if peak < min_peak_u:
                return
            loc = np.mean([samples[i].point.x for i in run], axis=0)
            pts.append(InterestPoint("keypoint", (ts[run[0]][0], ts[run[-1]][1]), loc))

        run = []
        for k in range(len(align)):
            slowing = xspeed[k] <= theta_x * nspeed[k] and nspeed[k] > 1e-9
            if slowing:
                run.append(k)
            else:
                flush(run)
                run = []
        flush(run)
    return pts


# --------------------------------------------------------------------------
# Endpoint classification for the planar uniform-cost forward model

def _keypoint_band_halfwidth(x: float) -> float:
    """Reach bound |y| <= b(x) for 0 <= x < 2 (real-integral form).

    Rewrites the imaginary-argument incomplete elliptic integral of the
    second kind as a real quadrature: b(x) = x * int_0^w sqrt(1 - m
    sinh^2 t) dt with w = arcsinh(x / sqrt(4 - x^2)) and m = (4 - x^2) /
    x^2.
    """
    if x <= 0.0:
        return 0.0
    if x >= 2.0:
        return math.inf
    w = math.asinh(x / math.sqrt(4.0 - x * x))
    m = (4.0 - x * x) / (x * x)

    def f(t):
        val = 1.0 - m * math.sinh(t) ** 2
        return math.sqrt(max(val, 0.0))

    val, _ = quad(f, 0.0, w, limit=200)
    return x * val


def classify_endpoint_2d(p, in_R=None) -> str:
    """Keypoint placement case for a forward-model geodesic from the origin.

    Cases: "B" (keypoint at the start, x < 0), "A" (no keypoint, endpoint
    reachable without one), "C1"/"C2" (keypoint only at the endpoint),
    "unknown" where the classification is not determined.
    """
    x, y = float(p[0]), float(p[1])
    if x < 0.0:
        return "B"
    if in_R is True:
        return "A"
    if in_R is False:
        if x >= 2.0:
            return "C1"
        if abs(y) <= _keypoint_band_halfwidth(x):
            return "C2"
        return "unknown"
    return "unknown"
