"""Reeds-Shepp car metrics on the position-orientation space R^d x S^(d-1).

A state couples a position ``x`` in R^d with a unit orientation ``n`` on the
sphere.  The symmetric model charges spatial motion only along +-n; the
forward model additionally forbids motion against n (no reverse gear).  Both
are relaxed by a parameter ``epsilon`` in (0, 1] that prices the forbidden
directions at 1/epsilon instead of infinity, so the relaxed metrics stay
finite and continuous.  This module evaluates the primal metrics, their
convex duals, the associated metric tensors, and related small utilities.
All functions are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SingularMetricError

INF = math.inf

# |xdot ^ n| <= COLLINEAR_RTOL * |xdot| counts as collinear when epsilon == 0.
COLLINEAR_RTOL = 1e-9

# Costs below this floor are rejected at construction.
COST_FLOOR = 1e-6

VARIANTS = ("symmetric", "forward")


def _as_vec(a, name: str) -> np.ndarray:
    v = np.asarray(a, dtype=float)
    if v.ndim != 1 or v.shape[0] not in (2, 3):
        raise DomainError(f"{name} must be a vector of length 2 or 3, got shape {v.shape}")
    return v


@dataclass(frozen=True)
class PointPO:
    """State p = (x, n): position x in R^d, unit orientation n in S^(d-1)."""

    x: np.ndarray
    n: np.ndarray

    def __post_init__(self):
        x = _as_vec(self.x, "x")
        n = _as_vec(self.n, "n")
        if x.shape != n.shape:
            raise DomainError(f"x and n must share a dimension, got {x.shape} vs {n.shape}")
        nn = float(np.linalg.norm(n))
        if abs(nn - 1.0) > 1e-6:
            raise DomainError(f"orientation must be a unit vector, |n| = {nn:.6g}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "n", n / nn)

    @property
    def d(self) -> int:
        return self.x.shape[0]

    @staticmethod
    def from_angle(x, theta: float) -> "PointPO":
        """2D convenience: orientation from a planar angle."""
        return PointPO(np.asarray(x, dtype=float), np.array([math.cos(theta), math.sin(theta)]))


@dataclass(frozen=True)
class Tangent:
    """Velocity (xdot, ndot); ndot is projected tangent to the sphere at use sites."""

    xdot: np.ndarray
    ndot: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "xdot", _as_vec(self.xdot, "xdot"))
        object.__setattr__(self, "ndot", _as_vec(self.ndot, "ndot"))

    def attached_at(self, p: PointPO) -> "Tangent":
        """Project ndot onto the tangent plane of the sphere at p.n."""
        nd = self.ndot - (self.ndot @ p.n) * p.n
        return Tangent(self.xdot, nd)


@dataclass(frozen=True)
class Cotangent:
    """Momentum (xhat, nhat); nhat is projected tangent to the sphere at use sites."""

    xhat: np.ndarray
    nhat: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "xhat", _as_vec(self.xhat, "xhat"))
        object.__setattr__(self, "nhat", _as_vec(self.nhat, "nhat"))

    def attached_at(self, p: PointPO) -> "Cotangent":
        nh = self.nhat - (self.nhat @ p.n) * p.n
        return Cotangent(self.xhat, nh)

    def pair(self, v: Tangent) -> float:
        return float(self.xhat @ v.xdot + self.nhat @ v.ndot)


@dataclass(frozen=True)
class ModelParams:
    """Model selector: variant plus the relaxation epsilon.

    epsilon = 0 (the exact, possibly infinite-valued metric) is only legal
    with allow_exact=True, and only for metric evaluation, never for solves.
    """

    variant: str
    epsilon: float
    allow_exact: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise DomainError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.allow_exact:
            if not 0.0 <= self.epsilon <= 1.0:
                raise DomainError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        elif not 0.0 < self.epsilon <= 1.0:
            raise DomainError(f"epsilon must lie in (0, 1], got {self.epsilon}")

    @property
    def forward(self) -> bool:
        return self.variant == "forward"


@dataclass(frozen=True)
class CostSample:
    """Pointwise cost pair: c1 prices spatial motion, c2 angular motion."""

    c1: float
    c2: float
    floor: float = COST_FLOOR

    def __post_init__(self):
        if not (self.c1 >= self.floor and self.c2 >= self.floor):
            raise DomainError(
                f"costs must be >= {self.floor}: got c1={self.c1}, c2={self.c2}"
            )


UNIT_COST = CostSample(1.0, 1.0)


def wedge_sq(a: np.ndarray, n: np.ndarray) -> float:
    """Squared norm of the component of a orthogonal to the unit vector n.

    Computed through the explicit projection; the difference-of-squares
    form loses half the digits near collinearity, which matters for the
    exact (epsilon = 0) admissibility test.
    """
    r = a - (a @ n) * n
    return float(r @ r)


def finsler_cost(params: ModelParams, cost: CostSample, p: PointPO, v: Tangent) -> float:
    """Evaluate the (relaxed) Reeds-Shepp metric at state p on velocity v.

    Returns +inf only when epsilon = 0 and v violates the admissibility
    constraints (spatial velocity not collinear with n, or, for the forward
    variant, pointing against n).  1-homogeneous in v.
    """
    v = v.attached_at(p)
    xdot, ndot = v.xdot, v.ndot
    n = p.n
    dot = float(xdot @ n)
    wsq = wedge_sq(xdot, n)
    ang = cost.c2 ** 2 * float(ndot @ ndot)
    eps = params.epsilon
    if eps == 0.0:
        xnorm = math.sqrt(max(float(xdot @ xdot), 0.0))
        if math.sqrt(wsq) > COLLINEAR_RTOL * xnorm:
            return INF
        if params.forward and dot < 0.0:
            return INF
        return math.sqrt(cost.c1 ** 2 * dot * dot + ang)
    inv2 = 1.0 / (eps * eps)
    if params.forward:
        spatial = max(dot, 0.0) ** 2 + inv2 * wsq + inv2 * min(dot, 0.0) ** 2
    else:
        spatial = dot * dot + inv2 * wsq
    return math.sqrt(cost.c1 ** 2 * spatial + ang)


def dual_cost(params: ModelParams, cost: CostSample, p: PointPO, ph: Cotangent) -> float:
    """Evaluate the dual metric (the Hamiltonian's square root) on a covector.

    For epsilon = 0 the symmetric limit and the forward one-sided dual are
    used; both are finite everywhere.
    """
    ph = ph.attached_at(p)
    xhat, nhat = ph.xhat, ph.nhat
    n = p.n
    dot = float(xhat @ n)
    wsq = wedge_sq(xhat, n)
    ang = float(nhat @ nhat) / cost.c2 ** 2
    eps = params.epsilon
    e2 = eps * eps
    if params.forward:
        spatial = max(dot, 0.0) ** 2 + e2 * min(dot, 0.0) ** 2 + e2 * wsq
    else:
        spatial = dot * dot + e2 * wsq
    return math.sqrt(spatial / cost.c1 ** 2 + ang)


def generic_primal_norm(M: np.ndarray, w: np.ndarray, v: np.ndarray) -> float:
    """Norm v -> sqrt((Mv, v) + (w, v)_-^2) for SPD M."""
    M = np.asarray(M, float)
    w = np.asarray(w, float)
    v = np.asarray(v, float)
    return math.sqrt(float(v @ M @ v) + min(float(w @ v), 0.0) ** 2)


def generic_dual_norm(M: np.ndarray, w: np.ndarray, ph: np.ndarray) -> float:
    """Dual of v -> sqrt((Mv, v) + (w, v)_-^2).

    Closed form: sqrt((ph, Mhat ph) + (ph, what)_+^2) with
    Mhat = (M + w (x) w)^-1 and what = M^-1 w / sqrt(1 + (w, M^-1 w)).
    """
    M = np.asarray(M, float)
    w = np.asarray(w, float)
    ph = np.asarray(ph, float)
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise DomainError("M must be symmetric positive definite")
    Minv_w = np.linalg.solve(M, w)
    Mhat = np.linalg.inv(M + np.outer(w, w))
    what = Minv_w / math.sqrt(1.0 + float(w @ Minv_w))
    return math.sqrt(float(ph @ Mhat @ ph) + max(float(ph @ what), 0.0) ** 2)


def dn_matrix(n: np.ndarray, eps: float) -> np.ndarray:
    """SPD matrix with eigenvalue 1 along n and eps^2 orthogonally to it."""
    n = np.asarray(n, float)
    nn = float(np.linalg.norm(n))
    if abs(nn - 1.0) > 1e-6:
        raise DomainError(f"orientation must be a unit vector, |n| = {nn:.6g}")
    n = n / nn
    d = n.shape[0]
    return np.outer(n, n) + eps * eps * (np.eye(d) - np.outer(n, n))


def spatial_quadratic(n: np.ndarray, eps: float) -> np.ndarray:
    """Inverse of dn_matrix: eigenvalue 1 along n, eps^-2 orthogonally.

    This is the quadratic form of the symmetric model's spatial norm (up to
    the c1^2 factor).
    """
    n = np.asarray(n, float)
    d = n.shape[0]
    return np.outer(n, n) + (np.eye(d) - np.outer(n, n)) / (eps * eps)


def assemble_norm_data(params: ModelParams, cost: CostSample, n: np.ndarray):
    """SPD block matrix and asymmetry vector reproducing the model metric.

    Returns (M, w) acting on stacked vectors (xdot, ndot) in R^(2d), such
    that generic_primal_norm(M, w, (xdot, ndot)) == finsler_cost on tangent
    velocities.  The angular block is isotropic so restriction to the
    sphere's tangent plane is automatic.
    """
    if params.epsilon == 0.0:
        raise SingularMetricError("matrix form requires epsilon > 0")
    n = np.asarray(n, float)
    d = n.shape[0]
    M = np.zeros((2 * d, 2 * d))
    M[:d, :d] = cost.c1 ** 2 * spatial_quadratic(n, params.epsilon)
    M[d:, d:] = cost.c2 ** 2 * np.eye(d)
    w = np.zeros(2 * d)
    if params.forward:
        w[:d] = cost.c1 * math.sqrt(1.0 / params.epsilon ** 2 - 1.0) * n
    return M, w


def metric_tensor_apply(cost: CostSample, p: PointPO, eps: float, v: Tangent) -> float:
    """Quadratic metric tensor of the symmetric model: G(v, v)."""
    params = ModelParams("symmetric", eps, allow_exact=True)
    f = finsler_cost(params, cost, p, v)
    return f * f


def inverse_metric_apply(
    cost: CostSample, p: PointPO, eps: float, which: str, ph: Cotangent
) -> Tangent:
    """Raise a covector: the tangent g with G(g, .) = <ph, .>.

    which = "G" uses the anisotropic tensor (spatial block c1^-2 D_n^eps);
    which = "Gtilde" the spatially isotropic one (spatial block eps^2 c1^-2).
    """
    if eps == 0.0:
        raise SingularMetricError("inverse metric tensor requires epsilon > 0")
    if which not in ("G", "Gtilde"):
        raise DomainError(f"which must be 'G' or 'Gtilde', got {which!r}")
    ph = ph.attached_at(p)
    if which == "G":
        xdot = dn_matrix(p.n, eps) @ ph.xhat / cost.c1 ** 2
    else:
        xdot = (eps * eps / cost.c1 ** 2) * ph.xhat
    ndot = ph.nhat / cost.c2 ** 2
    return Tangent(xdot, ndot)


def tangent_basis(n: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the tangent plane at n, shape (d-1, d)."""
    n = np.asarray(n, float)
    if n.shape[0] == 2:
        return np.array([[-n[1], n[0]]])
    k = int(np.argmin(np.abs(n)))
    t1 = np.zeros(3)
    t1[k] = 1.0
    t1 -= (t1 @ n) * n
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(n, t1)
    return np.array([t1, t2])


def control_set_boundary(
    params: ModelParams, cost: CostSample, p: PointPO, samples: int
) -> list[Tangent]:
    """Tangents of unit metric cost, covering direction space.

    Directions are drawn deterministically (seeded) on the unit sphere of
    the (2d-1)-dimensional tangent space and rescaled to the metric's unit
    level set.  Directions of infinite cost (epsilon = 0) are skipped.
    """
    if samples < 1:
        raise DomainError("samples must be >= 1")
    d = p.d
    basis = tangent_basis(p.n)
    rng = np.random.default_rng(1234)
    dirs = rng.standard_normal((samples, 2 * d - 1))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    out = []
    for u in dirs:
        v = Tangent(u[:d].copy(), u[d:] @ basis)
        f = finsler_cost(params, cost, p, v)
        if not math.isfinite(f) or f <= 0.0:
            continue
        out.append(Tangent(v.xdot / f, v.ndot / f))
    return out
