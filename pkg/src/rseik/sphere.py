"""Sphere tessellations: uniform S^1 sampling and subdivided-icosahedron S^2.

Both are wrapped in a SphereGrid carrying vertices, adjacency, and (for S^2)
triangles plus per-vertex helpers used by the solvers: non-negative upwind
edge weights reproducing the squared tangential gradient on linear
functions, and least-squares operators estimating that gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from .errors import DomainError


@dataclass
class SphereGrid:
    kind: str                    # "s1_uniform" | "s2_icosphere"
    vertices: np.ndarray         # (no, d) unit vectors
    neighbors: tuple             # tuple of int tuples, per vertex
    triangles: np.ndarray | None = None   # (nt, 3) vertex indices, S^2 only
    param: int = 0               # N for S^1, refinement level k for S^2
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def d(self) -> int:
        return self.vertices.shape[1]

    def nearest(self, n) -> int:
        """Index of the vertex with the largest dot product against n."""
        return int(np.argmax(self.vertices @ np.asarray(n, float)))

    # --- derived per-vertex data, built lazily and cached -----------------

    def upwind_scheme(self, j: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Angular upwind terms at vertex j: (idx, idx2, rho).

        Each term k contributes rho[k] * (lam - b)_+^2 with b the value at
        neighbor idx[k], or the smaller of the values at idx[k] and idx2[k]
        when idx2[k] >= 0 (a two-sided axis pair).  The circle and the
        latitude-longitude grid use exact axis pairs; the icosphere fits
        one-sided edge weights so the sum reproduces the squared
        tangential gradient on linear functions.
        """
        cache = self._cache.setdefault("upwind", {})
        if j not in cache:
            if self.kind == "s1_uniform":
                no = self.n_vertices
                dth = 2.0 * math.pi / no
                cache[j] = (
                    np.array([(j - 1) % no], dtype=np.int64),
                    np.array([(j + 1) % no], dtype=np.int64),
                    np.array([1.0 / (dth * dth)]),
                )
            elif self.kind == "s2_latlong":
                cache[j] = _latlong_scheme(self, j)
            else:
                nbrs, rho = _fit_upwind_weights(self, j)
                cache[j] = (nbrs, np.full(len(nbrs), -1, dtype=np.int64), rho)
        return cache[j]

    def gradient_operator(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """(neighbor indices, matrix A) with grad ~= A @ (u[nbrs] - u[j]).

        A has shape (d, K): least-squares fit of a tangent vector g with
        u[k] - u[j] ~= g . (n_k - n_j), returned in ambient coordinates.
        """
        cache = self._cache.setdefault("grad", {})
        if j not in cache:
            cache[j] = _fit_gradient_operator(self, j)
        return cache[j]

    def vertex_triangles(self, j: int) -> list[int]:
        if "vtri" not in self._cache:
            vtri = [[] for _ in range(self.n_vertices)]
            if self.triangles is not None:
                for t, tri in enumerate(self.triangles):
                    for v in tri:
                        vtri[v].append(t)
            self._cache["vtri"] = vtri
        return self._cache["vtri"][j]


def _tangent_basis(n: np.ndarray) -> np.ndarray:
    if n.shape[0] == 2:
        return np.array([[-n[1], n[0]]])
    k = int(np.argmin(np.abs(n)))
    t1 = np.zeros(3)
    t1[k] = 1.0
    t1 -= (t1 @ n) * n
    t1 /= np.linalg.norm(t1)
    return np.array([t1, np.cross(n, t1)])


def _latlong_scheme(grid: SphereGrid, j: int):
    nth, nph = grid.param, 2 * grid.param
    i, k = divmod(j, nph)
    dth = math.pi / nth
    dph = 2.0 * math.pi / nph
    sin_t = math.sin((i + 0.5) * dth)
    idx, idx2, rho = [], [], []
    up = (i - 1) * nph + k if i > 0 else -1
    dn = (i + 1) * nph + k if i + 1 < nth else -1
    if up >= 0 or dn >= 0:
        idx.append(max(up, dn) if min(up, dn) < 0 else up)
        idx2.append(dn if (up >= 0 and dn >= 0) else -1)
        rho.append(1.0 / (dth * dth))
    idx.append(i * nph + (k - 1) % nph)
    idx2.append(i * nph + (k + 1) % nph)
    rho.append(1.0 / (sin_t * dph) ** 2)
    return (np.array(idx, dtype=np.int64), np.array(idx2, dtype=np.int64),
            np.array(rho))


def _fit_upwind_weights(grid: SphereGrid, j: int):
    nbrs = np.array(grid.neighbors[j], dtype=np.int64)
    n = grid.vertices[j]
    edges = grid.vertices[nbrs] - n
    basis = _tangent_basis(n)
    a = edges @ basis.T                    # (K, 2) tangential edge components
    # Fit the one-sided response sum_k rho_k (g . a_k)_-^2 ~= |g|^2 directly
    # on a dense set of unit tangent directions g; a moment fit alone lets
    # the weights concentrate on one side of the fan, which ruins the
    # one-sided sum even though the two-sided identity holds.
    phis = np.linspace(0.0, 2.0 * math.pi, 73)[:-1]
    dirs = np.stack([np.cos(phis), np.sin(phis)], axis=1)
    response = np.minimum(dirs @ a.T, 0.0) ** 2
    rho, _ = nnls(response, np.ones(len(phis)))
    return nbrs, rho


def _fit_gradient_operator(grid: SphereGrid, j: int):
    nbrs = np.array(grid.neighbors[j], dtype=np.int64)
    n = grid.vertices[j]
    edges = grid.vertices[nbrs] - n
    basis = _tangent_basis(n)
    a = edges @ basis.T                    # (K, d-1)
    pinv = np.linalg.pinv(a)               # (d-1, K)
    return nbrs, basis.T @ pinv            # (d, K)


def build_s1(N: int) -> SphereGrid:
    """Uniform tessellation of the circle with cyclic adjacency."""
    if N < 4:
        raise DomainError(f"S^1 tessellation needs at least 4 points, got {N}")
    ang = 2.0 * math.pi * np.arange(N) / N
    verts = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    nbrs = tuple(((j - 1) % N, (j + 1) % N) for j in range(N))
    return SphereGrid("s1_uniform", verts, nbrs, None, N)


def _icosahedron():
    t = (1.0 + math.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
            (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
            (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
        ],
        dtype=float,
    )
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    return [v for v in verts], faces


def build_s2_icosphere(k: int) -> SphereGrid:
    """Icosahedron subdivided k times, vertices projected onto the sphere.

    Yields 10*4^k + 2 vertices and 20*4^k triangles, all of which have acute
    interior angles.
    """
    if k < 0:
        raise DomainError("refinement level must be >= 0")
    verts, faces = _icosahedron()
    for _ in range(k):
        midpoint: dict[tuple[int, int], int] = {}

        def mid(i, j):
            key = (i, j) if i < j else (j, i)
            if key not in midpoint:
                m = verts[i] + verts[j]
                m /= np.linalg.norm(m)
                verts.append(m)
                midpoint[key] = len(verts) - 1
            return midpoint[key]

        new_faces = []
        for (a, b, c) in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    vertices = np.array(verts)
    triangles = np.array(faces, dtype=np.int64)
    adj = [set() for _ in range(len(verts))]
    for (a, b, c) in faces:
        adj[a] |= {b, c}
        adj[b] |= {a, c}
        adj[c] |= {a, b}
    nbrs = tuple(tuple(sorted(s)) for s in adj)
    return SphereGrid("s2_icosphere", vertices, nbrs, triangles, k)


def build_s2_latlong(n_theta: int) -> SphereGrid:
    """Latitude-longitude sampling of the 2-sphere, rows offset off the poles.

    n_theta latitude rows at (i + 1/2) pi / n_theta, 2 n_theta longitudes.
    Backs the literal polar-coordinate upwind scheme; the tessellated
    icosphere is the default for solving.
    """
    if n_theta < 3:
        raise DomainError("latitude-longitude grid needs n_theta >= 3")
    nph = 2 * n_theta
    verts = []
    for i in range(n_theta):
        th = (i + 0.5) * math.pi / n_theta
        for k in range(nph):
            ph = 2.0 * math.pi * k / nph
            verts.append((math.sin(th) * math.cos(ph),
                          math.sin(th) * math.sin(ph),
                          math.cos(th)))
    nbrs = []
    for i in range(n_theta):
        for k in range(nph):
            cur = []
            if i > 0:
                cur.append((i - 1) * nph + k)
            if i + 1 < n_theta:
                cur.append((i + 1) * nph + k)
            cur.append(i * nph + (k - 1) % nph)
            cur.append(i * nph + (k + 1) % nph)
            nbrs.append(tuple(sorted(cur)))
    return SphereGrid("s2_latlong", np.array(verts), tuple(nbrs), None, n_theta)


def build_sphere(kind: str, param: int) -> SphereGrid:
    if kind == "s1_uniform":
        return build_s1(param)
    if kind == "s2_icosphere":
        return build_s2_icosphere(param)
    if kind == "s2_latlong":
        return build_s2_latlong(param)
    raise DomainError(f"unknown sphere kind {kind!r}")


def triangle_is_acute(p0, p1, p2, tol: float = 0.0) -> bool:
    """All interior angles strictly below pi/2 (up to tol on the cosines)."""
    for a, b, c in ((p0, p1, p2), (p1, p2, p0), (p2, p0, p1)):
        if (b - a) @ (c - a) <= tol:
            return False
    return True
