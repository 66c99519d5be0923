"""Cost-field construction: data-driven costs from orientation densities,
plus synthetic tube phantoms for tests and demos."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .grid import Domain

COST_FLOOR = 1e-6


@dataclass
class DensityField:
    """Sampled orientation density W on a product grid (arbitrary units)."""

    values: np.ndarray
    domain: Domain

    def __post_init__(self):
        self.values = np.asarray(self.values, float)
        if self.values.shape != self.domain.shape:
            raise DomainError(
                f"density shape {self.values.shape} != domain shape {self.domain.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise DomainError("density values must be finite")


@dataclass
class CostField:
    """Per-node positive costs: c1 spatial (time/length), c2 angular (time/rad)."""

    c1: np.ndarray
    c2: np.ndarray
    xi: float = 1.0
    floor: float = COST_FLOOR

    def __post_init__(self):
        self.c1 = np.asarray(self.c1, float)
        self.c2 = np.asarray(self.c2, float)
        for name, arr in (("c1", self.c1), ("c2", self.c2)):
            if not np.all(np.isfinite(arr)) or not np.all(arr >= self.floor):
                raise DomainError(f"{name} must be finite and >= {self.floor}")

    @staticmethod
    def uniform(domain: Domain, xi: float = 1.0) -> "CostField":
        ones = np.ones(domain.shape)
        return CostField(xi * ones, ones, xi=xi)


def cost_from_density(W: DensityField, sigma: float, p_exp: int, xi: float) -> CostField:
    """Map a density to costs: C = 1 / (1 + sigma * |W+ / max(W+)|^p).

    c2 = C and c1 = xi * C.  Negative density values are clipped to zero
    first; an everywhere-nonpositive density yields unit cost.
    """
    if sigma < 0:
        raise DomainError("sigma must be >= 0")
    if p_exp < 1 or int(p_exp) != p_exp:
        raise DomainError("p_exp must be a positive integer")
    Wp = np.maximum(W.values, 0.0)
    wmax = Wp.max()
    if wmax == 0.0 or sigma == 0.0:
        C = np.ones_like(Wp)
    else:
        C = 1.0 / (1.0 + sigma * (Wp / wmax) ** p_exp)
    return CostField(xi * C, C, xi=xi)


@dataclass
class TubeSpec:
    """One tubular bundle: a sampled centerline with radius and angular spread."""

    points: np.ndarray           # (m, d) finely sampled centerline
    radius: float
    kappa: float = 8.0           # angular concentration exponent
    amplitude: float = 1.0

    def __post_init__(self):
        self.points = np.asarray(self.points, float)
        if self.points.ndim != 2 or self.points.shape[0] < 2:
            raise DomainError("a tube needs at least two centerline samples")
        if self.radius <= 0:
            raise DomainError("tube radius must be positive")

    def tangents(self) -> np.ndarray:
        t = np.gradient(self.points, axis=0)
        norms = np.linalg.norm(t, axis=1)
        if np.any(norms < 1e-12):
            raise DomainError("degenerate centerline tangent")
        return t / norms[:, None]


def synth_tube_phantom(domain: Domain, tubes: list[TubeSpec]) -> DensityField:
    """Density of tubular bundles: spatial bump around each centerline times
    an angular kernel concentrated along the local tangent (both signs).

    W(x, n) = sum over tubes of A * exp(-2 (dist/radius)^2) * |n . T|^kappa
    with T the tangent at the closest centerline sample.  Three radii out
    the bump is below 1e-6 of its peak.
    """
    grid = domain.grid
    coords = np.stack(
        np.meshgrid(*[grid.origin[k] + grid.h * np.arange(grid.dims[k])
                      for k in range(domain.d)], indexing="ij"),
        axis=-1,
    )
    flat = coords.reshape(-1, domain.d)
    nvecs = domain.sphere.vertices
    W = np.zeros(domain.shape)
    for tube in tubes:
        pts = tube.points
        if np.any(pts.min(axis=0) < grid.origin - 1e-9) or np.any(
            pts.max(axis=0) > grid.origin + grid.h * (np.array(grid.dims) - 1) + 1e-9
        ):
            raise DomainError("tube centerline leaves the grid")
        tans = tube.tangents()
        d2 = ((flat[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
        nearest = np.argmin(d2, axis=1)
        dist = np.sqrt(d2[np.arange(len(flat)), nearest])
        bump = tube.amplitude * np.exp(-2.0 * (dist / tube.radius) ** 2)
        align = np.abs(nvecs @ tans[nearest].T).T ** tube.kappa   # (nodes, no)
        W += (bump[:, None] * align).reshape(domain.shape)
    return DensityField(W, domain)


def tube_centerline_distance(path_xyz: np.ndarray, tube: TubeSpec) -> np.ndarray:
    """Distance of each path sample to the tube centerline (same units)."""
    pts = tube.points
    d2 = ((np.asarray(path_xyz, float)[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    return np.sqrt(d2.min(axis=1))
