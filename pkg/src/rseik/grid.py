"""Product discretization domain: Cartesian spatial grid x sphere tessellation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .geometry import PointPO
from .sphere import SphereGrid


@dataclass
class SpatialGrid:
    """Axis-aligned Cartesian grid. mask marks blocked nodes (walls)."""

    dims: tuple
    h: float
    origin: np.ndarray = None
    mask: np.ndarray = None    # bool, True = blocked

    def __post_init__(self):
        self.dims = tuple(int(n) for n in self.dims)
        if len(self.dims) not in (2, 3) or any(n < 1 for n in self.dims):
            raise DomainError(f"dims must be 2 or 3 positive extents, got {self.dims}")
        if not self.h > 0:
            raise DomainError(f"grid scale h must be positive, got {self.h}")
        if self.origin is None:
            self.origin = np.zeros(len(self.dims))
        self.origin = np.asarray(self.origin, float)
        if self.origin.shape != (len(self.dims),):
            raise DomainError("origin length must match dims")
        if self.mask is not None:
            self.mask = np.asarray(self.mask, bool)
            if self.mask.shape != self.dims:
                raise DomainError(
                    f"mask shape {self.mask.shape} does not match dims {self.dims}"
                )

    @property
    def d(self) -> int:
        return len(self.dims)

    def position(self, idx) -> np.ndarray:
        return self.origin + self.h * np.asarray(idx, float)

    def snap(self, x) -> tuple:
        ix = np.rint((np.asarray(x, float) - self.origin) / self.h).astype(int)
        if np.any(ix < 0) or np.any(ix >= np.array(self.dims)):
            raise DomainError(f"position {x} falls outside the grid")
        return tuple(int(i) for i in ix)

    @staticmethod
    def centered(dims, h) -> "SpatialGrid":
        """Grid whose coordinate origin sits at the central node."""
        dims = tuple(int(n) for n in dims)
        origin = -h * (np.array(dims) - 1) / 2.0
        return SpatialGrid(dims, h, origin)


@dataclass
class Domain:
    """Spatial grid paired with a sphere tessellation of matching dimension."""

    grid: SpatialGrid
    sphere: SphereGrid

    def __post_init__(self):
        if self.grid.d != self.sphere.d:
            raise DomainError(
                f"spatial dimension {self.grid.d} != sphere dimension {self.sphere.d}"
            )

    @property
    def d(self) -> int:
        return self.grid.d

    @property
    def shape(self) -> tuple:
        return self.grid.dims + (self.sphere.n_vertices,)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def n_orient(self) -> int:
        return self.sphere.n_vertices

    def flat(self, idx) -> int:
        return int(np.ravel_multi_index(idx, self.shape))

    def unflat(self, node: int) -> tuple:
        return tuple(int(i) for i in np.unravel_index(node, self.shape))

    def point(self, idx) -> PointPO:
        *spatial, io = idx
        return PointPO(self.grid.position(spatial), self.sphere.vertices[io].copy())

    def snap_point(self, p: PointPO) -> tuple:
        if p.d != self.d:
            raise DomainError(f"point dimension {p.d} != domain dimension {self.d}")
        return self.grid.snap(p.x) + (self.sphere.nearest(p.n),)

    def node_mask(self) -> np.ndarray:
        """Blocked flag per node, broadcasting the spatial mask over orientations."""
        blocked = np.zeros(self.shape, dtype=bool)
        if self.grid.mask is not None:
            blocked |= self.grid.mask[..., None]
        return blocked
