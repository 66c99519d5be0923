"""Explicit iterative solver for the same eikonal problems.

Independent of the fast-marching path: relaxes u' = u + dt (1 - F*(Du))
from a morphological-delta start (0 at the seed, a large clamp elsewhere)
with first-order upwind gradients, re-pinning the seed each step, until the
per-round change drops below a tolerance.  Much slower than fast marching;
its role is to cross-check the single-pass solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DomainError, InstabilityError
from .geometry import ModelParams
from .gradients import dual_field
from .grid import Domain
from .solver import ACCEPTED, BLOCKED, FAR, DistanceMap, _snap_seeds


@dataclass
class IterConfig:
    epsilon_step: float = None   # artificial time per outer round; default = dt
    theta: float = 1e-4          # stop when max per-round change drops below
    max_outer: int = 200_000
    clamp: float = None          # finite stand-in for +inf; default 10x diameter
    dt: float = None             # explicit step; default 0.4 h min(C) min(1, eps)

    def __post_init__(self):
        if self.epsilon_step is not None and self.epsilon_step <= 0:
            raise DomainError("epsilon_step must be positive")
        if self.theta <= 0:
            raise DomainError("theta must be positive")


def _default_clamp(domain: Domain, cost) -> float:
    # generous upper bound: ten crossings of the whole box plus rotations
    extent = sum(domain.grid.h * (n - 1) for n in domain.grid.dims)
    c1max = float(np.max(cost.c1))
    c2max = float(np.max(cost.c2))
    return 10.0 * (extent * c1max + 2.0 * math.pi * c2max)


def _default_dt(domain: Domain, cost, params: ModelParams) -> float:
    cmin = min(float(np.min(cost.c1)), float(np.min(cost.c2)))
    return 0.4 * domain.grid.h * cmin * min(1.0, params.epsilon)


def iterate_step(u: np.ndarray, domain: Domain, cost, params: ModelParams,
                 dt: float, seed_idx: list, clamp: float,
                 blocked: np.ndarray | None = None) -> np.ndarray:
    """One explicit relaxation step; the seed stays pinned at zero.

    Raises InstabilityError (with a suggested step) when the update blows
    past the clamp barrier or produces non-finite values.
    """
    rhs = 1.0 - dual_field(u, domain, cost.c1, cost.c2, params.epsilon, params.forward)
    out = np.minimum(u + dt * rhs, clamp)
    if blocked is not None:
        out[blocked] = clamp
    for s in seed_idx:
        out[s] = 0.0
    if not np.all(np.isfinite(out)) or np.any(out < -1e-3 * clamp):
        raise InstabilityError(
            f"explicit step dt={dt} diverged; retry with dt={dt / 2:g}",
            suggested_dt=dt / 2,
        )
    return out


def iterative_solve(domain: Domain, cost, params: ModelParams, seeds,
                    config: IterConfig | None = None) -> DistanceMap:
    """Solve to steady state; returns a DistanceMap compatible with fast_march."""
    if params.epsilon <= 0.0:
        raise DomainError("the iterative solver requires epsilon > 0")
    config = config or IterConfig()
    seeds = _snap_seeds(domain, seeds)
    if not seeds:
        raise DomainError("at least one seed is required")
    blocked = domain.node_mask()
    for s in seeds:
        if blocked[s]:
            raise DomainError(f"seed {s} lies on a masked node")
    clamp = config.clamp or _default_clamp(domain, cost)
    dt = config.dt or _default_dt(domain, cost, params)
    eps_step = config.epsilon_step or dt
    inner = max(1, int(math.ceil(eps_step / dt - 1e-12)))

    u = np.full(domain.shape, clamp)
    u[blocked] = clamp
    for s in seeds:
        u[s] = 0.0

    outer = 0
    residual = math.inf
    while outer < config.max_outer:
        outer += 1
        prev = u
        for _ in range(inner):
            u = iterate_step(u, domain, cost, params, dt, seeds, clamp,
                             blocked=blocked)
        residual = float(np.max(np.abs(u - prev)))
        if residual < config.theta:
            break
    else:
        raise ConvergenceError(
            f"no convergence after {config.max_outer} rounds "
            f"(last residual {residual:g}, theta {config.theta:g})",
            residual=residual,
            iterations=outer,
        )

    values = u.copy()
    reached = values < 0.99 * clamp
    values[~reached] = math.inf
    states = np.where(reached, ACCEPTED, FAR).astype(np.uint8)
    states[blocked] = BLOCKED
    xi = getattr(cost, "xi", 1.0)
    return DistanceMap(
        values, states, domain, params, xi, seeds, "iterative",
        stats={"outer_iterations": outer, "residual": residual, "dt": dt,
               "clamp": clamp},
    )
