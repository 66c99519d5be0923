import math

import numpy as np
import pytest

from rseik.costs import CostField
from rseik.geometry import ModelParams, PointPO
from rseik.grid import Domain, SpatialGrid
from rseik.sphere import build_s1, build_s2_icosphere


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def small2d():
    """Planar domain small enough for exhaustive solver tests."""
    return Domain(SpatialGrid.centered((21, 21), 0.1), build_s1(24))


@pytest.fixture(scope="session")
def small3d():
    return Domain(SpatialGrid.centered((9, 9, 9), 0.25), build_s2_icosphere(0))


def random_unit(rng, d):
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def random_point(rng, d):
    return PointPO(rng.standard_normal(d), random_unit(rng, d))


def random_tangent_cov(rng, p):
    xh = rng.standard_normal(p.d)
    nh = rng.standard_normal(p.d)
    nh -= (nh @ p.n) * p.n
    return xh, nh
