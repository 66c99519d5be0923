"""Distance maps and minimizing geodesics for car-like models (with and
without reverse gear) on the product of positions and orientations, solved
by causal fast marching with an explicit-relaxation cross-check."""

from ._kernels import COMPILED
from .geometry import (CostSample, Cotangent, ModelParams, PointPO, Tangent,
                       control_set_boundary, dn_matrix, dual_cost, finsler_cost,
                       generic_dual_norm, inverse_metric_apply,
                       metric_tensor_apply)
from .grid import Domain, SpatialGrid
from .sphere import SphereGrid, build_s1, build_s2_icosphere
from .stencils import (OffsetScheme, SLStencil, acuteness_check,
                       build_spatial_stencil_2d, orient_offsets,
                       product_stencil, selling_decompose)
from .costs import CostField, DensityField, TubeSpec, cost_from_density, synth_tube_phantom
from .solver import (DistanceMap, SolveConfig, check_causality, eikonal_residual,
                     fast_march, hamiltonian_update, hopf_lax_update, make_operator)
from .iterative import IterConfig, iterate_step, iterative_solve
from .tracing import (GeodesicPath, InterestPoint, backtrack,
                      classify_endpoint_2d, detect_interest_points,
                      grid_gradient, path_length)

__version__ = "0.1.0"
