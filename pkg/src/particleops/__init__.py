"""Meshfree particle-method operators with computable regularity indicators.

The package provides the interpolant / gradient / Laplacian operator family
built on radial reference weights, the bounded Voronoi machinery behind the
covering radius and Voronoi deviation indicators, compatibility forms for
kernel-gradient (SPH) and number-density (MPS) parameterizations, and a
harness that reproduces the truncation-error convergence study.
"""

from .geometry import (Box, BucketGrid, ParticleSystem, RectDomain,
                       VoronoiDiagram, covering_radius, extend_domain,
                       load_particles, neighbors, perturbed_lattice,
                       save_diagram, save_particles, uniform_volumes,
                       voronoi_decompose)
from .weights import (RadialWeight, catalog, check_admissible,
                      check_moment_order, check_smoothness_order,
                      construct_polynomial_weight, dim_integral, get_weight,
                      mps_classic_profile, mps_lambda,
                      mps_laplacian_transform, radial_moment,
                      spline_kernel_2d, sph_transform, unit_sphere_area)
from .operators import (FieldSamples, evaluate_at_particles, evaluate_field,
                        gradient, interpolate, laplacian)
from .indicators import (DeviationResult, ErrorFunctionals, TransportPlan,
                         error_functionals, family_regularity,
                         local_deviation, regularity_report,
                         voronoi_deviation_bound, voronoi_deviation_exact,
                         weighted_monomial_integral)
from .compat import (MpsParams, SphParams, check_sph_kernel_conditions,
                     equivalence_suite, mps_gradient, mps_laplacian,
                     sph_gradient, sph_interpolant, sph_laplacian)
from .harness import (DEFAULT_DOMAIN, LevelCache, StudyConfig, StudyResult,
                      TEST_FUNCTIONS, deviation_spot_check, influence_radius,
                      observed_rate, relative_error, run_study,
                      theoretical_rate)

__version__ = "0.1.0"
