"""Local times of continuous-time Markov chains: exact joint densities,
large-deviation bounds, and the spatial Markov (Ray-Knight) description."""

from . import errors
from .bessel import bessel_i0, bessel_i1, edge_kernel, edge_kernel_d
from .chain import (
    Generator,
    InverseLocalTimeResult,
    PathSummary,
    RestrictedGenerator,
    generator_from_triples,
    restrict,
    simulate_fixed_time,
    simulate_inverse_local_time,
    srw_generator,
    validate_generator,
)
from .density import (
    CofactorOperator,
    DensityEvaluation,
    SeriesValue,
    SimplexPoint,
    apply_cofactor_operator,
    cofactor,
    cofactor_operator,
    density,
    density_certified,
    density_quadrature,
    density_tridiagonal,
    torus_series,
)
from .flows import BalancedFlow, enumerate_balanced_flows
from .montecarlo import (
    sample_paths_fixed_time,
    sample_paths_inverse_local_time,
    spawn_rngs,
)
from .rates import (
    RateSolution,
    density_upper_bound,
    eta,
    ldp_probability_bound,
    ldp_varadhan_bound,
    rate_general,
    rate_symmetric,
    rescaled_chi_discrete,
)
from .rayknight import (
    rk_fixed_time_check,
    rk_inner_density,
    rk_outer_atom,
    rk_outer_density,
    sample_rk_profile,
    sample_rk_profile_batch,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
