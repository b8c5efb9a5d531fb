"""Random asynchronous LTI systems: simulation, mean-square stability, identification."""

from .errors import (
    AsyncLtiError,
    IllConditioned,
    NotMeanSquareStable,
    NumericalError,
    OperatorTooLarge,
    SimulationDiverged,
    Unidentifiable,
    ValidationError,
)
from .model import (
    AsyncConfig,
    LtiSystem,
    NoiseSpec,
    Trajectory,
    ValidationReport,
    delay_pmf,
    load_system_file,
    validate_system,
)
from .simulator import SimulationPlan, simulate, simulate_ensemble
from .stability import (
    StabilityGrid,
    StabilityReport,
    average_system,
    build_J,
    build_S,
    build_S_h,
    extended_lyapunov_residual,
    is_mean_square_stable,
    phi,
    spectral_radius,
    stability_map,
    steady_state_covariance,
)
from .markov import (
    MarkovParameters,
    averaged_markov_parameters,
    build_T,
    markov_parameters,
    recover_markov_parameters,
)
from .sysid import (
    CorrelationAccumulator,
    CorrelationPair,
    IdentificationResult,
    accumulate_correlations,
    benchmark_identification,
    compute_M_matrices,
    estimate_average_system,
    estimate_p_sigma,
    identify,
    identify_correlations,
)


__version__ = "0.1.0"
from . import fixtures
