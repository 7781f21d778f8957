"""Monte Carlo engine for mean-field particle systems with common marked Poisson noise."""

from .errors import (
    CmvError,
    ConfigurationError,
    InputError,
    IntensityBoundError,
    NumericalDivergenceError,
)
from .noise import (
    BasePointField,
    DiscreteMarks,
    GaussianMarks,
    Purpose,
    SeedSpec,
    StreamKey,
    UniformMarks,
    brownian_increments,
    common_base_field,
    derive_stream,
    parse_seed,
    sample_base_field,
)
from .measures import (
    EmpiricalMeasure,
    MeasurePath,
    dirac,
    product_coupling_bound,
    w2_1d,
    w2_between,
    w2_exact,
    w2_sliced,
    w2_to_dirac,
)
from .marked_poisson import (
    AcceptedJumps,
    IntensityCandidate,
    constant_intensity,
    integrate_compensated,
    integrate_marked,
    kernel_mass,
    random_norm_sq,
    thin,
)
from .model import (
    CoefficientSet,
    RegimeSpec,
    RegularityConstants,
    SystemicRiskParams,
    build_regime_switching,
    build_systemic_risk,
    regime_intervals,
    validate_fourth_moment,
    validate_growth,
    validate_lipschitz,
    zero_model,
)
from .integrator import (
    MeanFieldProxy,
    SimConfig,
    TrajectorySet,
    simulate_conditioned,
    simulate_conditioned_particle,
    simulate_finite_system,
    simulate_reference,
    simulate_regime_switching,
)
from .chaos import (
    ConvergenceStudy,
    CouplingRunResult,
    convergence_study,
    envelope_check,
    gronwall_envelope,
    run_synchronous_coupling,
)

__version__ = "0.1.0"
