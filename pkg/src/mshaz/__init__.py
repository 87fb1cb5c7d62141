"""Multi-stage hazard models: competing, unordered, sequential and cascading failure routes."""
from .cascade import (
    CascadeSpec,
    cascade_route_pdf,
    cascade_survival,
    enumerate_orderings,
    hazard_crossovers,
    powerlaw_cascade,
    route_probabilities,
    route_probability,
)
from .curves import CurveSet, TimeGrid
from .detection import (
    GammaDetect,
    detect_after_mixture,
    exponential_after_gamma,
    logistic_detection_curves,
    weibull_after_exponential,
)
from .distributions import (
    Exponential,
    Gamma,
    LogisticDetection,
    PowerLawHazard,
    StepDistribution,
    Tabulated,
    Weibull2,
    default_grid,
    eval_curves,
    sample_step,
)
from .errors import (
    ConfigurationError,
    InvalidArgumentError,
    InvalidParameterError,
    MshazError,
    RouteEvaluationError,
    UnsupportedOperationError,
)
from .expoly import ExpPolyMix
from .microenv import MicroEnvModel, microenv_coeffs, microenv_oracle, microenv_pdf
from .montecarlo import SampleSet, ks_statistic, simulate_cascade, simulate_system
from .routes import (
    CascadeRoute,
    PowerLawRoute,
    SequentialRoute,
    SystemSpec,
    UnorderedRoute,
    combine_routes,
    lifetime_risk,
    unordered_route_survival,
)
from .sequential import (
    convolve_exact,
    convolve_numeric,
    gamma_integer_sum,
    general_integral_eval,
    merge_nearby_rates,
    moolgavkar_exact,
    partial_fractions,
    power_law_sum,
    schwinger_identity_check,
    sum_sequential,
)

__version__ = "0.1.0"
