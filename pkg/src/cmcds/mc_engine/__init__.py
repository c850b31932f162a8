"""Monte Carlo engines for one-period and two-period CDS rate models."""

from .cholesky import CholeskyError, cholesky
from .rng import batch_generator, batch_slices
from .single_family import (
    MeasureStats,
    PremiumLegEstimate,
    SimConfig,
    SimulationError,
    ValidationRow,
    estimate_premium_leg_mc,
    freezing_bias_estimate,
    refined_expectation,
    simulate_measures,
    simulate_single_family,
    single_family_drift,
    terminal_samples,
    validate_expectations,
)
from .stats import RunningMoments
from .dual_family import (
    AdmissibilityError,
    BreachRateError,
    DualModelParams,
    DualResult,
    PathState,
    dual_family_drifts,
    simulate_dual_family,
)
