"""Numerical lab for scalar filtering with small observation noise.

The package simulates signal/observation pairs, runs a high-gain approximate
filter and exact or gridded conditional-density references, estimates the
endpoint density through a path-functional Monte Carlo representation, and
compares the density's log-decay against the closed-form rate function that
governs it as the observation noise vanishes.
"""

__version__ = "0.1.0"

from .density import DensityEstimate, normalize_log_density, tv_distance
from .errors import (
    ConfigError,
    GridTooSmallError,
    InternalConsistencyError,
    InvalidModelError,
    IOFailureError,
    NumericalInstabilityError,
    SimulationDivergedError,
    SmallNoiseError,
    ToleranceError,
)
from .experiments import (
    SweepConfig,
    SweepReport,
    crosscheck_estimators,
    filter_tracking_experiment,
    run_sweep,
)
from .filters import (
    FilterConvergenceStats,
    FilterTrajectory,
    GaussianPosterior,
    RescaledFilterPath,
    check_filter_convergence,
    grid_bayes_filter,
    kalman_bucy,
    kalman_density,
    reverse_and_rescale,
    run_approximate_filter,
    tracking_horizon,
)
from .models import (
    AssumptionReport,
    OriginalModel,
    ReducedModel,
    builtin_model,
    check_assumptions,
    to_unit_diffusion,
)
from .pathdensity import (
    AuxPathBundle,
    PathFunctional,
    log_density_estimate,
    reference_density,
    simulate_aux_paths,
)
from .rate import (
    ActionProblem,
    ActionResult,
    RateTable,
    action_gradient,
    action_objective,
    action_of_path,
    flow_endpoint,
    rate_function,
    solve_action,
    split_horizon_check,
    value_limit_check,
)
from .sde import (
    BrownianIncrements,
    SamplePath,
    TimeGrid,
    brownian,
    simulate_diffusion,
    simulate_pair,
)
