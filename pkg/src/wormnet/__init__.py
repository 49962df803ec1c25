"""Predator-prey worm interactions in encounter-based networks.

A multi-group mean-field ODE model, an encounter-level stochastic
simulator, a trace replay pipeline and the shared metric definitions
(TI, MI, TL, AL, TA, TR).
"""

from .config import ConfigError, dump_scenario, load_scenario, scenario_from_dict, scenario_to_dict
from .events import EventKind, EventLog
from .markov import ExactMetrics, exact_small_markov
from .metrics import (
    Metrics,
    MetricsSummary,
    RelativeMetrics,
    RunMetrics,
    compute_y,
    metrics_from_log,
    relative_metrics,
    summarize,
)
from .model import (
    BatchEvent,
    GroupParams,
    InteractionType,
    ModelError,
    NegativeCompartment,
    Scenario,
    StateVector,
    TransitionIndicators,
    build_interaction_flags,
    init_state,
    single_group,
    validate_scenario,
)
from .ode import (
    OdeSettings,
    Trajectory,
    broadcast_time_estimate,
    integrate,
    rhs,
    suppression_condition,
    trajectory_metrics,
)
from .sim import batch_array, monte_carlo, run_batch, simulate_run

__version__ = "0.1.0"
