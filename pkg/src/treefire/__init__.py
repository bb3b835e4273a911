"""Forest-fire and self-destructive percolation simulations on finite
regular trees, with exact keyed-stream coupling to the pure-growth field."""

from .analytics import (
    FuncSpec,
    LambdaSchedule,
    Regime,
    classify_regime,
    critical_probability,
    critical_time,
    ctmc_occupancy,
    expected_truncated_cluster_size,
    mean_inverse,
    moment_bounds,
    offspring_mean,
    offspring_variance,
    theta_fixed_point,
    transition_time,
)
from .engine import ForestFireState, fire_statistics, run
from .experiments import (
    ConvergenceExperiment,
    ExperimentSummary,
    run_cluster_scaling,
    run_equality_destruction,
    run_destruction_direction,
)
from .growth import GrowthSnapshot, cluster_of, infinite_proxy, snapshot
from .rng import ClockStream, StreamFamily, StreamKind, nth_arrival, uniform
from .sdp import SdpConfig, critical_delta_scan, estimate_theta, realize
from .topology import TreeTopology

__version__ = "0.1.0"
