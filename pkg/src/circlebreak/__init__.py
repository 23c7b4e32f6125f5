"""Numerical experiments on circle diffeomorphisms with one break point."""

from .circle import BreakMap, Jet3, compose, eval_jet, eval_lift, iterate, iterate_jet, make_break_map
from .conjugacy import (
    ExperimentConfig,
    RigidityReport,
    build_conjugacy,
    holder_estimate,
    level_obstruction,
    rigidity_experiment,
)
from .constants import ConstantsLedger, c_hat, derivative_bound, ledger_for
from .distortion import Interval, mixed_partial_check, tilde, xi, xi_orbit
from .errors import *  # noqa: F401,F403
from .partition import DynamicalPartition, dynamical_partition, fit_decay, is_refinement, partition_stats
from .renorm import (
    MobiusPairParams,
    fit_fractional_linear,
    mobius_conjugacy_probe,
    mobius_renorm_step,
    renormalize,
)
from .rotation import (
    ContinuedFraction,
    Ordering,
    RotationTarget,
    compare_rotation,
    rotation_cf,
    tune_delta,
    tune_delta_report,
)

__version__ = "0.1.0"
