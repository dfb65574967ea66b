"""Robust adaptive MPC for uncertain FIR systems with set-membership identification."""

from .config import ExperimentConfig, TrajectorySpec, load_config
from .core_model import TABLE1, Plant, SystemBounds, measure, sample_plant, truncation_error
from .errors import (
    AssumptionViolation,
    ConfigurationError,
    EmptySetError,
    FeasibilityLoss,
    InternalError,
    RampcError,
    SolverError,
    UnboundedError,
)
from .harness import (
    ReferenceTrajectory,
    RunRecord,
    SummaryTable,
    make_reference,
    monte_carlo,
    rms_deviation,
    run_closed_loop,
    runtime_profile,
)
from .mpc import Controller, MpcConfig, controller_step, solve_ampc, solve_rampc
from .set_membership import FeasibleSet, FssTracker, initial_fss, update_fss

__version__ = "0.1.0"
