"""Minimum-norm open-loop control of ensembles of linear time-varying systems
by truncated SVD of the discretized input-to-state operator."""

from .errors import (
    ConfigError,
    DecompositionError,
    DimensionError,
    EnsembleControlError,
    FileMismatchError,
    IntegrationError,
    OverdeterminedShapeError,
)
from .flow import FlowTable, build_flow_table, forward_flow_step, inverse_flow_trajectory
from .model import (
    LinearEnsembleSystem,
    ParameterBox,
    ParameterGrid,
    TimeGrid,
    TransferSpec,
    constant_transfer,
    curve_transfer,
    harmonic_oscillator_system,
    leaf_curve,
    make_parameter_grid,
    make_time_grid,
    random_timevarying_system,
    star_curve,
)
from .ode import IntegratorConfig
from .operator import OperatorMatrix, TargetVector, assemble_operator, assemble_target
from .synthesis import (
    ControlSignal,
    SingularSystemApprox,
    SynthesisReport,
    choose_truncation,
    compute_svd,
    picard_diagnostic,
    synthesize_control,
)
from .verify import EnsembleOutcome, evaluate_transfer, simulate_member
from .config import ExperimentConfig, build_config, load_config
from .pipeline import convergence, synthesize, verify

__version__ = "0.1.0"
