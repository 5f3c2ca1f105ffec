"""rotlab: a desk-scale laboratory for the norm/rotation equilibrium that
weight decay induces in normalized networks.

The package simulates a single normalized linear layer under SGDM, AdamW,
Adam with l2 decay, and Lion; evaluates the closed-form equilibrium
predictions for angular update size, RMS update size, and weight norm;
and provides a rotational wrapper that controls the angular update
directly. See README.md for the CLI and configuration schema.
"""

__version__ = "0.1.0"

from .core import RngStream, StreamingMoments, angle_between, project_out, rms_downsample, sample_normal
from .optimizers import (
    OptimizerConfig,
    OptState,
    UpdateDecomposition,
    compute_tuc,
    init_state,
    step,
    tuc_limit,
)
from .predictions import (
    EquilibriumPrediction,
    GradientStats,
    NoEquilibrium,
    RadialStats,
    effective_decay,
    estimate_lambda_u,
    norm_convergence_curve,
    predict,
)
from .system import (
    BatchNormCache,
    SimpleSystem,
    bn_backward,
    bn_forward,
    forward,
    backward,
    forward_backward,
    forward_backward_synthetic,
    init_system,
)
from .rotational import (
    ImbalanceSpec,
    RotationalSet,
    RotationalState,
    assign_imbalance,
    init_rotational,
    resolve_target_eta_r,
    wrapped_step,
)
from .telemetry import TelemetryRecord, TelemetryWriter, layer_mean, record_step, window_mean
from .config import ExperimentConfig, ConfigError, from_dict, load_config, to_dict
from .runner import NumericError, RunResult, run_experiment, simulate_norm_walk
from .report import build_report, check_run

__all__ = [
    "__version__",
    "RngStream",
    "StreamingMoments",
    "angle_between",
    "project_out",
    "rms_downsample",
    "sample_normal",
    "OptimizerConfig",
    "OptState",
    "UpdateDecomposition",
    "compute_tuc",
    "init_state",
    "step",
    "tuc_limit",
    "EquilibriumPrediction",
    "GradientStats",
    "NoEquilibrium",
    "RadialStats",
    "effective_decay",
    "estimate_lambda_u",
    "norm_convergence_curve",
    "predict",
    "BatchNormCache",
    "SimpleSystem",
    "bn_backward",
    "bn_forward",
    "forward",
    "backward",
    "forward_backward",
    "forward_backward_synthetic",
    "init_system",
    "ImbalanceSpec",
    "RotationalSet",
    "RotationalState",
    "assign_imbalance",
    "init_rotational",
    "resolve_target_eta_r",
    "wrapped_step",
    "TelemetryRecord",
    "TelemetryWriter",
    "layer_mean",
    "record_step",
    "window_mean",
    "ExperimentConfig",
    "ConfigError",
    "from_dict",
    "load_config",
    "to_dict",
    "NumericError",
    "RunResult",
    "run_experiment",
    "simulate_norm_walk",
    "build_report",
    "check_run",
]
