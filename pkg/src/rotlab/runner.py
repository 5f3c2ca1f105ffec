"""Experiment execution: one seeded simulation of the simple system under a
configured optimizer, with optional rotational wrapping, telemetry CSV
output, and a summary JSON of window statistics.

The summary exists so that the check stage can form predictions without
re-simulating: it accumulates, over the configured report window, the
per-neuron gradient statistics the closed forms need (second moments of the
raw and norm-scaled gradients, the per-coordinate sqrt second moments, and
the radial coefficient for effective-decay substitution). Everything else
the check stage needs comes from the telemetry CSV.

Outputs carry no timestamps and all floats are written with round-trip
formatting, so equal seeds give byte-equal files.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .config import ExperimentConfig, dump_config, to_dict
from .core import RngStream
from .optimizers import SGDM, OptimizerConfig, UpdateDecomposition, init_state, step
from .rotational import (
    RotationalState,
    assign_imbalance,
    init_rotational,
    resolve_target_eta_r,
    wrapped_step,
)
from .system import forward_backward, forward_backward_synthetic, init_system
from .telemetry import TelemetryWriter, aggregate_record, record_layer_step

LAYER_NAME = "layer0"

# RngStream substream key for the norm-convergence Monte Carlo
# (system.py owns 0..3, rotational.py owns 4).
KEY_CONVERGE = 5


class NumericError(RuntimeError):
    """A parameter became non-finite; the CLI maps this to exit code 3."""

    def __init__(self, step: int, unit: str):
        super().__init__(f"non-finite parameter at step {step}, unit {unit}")
        self.step = step
        self.unit = unit


@dataclass
class RunResult:
    config: ExperimentConfig
    csv_path: str
    summary_path: str
    summary: Dict
    final_W: np.ndarray


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(dump_config(cfg).encode("utf-8")).hexdigest()


def _versions() -> Dict[str, str]:
    import pandas

    return {"rotlab": __version__, "numpy": np.__version__, "pandas": pandas.__version__}


def run_experiment(
    cfg: ExperimentConfig,
    out_dir: str,
    telemetry_enabled: bool = True,
    init_scale: float = 1.0,
) -> RunResult:
    """Run one experiment and write <name>.csv and <name>_summary.json into
    out_dir. init_scale multiplies the initial W (a hook for transient
    studies); it is deliberately not a config field so stored configs always
    describe the standard initialization."""
    cfg.validate()
    os.makedirs(out_dir, exist_ok=True)
    sysc = cfg.system
    system = init_system(
        B=sysc.B,
        C=sysc.C,
        K=sysc.K,
        loss_scale=sysc.loss_scale,
        seed=cfg.seed,
        eps_bn=sysc.eps_bn,
        synthetic_targets=sysc.mode == "synthetic",
    )
    if init_scale != 1.0:
        system.W *= init_scale
    W = system.W
    K, C = W.shape
    opt_state = init_state(cfg.optimizer, W.shape)

    rot_state: Optional[RotationalState] = None
    unit_dim = C if cfg.wrapper.granularity == "neuron" else K * C
    n_units = K if cfg.wrapper.granularity == "neuron" else 1
    scales = np.ones(n_units)
    base_target = 0.0
    if cfg.wrapper.enabled:
        if cfg.wrapper.imbalance is not None:
            scales = assign_imbalance(cfg.wrapper.imbalance, n_units, cfg.seed)
        base_target = resolve_target_eta_r(cfg.optimizer, unit_dim, override=cfg.wrapper.eta_r_override)
        rot_state, rows = init_rotational(
            W.reshape(n_units, unit_dim),
            center=cfg.wrapper.center,
            beta=cfg.wrapper.beta,
            eps_rv=cfg.wrapper.eps_rv,
            target_eta_r=base_target,
            imbalance_scale=scales,
        )
        W = rows.reshape(K, C)
        system.W = W

    per_neuron = cfg.telemetry.per_neuron_for(K)
    csv_path = os.path.join(out_dir, f"{cfg.name}.csv")
    summary_path = os.path.join(out_dir, f"{cfg.name}_summary.json")
    writer = TelemetryWriter(csv_path, cfg.telemetry.flush_interval) if telemetry_enabled else None

    burn_in = cfg.report.burn_in_steps
    # Window accumulators (steps burn_in..steps inclusive), all per neuron.
    n_acc = 0
    acc_coord_sq = np.zeros((K, C))  # E[(||w|| g)^2] per coordinate
    acc_grad_sq = np.zeros(K)
    acc_unit_grad_sq = np.zeros(K)
    acc_radial = np.zeros(K)
    acc_angular = np.zeros(K)
    acc_norm = np.zeros(K)
    acc_rms_sq = np.zeros(K)

    sample = forward_backward_synthetic if sysc.mode == "synthetic" else forward_backward

    try:
        for t in range(1, cfg.steps + 1):
            eta_t = cfg.optimizer.eta * cfg.schedule.multiplier(t, cfg.steps)
            cfg_t = cfg.optimizer.with_eta(eta_t)
            data = sample(system)
            m_prev = opt_state.m.copy() if opt_state.m is not None else None
            prev_W = W.copy()
            decomp = step(opt_state, W, data.grad, cfg_t)
            if rot_state is not None:
                if cfg.wrapper.eta_r_override is not None or cfg.schedule.kind == "constant":
                    target_t = None  # stored per-unit targets apply
                else:
                    target_t = resolve_target_eta_r(cfg_t, unit_dim)
                rows = wrapped_step(
                    rot_state,
                    W.reshape(n_units, unit_dim),
                    UpdateDecomposition(
                        decomp.delta_g.reshape(n_units, unit_dim),
                        decomp.delta_lambda.reshape(n_units, unit_dim),
                    ),
                    eta_t,
                    eta_r_target=target_t,
                )
                W = rows.reshape(K, C)
            else:
                W = W + decomp.total()
            system.W = W

            if not np.all(np.isfinite(W)):
                bad = int(np.where(~np.isfinite(W).all(axis=1))[0][0])
                raise NumericError(t, f"{LAYER_NAME}/neuron{bad}")

            if writer is not None:
                records = record_layer_step(
                    prev_W, W, decomp, data.grad, momentum=m_prev, step=t, layer=LAYER_NAME
                )
                agg = aggregate_record(records)
                writer.write_step(records + [agg] if per_neuron else [agg])

            if t >= burn_in:
                n_acc += 1
                prev_sq = np.sum(prev_W * prev_W, axis=1)
                g_sq_rows = np.sum(data.grad * data.grad, axis=1)
                acc_coord_sq += prev_sq[:, None] * (data.grad * data.grad)
                acc_grad_sq += g_sq_rows
                acc_unit_grad_sq += prev_sq * g_sq_rows
                acc_radial += np.sum(prev_W * data.grad, axis=1) / prev_sq
                new_sq = np.sum(W * W, axis=1)
                cosine = np.clip(np.sum(prev_W * W, axis=1) / np.sqrt(prev_sq * new_sq), -1.0, 1.0)
                acc_angular += np.arccos(cosine)
                acc_norm += np.sqrt(new_sq)
                acc_rms_sq += np.sum(decomp.delta_g * decomp.delta_g, axis=1)
    finally:
        if writer is not None:
            writer.close()

    per_coord_sqrt = np.sqrt(acc_coord_sq / n_acc)
    summary = {
        "name": cfg.name,
        "seed": cfg.seed,
        "config": to_dict(cfg),
        "config_hash": config_hash(cfg),
        "versions": _versions(),
        "steps": cfg.steps,
        "window": {"from": burn_in, "to": cfg.steps, "samples": n_acc},
        "layer": {
            "angular_update_mean": float(np.mean(acc_angular / n_acc)),
            "weight_norm_mean": float(np.mean(acc_norm / n_acc)),
            "rms_update_rms": float(np.sqrt(np.mean(acc_rms_sq / n_acc))),
        },
        "per_neuron": {
            "angular_update_mean": (acc_angular / n_acc).tolist(),
            "weight_norm_mean": (acc_norm / n_acc).tolist(),
            "rms_update_rms": np.sqrt(acc_rms_sq / n_acc).tolist(),
            "radial_coeff_mean": (acc_radial / n_acc).tolist(),
            "grad_sq_norm_mean": (acc_grad_sq / n_acc).tolist(),
            "unit_grad_sq_norm_mean": (acc_unit_grad_sq / n_acc).tolist(),
            "per_coord_sqrt_second_moment": per_coord_sqrt.tolist(),
            "per_coord_stat_sum": np.sum(per_coord_sqrt, axis=1).tolist(),
        },
        "wrapper": {
            "enabled": cfg.wrapper.enabled,
            "granularity": cfg.wrapper.granularity,
            "base_target_eta_r": base_target if cfg.wrapper.enabled else None,
            "target_eta_r": (rot_state.target_eta_r.tolist() if rot_state is not None else None),
            "imbalance_scale": scales.tolist() if cfg.wrapper.enabled else None,
            "noop_steps": rot_state.noop_count if rot_state is not None else 0,
        },
        "telemetry": {"per_neuron": per_neuron, "enabled": telemetry_enabled},
    }
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    return RunResult(
        config=cfg, csv_path=csv_path, summary_path=summary_path, summary=summary, final_W=W.copy()
    )


def simulate_norm_walk(
    omega0_sq: float,
    eta: float,
    weight_decay: float,
    C: int,
    steps: int,
    trials: int,
    seed: int = 0,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> np.ndarray:
    """Monte-Carlo E[||omega_i||^2] for i = 0..steps of the second-moment
    normalized decayed random walk: per coordinate, v tracks the gradient's
    second moment and the step is -eta * (g/sqrt(v_hat) + lambda*omega), with
    gradients i.i.d. standard normal. Averages the squared norm across
    trials; this is the walk whose expectation the analytic norm-convergence
    recurrence describes."""
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    if omega0_sq < 0:
        raise ValueError(f"omega0_sq must be >= 0, got {omega0_sq}")
    rng = RngStream(seed, KEY_CONVERGE)
    # Random initial directions at the requested squared norm.
    P = rng.standard_normal((trials, C))
    norms = np.sqrt(np.sum(P * P, axis=1, keepdims=True))
    P = P / norms * np.sqrt(omega0_sq)
    # beta1=0 makes the first moment the raw gradient: the update is the
    # v-normalized gradient plus decoupled decay.
    walk_cfg = OptimizerConfig(kind="adamw", eta=eta, weight_decay=weight_decay, beta1=0.0, beta2=beta2, eps=eps)
    state = init_state(walk_cfg, P.shape)
    out = np.empty(steps + 1)
    out[0] = float(np.mean(np.sum(P * P, axis=1)))
    for i in range(1, steps + 1):
        g = rng.standard_normal((trials, C))
        decomp = step(state, P, g, walk_cfg)
        P = P + decomp.total()
        out[i] = float(np.mean(np.sum(P * P, axis=1)))
    return out


def measure_rms_updates(
    cfg: OptimizerConfig,
    C: int,
    steps: int,
    seed: int = 0,
) -> Dict[str, float]:
    """Drive a single C-dimensional parameter vector with i.i.d. standard
    normal gradients for the given number of steps and measure the RMS of
    the gradient-driven update along with the mean squared gradient norm.
    Used to validate the closed-form eta_g_hat."""
    rng = RngStream(seed, KEY_CONVERGE)
    p = rng.standard_normal((C,))
    state = init_state(cfg, p.shape)
    sq_sum = 0.0
    g_sq_sum = 0.0
    for _ in range(steps):
        g = rng.standard_normal((C,))
        decomp = step(state, p, g, cfg)
        p = p + decomp.total()
        sq_sum += float(np.dot(decomp.delta_g, decomp.delta_g))
        g_sq_sum += float(np.dot(g, g))
    return {
        "rms_update": float(np.sqrt(sq_sum / steps)),
        "mean_grad_sq_norm": g_sq_sum / steps,
    }
