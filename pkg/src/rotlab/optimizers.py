"""SGDM, AdamW, Adam with coupled l2 decay, and Lion, with a decomposition
interface that splits every step into a gradient-driven part and a
decay-driven part:

    p_next - p = delta_g + delta_lambda

The split is what the rotational wrapper consumes: it keeps delta_g and
discards delta_lambda for weights whose norm it controls directly.

Conventions:
  * SGDM keeps two momentum accumulators, one fed by gradients and one fed
    by lambda*p. Their sum equals the usual single coupled momentum exactly
    (linearity), so the split changes nothing about the trajectory.
  * AdamW and Lion decay is decoupled: delta_lambda = -eta*lambda*p.
  * Adam with l2 folds lambda*p into the gradient before the moments, so the
    decay passes through the 1/sqrt(v) preconditioner and cannot be separated
    out; delta_lambda is identically zero and delta_g carries the whole step.
  * Bias correction and eps are implemented exactly (they matter to deployed
    optimizers even where the closed-form analysis drops them).

All step functions accept parameters of any shape (vector or matrix); every
update is elementwise, so a K x C weight matrix behaves identically to K
independent row vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

SGDM = "sgdm"
ADAMW = "adamw"
ADAML2 = "adaml2"
LION = "lion"
KINDS = (SGDM, ADAMW, ADAML2, LION)


@dataclass
class OptimizerConfig:
    kind: str
    eta: float
    weight_decay: float = 0.0
    momentum: float = 0.9  # SGDM only
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def validate(self) -> "OptimizerConfig":
        if self.kind not in KINDS:
            raise ValueError(f"unknown optimizer kind {self.kind!r}, expected one of {KINDS}")
        if self.eta <= 0:
            raise ValueError(f"eta must be > 0, got {self.eta}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if not 0 <= self.beta1 < 1:
            raise ValueError(f"beta1 must be in [0, 1), got {self.beta1}")
        if not 0 <= self.beta2 < 1:
            raise ValueError(f"beta2 must be in [0, 1), got {self.beta2}")
        if self.eps < 0:
            raise ValueError(f"eps must be >= 0, got {self.eps}")
        return self

    def with_eta(self, eta: float) -> "OptimizerConfig":
        return replace(self, eta=eta)


@dataclass
class OptState:
    """Per-parameter optimizer state. t starts at 0 and increments by one
    per step; m/v exist only where the optimizer uses them; m_decay is the
    SGDM decay-side momentum accumulator."""

    t: int = 0
    m: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    m_decay: Optional[np.ndarray] = None


def init_state(cfg: OptimizerConfig, shape) -> OptState:
    zeros = lambda: np.zeros(shape, dtype=np.float64)
    if cfg.kind == SGDM:
        return OptState(m=zeros(), m_decay=zeros())
    if cfg.kind in (ADAMW, ADAML2):
        return OptState(m=zeros(), v=zeros())
    if cfg.kind == LION:
        return OptState(m=zeros())
    raise ValueError(f"unknown optimizer kind {cfg.kind!r}")


@dataclass
class UpdateDecomposition:
    delta_g: np.ndarray
    delta_lambda: np.ndarray

    def total(self) -> np.ndarray:
        return self.delta_g + self.delta_lambda


def _check_dims(state: OptState, p: np.ndarray, g: np.ndarray) -> None:
    if p.shape != g.shape:
        raise ValueError(f"parameter shape {p.shape} != gradient shape {g.shape}")
    if state.m is not None and state.m.shape != p.shape:
        raise ValueError(f"state shape {state.m.shape} != parameter shape {p.shape}")


def step_sgdm(state: OptState, p: np.ndarray, g: np.ndarray, cfg: OptimizerConfig) -> UpdateDecomposition:
    """Heavy-ball SGD with momentum, decay folded into the momentum buffer.

    Coupled form: m <- alpha*m + g + lambda*p; p <- p - eta*m. Here m is
    split into m (gradient side) and m_decay (decay side); their sum equals
    the coupled buffer exactly.
    """
    _check_dims(state, p, g)
    state.t += 1
    state.m = cfg.momentum * state.m + g
    state.m_decay = cfg.momentum * state.m_decay + cfg.weight_decay * p
    return UpdateDecomposition(-cfg.eta * state.m, -cfg.eta * state.m_decay)


def _preconditioned(m: np.ndarray, v: np.ndarray, t: int, cfg: OptimizerConfig) -> np.ndarray:
    """Bias-corrected Adam direction m_hat / (sqrt(v_hat) + eps).

    With eps=0 a coordinate that has never seen a gradient has m = v = 0;
    0/0 is defined as 0 there (the parameter must not move).
    """
    m_hat = m / (1.0 - cfg.beta1 ** t)
    v_hat = v / (1.0 - cfg.beta2 ** t)
    denom = np.sqrt(v_hat) + cfg.eps
    out = np.zeros_like(m_hat)
    np.divide(m_hat, denom, out=out, where=denom != 0.0)
    return out


def step_adamw(state: OptState, p: np.ndarray, g: np.ndarray, cfg: OptimizerConfig) -> UpdateDecomposition:
    """AdamW: moments track the raw gradient, decay applied decoupled."""
    _check_dims(state, p, g)
    state.t += 1
    state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * g
    state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * (g * g)
    delta_g = -cfg.eta * _preconditioned(state.m, state.v, state.t, cfg)
    return UpdateDecomposition(delta_g, -cfg.eta * cfg.weight_decay * p)


def step_adam_l2(state: OptState, p: np.ndarray, g: np.ndarray, cfg: OptimizerConfig) -> UpdateDecomposition:
    """Adam with l2 regularization: lambda*p joins the gradient before the
    moments, so both m and v carry decay contributions. The decay is not
    separable through 1/sqrt(v); delta_lambda is zero by construction."""
    _check_dims(state, p, g)
    state.t += 1
    g_eff = g + cfg.weight_decay * p
    state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * g_eff
    state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * (g_eff * g_eff)
    delta_g = -cfg.eta * _preconditioned(state.m, state.v, state.t, cfg)
    return UpdateDecomposition(delta_g, np.zeros_like(p))


def step_lion(state: OptState, p: np.ndarray, g: np.ndarray, cfg: OptimizerConfig) -> UpdateDecomposition:
    """Lion: sign of the beta1-interpolated momentum, taken before the stored
    momentum is refreshed with beta2. sign(0) = 0. Decay is decoupled."""
    _check_dims(state, p, g)
    state.t += 1
    direction = np.sign(cfg.beta1 * state.m + (1.0 - cfg.beta1) * g)
    state.m = cfg.beta2 * state.m + (1.0 - cfg.beta2) * g
    return UpdateDecomposition(-cfg.eta * direction, -cfg.eta * cfg.weight_decay * p)


_STEP_FNS = {SGDM: step_sgdm, ADAMW: step_adamw, ADAML2: step_adam_l2, LION: step_lion}


def step(state: OptState, p: np.ndarray, g: np.ndarray, cfg: OptimizerConfig) -> UpdateDecomposition:
    """Dispatch on cfg.kind."""
    return _STEP_FNS[cfg.kind](state, p, g, cfg)


def compute_tuc(
    cfg: OptimizerConfig,
    vec: np.ndarray,
    horizon: int,
    component: str = "gradient",
    v_track: Optional[list] = None,
) -> np.ndarray:
    """Total update contribution: the summed effect on the parameter, over
    the next `horizon` steps, of one gradient sample (component="gradient",
    vec = g) or of one step's decay term (component="decay", vec = omega) as
    it propagates through the momentum machinery.

    SGDM: truncated geometric series -eta * sum_{k<horizon} alpha^k * x with
    x = g or lambda*omega; converges to the closed forms -eta/(1-alpha)*g and
    -eta*lambda/(1-alpha)*omega (see tuc_limit).

    AdamW gradient: -eta * (1-beta1) * sum_k beta1^k * g / sqrt(v_k),
    evaluated against a recorded per-step second-moment track v_track
    (length >= horizon). AdamW decay is decoupled and applied once, so its
    contribution is simply -eta*lambda*omega regardless of horizon.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    if component not in ("gradient", "decay"):
        raise ValueError(f"component must be 'gradient' or 'decay', got {component!r}")
    vec = np.asarray(vec, dtype=np.float64)
    if cfg.kind == SGDM:
        coeff = float(np.sum(cfg.momentum ** np.arange(horizon)))
        x = vec if component == "gradient" else cfg.weight_decay * vec
        return -cfg.eta * coeff * x
    if cfg.kind == ADAMW:
        if component == "decay":
            return -cfg.eta * cfg.weight_decay * vec
        if v_track is None or len(v_track) < horizon:
            raise ValueError("AdamW gradient TUC needs a recorded v track of length >= horizon")
        acc = np.zeros_like(vec)
        for k in range(horizon):
            acc = acc + (cfg.beta1 ** k) * vec / np.sqrt(np.asarray(v_track[k], dtype=np.float64))
        return -cfg.eta * (1.0 - cfg.beta1) * acc
    raise ValueError(f"TUC not implemented for optimizer kind {cfg.kind!r}")


def tuc_limit(cfg: OptimizerConfig, vec: np.ndarray, component: str = "gradient") -> np.ndarray:
    """Infinite-horizon SGDM closed forms: u = -eta/(1-alpha) * g and
    d = -eta*lambda/(1-alpha) * omega."""
    if cfg.kind != SGDM:
        raise ValueError("closed-form TUC limit is defined for SGDM only")
    vec = np.asarray(vec, dtype=np.float64)
    x = vec if component == "gradient" else cfg.weight_decay * vec
    return -cfg.eta / (1.0 - cfg.momentum) * x
