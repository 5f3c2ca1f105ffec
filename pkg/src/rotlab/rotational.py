"""Rotational wrapper around the inner optimizers: instead of letting weight
decay and gradient noise find the norm equilibrium on their own, each wrapped
weight vector is rotated by a target angular update per step at exactly
constant magnitude.

Per step, for each wrapped vector p:

  1. undo the inner learning rate: delta = delta_g / eta (the decay part of
     the inner update is discarded outright);
  2. project delta orthogonal to p (and to the all-ones direction when the
     vector was mean-centered at init);
  3. track the post-projection RMS: nu <- beta*nu + (1-beta)*||delta||^2;
  4. move p by target_eta_r * scale * n_p * delta / (sqrt(nu/(1-beta^t)) + eps);
  5. renormalize p to its initial magnitude n_p.

Because the increment is orthogonal and the RMS tracker normalizes its
magnitude, the expected per-step rotation angle is the target from the first
few steps on, independent of the initialization scale. A per-vector
imbalance multiplier deliberately speeds up or slows down chosen units for
controlled-imbalance experiments.

State and parameters are vectorized over units: p may be a single vector or
a (units, dim) stack of row vectors stepping in lockstep. A layer treated as
one unit is the one-row case with the layer flattened.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np

from .core import RngStream
from .optimizers import ADAML2, OptimizerConfig, UpdateDecomposition
from .predictions import EquilibriumPrediction, predict

logger = logging.getLogger(__name__)

# RngStream substream key for imbalance membership (system.py owns 0..3).
KEY_IMBALANCE = 4

DEFAULT_BETA = 0.9
DEFAULT_EPS_RV = 1e-8

GRANULARITIES = ("neuron", "layer")
IMBALANCE_MODES = ("slow", "split")


@dataclass
class ImbalanceSpec:
    """Deliberate rotation-speed imbalance: a fraction 1-p of units gets its
    angular target scaled. mode="slow" scales all affected units by 1/f;
    mode="split" scales half of them by f and half by 1/f."""

    p: float
    f: float
    mode: str = "slow"

    def validate(self) -> "ImbalanceSpec":
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"imbalance portion p must be in [0, 1], got {self.p}")
        if self.f < 1.0:
            raise ValueError(f"imbalance factor f must be >= 1, got {self.f}")
        if self.mode not in IMBALANCE_MODES:
            raise ValueError(f"imbalance mode must be one of {IMBALANCE_MODES}, got {self.mode!r}")
        return self


@dataclass
class RotationalSet:
    """Treatment plan for a layer's weight vectors: rotational vs standard,
    at which granularity, with optional mean-centering and imbalance."""

    enabled: bool = False
    granularity: str = "neuron"
    center: bool = False
    imbalance: Optional[ImbalanceSpec] = None

    def validate(self) -> "RotationalSet":
        if self.granularity not in GRANULARITIES:
            raise ValueError(
                f"granularity must be one of {GRANULARITIES}, got {self.granularity!r}"
            )
        if self.imbalance is not None:
            self.imbalance.validate()
        return self


@dataclass
class RotationalState:
    """Per-unit wrapper state for a stack of wrapped row vectors."""

    nu: np.ndarray  # (U,) update-RMS tracker
    n_p: np.ndarray  # (U,) initial magnitudes, fixed after init
    beta: float
    eps_rv: float
    t: int
    target_eta_r: np.ndarray  # (U,)
    imbalance_scale: np.ndarray  # (U,)
    center: bool
    noop_count: int = 0


def _as_rows(p: np.ndarray) -> Tuple[np.ndarray, bool]:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim == 1:
        return p[None, :], True
    if p.ndim == 2:
        return p, False
    raise ValueError(f"expected a vector or a stack of row vectors, got shape {p.shape}")


def _row_norms(rows: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(rows * rows, axis=1))


def init_rotational(
    p: np.ndarray,
    center: bool,
    beta: float = DEFAULT_BETA,
    eps_rv: float = DEFAULT_EPS_RV,
    target_eta_r: Union[float, np.ndarray] = 0.0,
    imbalance_scale: Union[float, np.ndarray] = 1.0,
) -> Tuple[RotationalState, np.ndarray]:
    """Record each row's magnitude (before centering), optionally re-center
    rows to zero mean at unchanged magnitude, and zero the RMS tracker.
    Returns (state, adjusted p) with p's original dimensionality."""
    if not 0.0 <= beta < 1.0:
        raise ValueError(f"beta must be in [0, 1), got {beta}")
    if eps_rv < 0.0:
        raise ValueError(f"eps_rv must be >= 0, got {eps_rv}")
    rows, was_1d = _as_rows(p)
    rows = rows.copy()
    n_p = _row_norms(rows)
    if np.any(n_p == 0.0):
        raise ValueError("cannot wrap a zero weight vector")
    if center:
        centered = rows - np.mean(rows, axis=1, keepdims=True)
        c_norms = _row_norms(centered)
        if np.any(c_norms == 0.0):
            raise ValueError("cannot center a constant weight vector (zero direction left)")
        rows = n_p[:, None] * centered / c_norms[:, None]
    U = rows.shape[0]
    state = RotationalState(
        nu=np.zeros(U),
        n_p=n_p,
        beta=float(beta),
        eps_rv=float(eps_rv),
        t=0,
        target_eta_r=np.broadcast_to(np.asarray(target_eta_r, dtype=np.float64), (U,)).copy(),
        imbalance_scale=np.broadcast_to(np.asarray(imbalance_scale, dtype=np.float64), (U,)).copy(),
        center=center,
    )
    return state, rows[0] if was_1d else rows


def wrapped_step(
    state: RotationalState,
    p: np.ndarray,
    inner: UpdateDecomposition,
    eta: float,
    eta_r_target: Optional[Union[float, np.ndarray]] = None,
) -> np.ndarray:
    """Apply one wrapped update and return the new p (same shape as the
    input). inner must come from an optimizer step taken with learning rate
    eta on these same rows; its delta_lambda is discarded. eta_r_target
    overrides the stored per-unit target for this step (scheduled runs
    recompute it from the scheduled eta)."""
    if eta <= 0.0:
        raise ValueError(f"eta must be > 0 to undo the inner learning rate, got {eta}")
    rows, was_1d = _as_rows(p)
    delta = np.asarray(inner.delta_g, dtype=np.float64).reshape(rows.shape) / eta
    if state.center:
        delta = delta - np.mean(delta, axis=1, keepdims=True)
    # Project out the radial component so only direction changes.
    coeff = np.sum(delta * rows, axis=1) / np.sum(rows * rows, axis=1)
    delta = delta - coeff[:, None] * rows

    sq = np.sum(delta * delta, axis=1)
    state.nu = state.beta * state.nu + (1.0 - state.beta) * sq
    state.t += 1

    noop = (state.nu == 0.0) & (sq == 0.0)
    n_noop = int(np.count_nonzero(noop))
    if n_noop:
        state.noop_count += n_noop
        logger.debug("wrapped_step %d: %d unit(s) idle (no update history, zero update)", state.t, n_noop)

    target = state.target_eta_r if eta_r_target is None else np.broadcast_to(
        np.asarray(eta_r_target, dtype=np.float64), state.nu.shape
    )
    denom = np.sqrt(state.nu / (1.0 - state.beta ** state.t)) + state.eps_rv
    gain = np.zeros_like(denom)
    np.divide(target * state.imbalance_scale * state.n_p, denom, out=gain, where=denom != 0.0)
    moved = rows + gain[:, None] * delta
    new_norms = _row_norms(moved)
    renormed = state.n_p[:, None] * moved / new_norms[:, None]
    out = np.where(noop[:, None], rows, renormed)
    return out[0] if was_1d else out


def assign_imbalance(spec: ImbalanceSpec, K: int, seed: int) -> np.ndarray:
    """Per-unit angular-target multipliers for K units. Affected counts are
    rounded to the nearest integer; which units are affected is a
    deterministic function of the seed."""
    spec.validate()
    if K < 1:
        raise ValueError(f"unit count K must be >= 1, got {K}")
    scales = np.ones(K)
    order = RngStream(seed, KEY_IMBALANCE).permutation(K)
    if spec.mode == "slow":
        n_slow = int(np.floor((1.0 - spec.p) * K + 0.5))
        scales[order[:n_slow]] = 1.0 / spec.f
    else:
        n_each = int(np.floor((1.0 - spec.p) / 2.0 * K + 0.5))
        scales[order[:n_each]] = spec.f
        scales[order[n_each : 2 * n_each]] = 1.0 / spec.f
    return scales


def resolve_target_eta_r(
    cfg: OptimizerConfig,
    C: int,
    override: Optional[float] = None,
) -> float:
    """Angular-update target for a wrapped vector of dimension C driven by
    the given inner optimizer.

    An explicit override wins unconditionally. Otherwise the closed-form
    equilibrium angular update for cfg is used; the inner lambda exists only
    to set this target (the wrapper never decays the weights). Adam with l2
    inside the wrapper substitutes the AdamW form, since its own equilibrium
    angle depends on gradient statistics the wrapper cannot know up front.
    """
    if override is not None:
        if override <= 0:
            raise ValueError(f"eta_r override must be > 0, got {override}")
        return float(override)
    if cfg.weight_decay == 0.0:
        raise ValueError(
            "target angular update undefined: lambda is zero; "
            "set lambda > 0 or supply an explicit eta_r override"
        )
    effective = cfg if cfg.kind != ADAML2 else OptimizerConfig(
        kind="adamw",
        eta=cfg.eta,
        weight_decay=cfg.weight_decay,
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        eps=cfg.eps,
    )
    outcome = predict(effective, C, partial=True)
    assert isinstance(outcome, EquilibriumPrediction)
    if outcome.eta_r_hat is None:
        raise ValueError(f"no closed-form angular target for kind {cfg.kind!r}")
    return float(outcome.eta_r_hat)
