"""Closed-form steady-state predictors for weight vectors trained with
decay on the random-walk model.

When a weight vector receives i.i.d. gradients orthogonal to itself (the
normalized-layer setting), weight decay shrinks the norm while the gradient
steps grow it. The balance point fixes three observables per optimizer:

  * eta_g_hat: RMS of the gradient-driven update per step,
  * omega_norm_hat: the equilibrium weight norm,
  * eta_r_hat: the expected angle between consecutive weight vectors.

For the scale-invariant treatments (AdamW, Adam with l2, Lion) the three are
tied together by eta_r_hat = eta_g_hat / omega_norm_hat; the implementation
computes eta_r_hat through that quotient so the identity holds to rounding.

Diffusion rates tau_g_hat/tau_r_hat are the long-horizon analogues built
from the total update contribution of a single gradient sample rather than
the per-step increment; they are defined here for SGDM and AdamW.

All simplified forms assume eta*lambda << 2. The unsimplified AdamW norm
(denominator 2*lambda - eta*lambda**2) is available behind exact=True; it
is what the norm-convergence recurrence converges to.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np

from .optimizers import ADAML2, ADAMW, LION, SGDM, OptimizerConfig


@dataclass
class GradientStats:
    """Measured gradient statistics feeding the predictors.

    expected_sq_norm is E[||g||^2] at the current weight scale.
    unit_norm_expected_sq_norm is E[||g_tilde||^2] for the scale-free
    gradient g_tilde = ||omega|| * g (invariant under rescaling omega for a
    scale-invariant unit). per_coord_sqrt_second_moment holds
    sqrt(E[g_tilde_k^2]) per coordinate; only Adam with l2 needs it.
    """

    expected_sq_norm: Optional[float] = None
    unit_norm_expected_sq_norm: Optional[float] = None
    per_coord_sqrt_second_moment: Optional[np.ndarray] = None

    def validate(self, C: Optional[int] = None) -> "GradientStats":
        for name in ("expected_sq_norm", "unit_norm_expected_sq_norm"):
            val = getattr(self, name)
            if val is not None and val < 0:
                raise ValueError(f"{name} must be >= 0, got {val}")
        v = self.per_coord_sqrt_second_moment
        if v is not None:
            v = np.asarray(v, dtype=np.float64)
            if np.any(v < 0):
                raise ValueError("per_coord_sqrt_second_moment entries must be >= 0")
            if C is not None and v.size != C:
                raise ValueError(
                    f"per_coord_sqrt_second_moment has length {v.size}, expected C={C}"
                )
            self.per_coord_sqrt_second_moment = v
        return self


@dataclass
class EquilibriumPrediction:
    """Predicted steady-state observables. Fields that a given optimizer
    kind or the available statistics cannot determine are None."""

    kind: str
    eta_g_hat: Optional[float] = None
    eta_r_hat: Optional[float] = None
    omega_norm_hat: Optional[float] = None
    tau_g_hat: Optional[float] = None
    tau_r_hat: Optional[float] = None


@dataclass
class NoEquilibrium:
    """Typed outcome for configurations with no steady state (no decay to
    balance the gradient-driven norm growth)."""

    reason: str


PredictOutcome = Union[EquilibriumPrediction, NoEquilibrium]


@dataclass
class RadialStats:
    """Radial gradient coefficient lambda_u and the effective decay
    lambda_e = lambda + lambda_u it induces on a scale-sensitive weight."""

    lambda_u: float
    lambda_e: float


def _require(stats: Optional[GradientStats], field_name: str, kind: str) -> float:
    if stats is None or getattr(stats, field_name) is None:
        raise ValueError(f"{kind} prediction requires gradient stats field '{field_name}'")
    return getattr(stats, field_name)


def _adaml2_stat_sum(stats: Optional[GradientStats], C: int) -> float:
    """Sum over coordinates of sqrt(E[g_tilde_k^2]). Falls back to the
    homogeneous form sqrt(C) * sqrt(E[||g_tilde||^2]) when only the scalar
    second moment is known (all coordinates sharing one second moment)."""
    if stats is not None and stats.per_coord_sqrt_second_moment is not None:
        return float(np.sum(np.asarray(stats.per_coord_sqrt_second_moment, dtype=np.float64)))
    if stats is not None and stats.unit_norm_expected_sq_norm is not None:
        return math.sqrt(C) * math.sqrt(stats.unit_norm_expected_sq_norm)
    raise ValueError(
        "adaml2 prediction requires gradient stats field 'per_coord_sqrt_second_moment' "
        "(or 'unit_norm_expected_sq_norm' for the homogeneous fallback)"
    )


def lion_sign_variance_factor(beta1: float, beta2: float) -> float:
    """Variance factor (1-b1)^2 + b1^2*(1-b2)/(1+b2) of the pre-sign
    momentum average under i.i.d. unit-variance gradient coordinates."""
    return (1.0 - beta1) ** 2 + beta1 ** 2 * (1.0 - beta2) / (1.0 + beta2)


def predict(
    cfg: OptimizerConfig,
    C: int,
    stats: Optional[GradientStats] = None,
    exact: bool = False,
    partial: bool = False,
) -> PredictOutcome:
    """Evaluate the equilibrium predictions for cfg over a weight vector of
    dimension C.

    stats supplies measured gradient statistics where the optimizer's forms
    need them (SGDM needs both squared-norm expectations; Adam with l2 needs
    the per-coordinate vector or the scalar fallback; AdamW and Lion need
    only C). A missing required field raises ValueError naming the field,
    unless partial=True, in which case the affected output fields are left
    None (the CLI prints those as "requires ...").

    exact=True switches the AdamW norm to the unsimplified denominator
    2*lambda - eta*lambda**2 (and eta_r_hat follows through the quotient).

    lambda <= 0 returns NoEquilibrium rather than infinities.
    """
    # Validate with the decay clamped so a negative lambda (possible for
    # measured effective decay on scale-sensitive weights) lands in the
    # NoEquilibrium branch below instead of raising here.
    replace(cfg, weight_decay=max(cfg.weight_decay, 0.0)).validate()
    if C < 1:
        raise ValueError(f"C must be >= 1, got {C}")
    if stats is not None:
        stats.validate(C)
    lam = cfg.weight_decay
    eta = cfg.eta
    if lam == 0.0:
        return NoEquilibrium("lambda is zero")
    if lam < 0.0:
        return NoEquilibrium("effective decay is negative")

    def maybe(getter):
        """Evaluate a stats-dependent field, degrading to None under partial."""
        try:
            return getter()
        except ValueError:
            if partial:
                return None
            raise

    if cfg.kind == SGDM:
        alpha = cfg.momentum
        eta_r = math.sqrt(2.0 * eta * lam / (1.0 + alpha))
        eta_g = maybe(
            lambda: eta * math.sqrt(_require(stats, "expected_sq_norm", "sgdm") / (1.0 - alpha ** 2))
        )
        w_hat = maybe(
            lambda: (
                eta * _require(stats, "unit_norm_expected_sq_norm", "sgdm") / (2.0 * lam * (1.0 - alpha))
            ) ** 0.25
        )
        tau_g = maybe(
            lambda: eta / (1.0 - alpha) * math.sqrt(_require(stats, "expected_sq_norm", "sgdm"))
        )
        tau_r = math.sqrt(2.0 * eta * lam / (1.0 - alpha))
        return EquilibriumPrediction(SGDM, eta_g, eta_r, w_hat, tau_g, tau_r)

    if cfg.kind == ADAMW:
        eta_g = eta * math.sqrt(C * (1.0 - cfg.beta1) / (1.0 + cfg.beta1))
        if exact:
            denom = 2.0 * lam - eta * lam * lam
            if denom <= 0:
                raise ValueError(f"exact AdamW norm undefined: 2*lambda - eta*lambda^2 = {denom} <= 0")
        else:
            denom = 2.0 * lam
        w_hat = math.sqrt(eta * C / denom)
        return EquilibriumPrediction(
            ADAMW,
            eta_g,
            eta_g / w_hat,
            w_hat,
            tau_g_hat=eta * math.sqrt(C),
            tau_r_hat=math.sqrt(2.0 * eta * lam),
        )

    if cfg.kind == ADAML2:
        eta_g = eta * math.sqrt(C * (1.0 - cfg.beta1) / (1.0 + cfg.beta1))
        w_hat = maybe(lambda: (eta * _adaml2_stat_sum(stats, C) / (2.0 * lam)) ** (1.0 / 3.0))
        eta_r = None if w_hat is None else eta_g / w_hat
        return EquilibriumPrediction(ADAML2, eta_g, eta_r, w_hat)

    if cfg.kind == LION:
        # Loosest of the four: the derivation models the pre-sign momentum
        # coordinates as i.i.d. centered normals, so downstream tolerances
        # are widened for this kind.
        k2 = lion_sign_variance_factor(cfg.beta1, cfg.beta2)
        eta_g = eta * math.sqrt(C)
        w_hat = math.sqrt(eta * C / (math.pi * lam * k2))
        return EquilibriumPrediction(LION, eta_g, eta_g / w_hat, w_hat)

    raise ValueError(f"unknown optimizer kind {cfg.kind!r}")


def norm_convergence_curve(
    omega0_sq: float,
    cfg: OptimizerConfig,
    C: int,
    steps: int,
) -> np.ndarray:
    """Expected squared norm E[omega_i^2] of an AdamW random walk for
    i = 0..steps (length steps+1):

        E[omega_i^2] = omega0_sq * a**i + fp * (1 - a**i)

    with a = 1 - 2*eta*lambda + (eta*lambda)**2 and fixed point
    fp = eta**2 * C / (2*eta*lambda - (eta*lambda)**2). The fixed point is
    the square of the exact (unsimplified) equilibrium norm. Requires
    0 < eta*lambda < 1 so the recurrence contracts.
    """
    cfg.validate()
    if cfg.kind != ADAMW:
        raise ValueError(f"norm convergence curve is defined for adamw, got {cfg.kind!r}")
    if omega0_sq < 0:
        raise ValueError(f"omega0_sq must be >= 0, got {omega0_sq}")
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    el = cfg.eta * cfg.weight_decay
    if not 0.0 < el < 1.0:
        raise ValueError(f"eta*lambda must lie in (0, 1) for a contractive recurrence, got {el}")
    a = 1.0 - 2.0 * el + el * el
    fp = cfg.eta ** 2 * C / (2.0 * el - el * el)
    powers = a ** np.arange(steps + 1, dtype=np.float64)
    return omega0_sq * powers + fp * (1.0 - powers)


def effective_decay(lam: float, lambda_u: float) -> RadialStats:
    """Combine the configured decay with a measured radial gradient
    coefficient. A weight whose gradient has a radial component behaves like
    a scale-invariant one trained with decay lambda_e = lambda + lambda_u;
    lambda_e <= 0 makes downstream predict() report no equilibrium."""
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    return RadialStats(lambda_u=lambda_u, lambda_e=lam + lambda_u)


def estimate_lambda_u(omega: np.ndarray, gradients: Sequence[np.ndarray]) -> float:
    """Sample mean of <omega, g>/||omega||^2 over gradient samples: the
    decay-like pull (or push, when negative) the gradient's radial component
    exerts on the weight norm."""
    omega = np.asarray(omega, dtype=np.float64)
    sq = float(np.dot(omega, omega))
    if sq == 0.0:
        raise ValueError("lambda_u is undefined for a zero weight vector")
    if len(gradients) == 0:
        raise ValueError("lambda_u estimation needs at least one gradient sample")
    vals = [float(np.dot(omega, np.asarray(g, dtype=np.float64))) / sq for g in gradients]
    return float(np.mean(vals))
