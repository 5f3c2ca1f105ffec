import math

import numpy as np
import pytest

from rotlab.optimizers import OptimizerConfig
from rotlab.predictions import (
    EquilibriumPrediction,
    GradientStats,
    NoEquilibrium,
    effective_decay,
    estimate_lambda_u,
    lion_sign_variance_factor,
    norm_convergence_curve,
    predict,
)

# Expected values below were evaluated by hand from the closed forms before
# the implementation existed (sqrt(eta*C/(2*lambda)) and friends), then
# frozen at full float64 precision.

ADAMW = OptimizerConfig(kind="adamw", eta=1.25e-2, weight_decay=8e-2, beta1=0.9)
SGDM = OptimizerConfig(kind="sgdm", eta=0.5, weight_decay=1e-4, momentum=0.9)
LION = OptimizerConfig(kind="lion", eta=5e-4, weight_decay=1.0, beta1=0.9, beta2=0.999)
ADAML2 = OptimizerConfig(kind="adaml2", eta=7.813e-4, weight_decay=1.25e-4, beta1=0.9)


def test_adamw_closed_forms():
    pred = predict(ADAMW, 128)
    assert isinstance(pred, EquilibriumPrediction)
    assert pred.omega_norm_hat == pytest.approx(3.1622776601683795, rel=1e-12)
    assert pred.eta_g_hat == pytest.approx(0.0324442842261525, rel=1e-12)
    assert pred.eta_r_hat == pytest.approx(0.010259783520851539, rel=1e-12)
    assert pred.tau_g_hat == pytest.approx(0.14142135623730953, rel=1e-12)
    assert pred.tau_r_hat == pytest.approx(0.044721359549995794, rel=1e-12)


def test_adamw_consistency_identity():
    pred = predict(ADAMW, 128)
    assert pred.eta_r_hat * pred.omega_norm_hat == pytest.approx(pred.eta_g_hat, rel=1e-12)


def test_adamw_exact_norm_keeps_quadratic_decay_term():
    pred = predict(ADAMW, 128, exact=True)
    assert pred.omega_norm_hat == pytest.approx(3.163068526170533, rel=1e-12)
    assert pred.omega_norm_hat > predict(ADAMW, 128).omega_norm_hat


def test_sgdm_closed_forms():
    stats = GradientStats(expected_sq_norm=1.0, unit_norm_expected_sq_norm=1.0)
    pred = predict(SGDM, 128, stats=stats)
    assert pred.eta_r_hat == pytest.approx(0.007254762501100117, rel=1e-12)
    assert pred.omega_norm_hat == pytest.approx(12.574334296829354, rel=1e-12)
    assert pred.eta_g_hat == pytest.approx(1.147078669352809, rel=1e-12)
    assert pred.tau_r_hat == pytest.approx(0.0316227766016838, rel=1e-11)
    assert pred.tau_g_hat == pytest.approx(5.0, rel=1e-12)


def test_lion_closed_forms():
    pred = predict(LION, 128)
    assert pred.eta_r_hat == pytest.approx(0.004042827479089326, rel=1e-12)
    assert pred.eta_g_hat == pytest.approx(0.005656854249492381, rel=1e-12)
    assert pred.omega_norm_hat == pytest.approx(1.3992321657926954, rel=1e-12)


def test_lion_sign_variance_factor():
    assert lion_sign_variance_factor(0.9, 0.999) == pytest.approx(
        0.010405202601300645, rel=1e-12
    )
    # no momentum in the update direction: factor collapses to 1
    assert lion_sign_variance_factor(0.0, 0.999) == pytest.approx(1.0, rel=1e-12)


def test_adaml2_closed_forms_from_per_coordinate_stats():
    stats = GradientStats(per_coord_sqrt_second_moment=np.full(128, 1e-2))
    pred = predict(ADAML2, 128, stats=stats)
    assert pred.omega_norm_hat == pytest.approx(1.5874349158015566, rel=1e-12)
    assert pred.eta_r_hat == pytest.approx(0.0012774681475665242, rel=1e-12)


def test_adaml2_homogeneous_fallback_matches_vector_form():
    """A scalar E[||g_tilde||^2] is treated as homogeneous coordinates:
    sum_k sqrt(E[g_k^2]) = sqrt(C) * sqrt(E[||g_tilde||^2] / C) * C ... i.e.
    sqrt(C * E[||g_tilde||^2])."""
    sq = 128 * 1e-4
    via_vector = predict(
        ADAML2, 128, stats=GradientStats(per_coord_sqrt_second_moment=np.full(128, 1e-2))
    )
    via_scalar = predict(ADAML2, 128, stats=GradientStats(unit_norm_expected_sq_norm=sq))
    assert via_scalar.omega_norm_hat == pytest.approx(via_vector.omega_norm_hat, rel=1e-12)


def test_zero_decay_reports_no_equilibrium():
    cfg = OptimizerConfig(kind="adamw", eta=1e-2, weight_decay=0.0)
    out = predict(cfg, 128)
    assert isinstance(out, NoEquilibrium)
    assert "lambda" in out.reason


def test_negative_effective_decay_reports_no_equilibrium():
    cfg = OptimizerConfig(kind="adamw", eta=1e-2, weight_decay=-0.05)
    out = predict(cfg, 128)
    assert isinstance(out, NoEquilibrium)


def test_missing_stats_raise_naming_the_field():
    with pytest.raises(ValueError, match="expected_sq_norm"):
        predict(SGDM, 128)
    with pytest.raises(ValueError, match="per_coord_sqrt_second_moment"):
        predict(ADAML2, 128)


def test_partial_fills_what_it_can():
    pred = predict(SGDM, 128, partial=True)
    assert pred.eta_r_hat == pytest.approx(0.007254762501100117, rel=1e-12)
    assert pred.eta_g_hat is None
    assert pred.omega_norm_hat is None


def test_stats_validation():
    with pytest.raises(ValueError):
        GradientStats(expected_sq_norm=-1.0).validate(128)
    with pytest.raises(ValueError):
        GradientStats(per_coord_sqrt_second_moment=np.ones(4)).validate(128)


# --- norm convergence recurrence ---


def test_curve_initial_and_first_step():
    cfg = OptimizerConfig(kind="adamw", eta=1e-2, weight_decay=0.1)
    curve = norm_convergence_curve(1.0, cfg, 100, 5)
    assert curve.shape == (6,)
    assert curve[0] == 1.0
    assert curve[1] == pytest.approx(1.008001, rel=1e-12)


def test_curve_fixed_point_and_monotonicity():
    cfg = OptimizerConfig(kind="adamw", eta=1e-2, weight_decay=0.1)
    fp = 5.002501250625313
    up = norm_convergence_curve(1.0, cfg, 100, 4000)
    down = norm_convergence_curve(4 * fp, cfg, 100, 4000)
    assert up[-1] == pytest.approx(fp, rel=1e-3)
    assert np.all(np.diff(up) > 0)
    assert np.all(np.diff(down) < 0)
    # starting at the fixed point stays there
    flat = norm_convergence_curve(fp, cfg, 100, 10)
    np.testing.assert_allclose(flat, fp, rtol=1e-12)


def test_curve_limit_matches_exact_equilibrium_norm():
    cfg = OptimizerConfig(kind="adamw", eta=1e-2, weight_decay=0.1)
    exact = predict(cfg, 100, exact=True).omega_norm_hat
    fp = 5.002501250625313
    assert math.sqrt(fp) == pytest.approx(exact, rel=1e-12)


def test_curve_domain_errors():
    bad = OptimizerConfig(kind="adamw", eta=20.0, weight_decay=0.1)
    with pytest.raises(ValueError):
        norm_convergence_curve(1.0, bad, 100, 10)
    sgdm = OptimizerConfig(kind="sgdm", eta=1e-2, weight_decay=0.1)
    with pytest.raises(ValueError):
        norm_convergence_curve(1.0, sgdm, 100, 10)


# --- scale-sensitive helpers ---


def test_effective_decay_substitution():
    rs = effective_decay(5e-4, 0.0)
    assert rs.lambda_e == pytest.approx(5e-4)
    rs = effective_decay(5e-4, 0.2)
    assert rs.lambda_e == pytest.approx(0.2005)


def test_estimate_lambda_u_recovers_planted_radial_component():
    """Gradients built as orthogonal noise plus a known radial pull should
    yield the planted coefficient."""
    rng = np.random.default_rng(12)
    omega = rng.standard_normal(64)
    omega /= np.linalg.norm(omega)
    planted = 0.35  # decay-like: gradient leans along +omega
    grads = []
    for _ in range(400):
        noise = rng.standard_normal(64)
        noise -= (noise @ omega) * omega
        grads.append(noise + planted * omega)
    est = estimate_lambda_u(omega, grads)
    assert est == pytest.approx(planted, abs=1e-12)
