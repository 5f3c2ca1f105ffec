import numpy as np
import pytest

from rotlab.optimizers import (
    ADAML2,
    ADAMW,
    KINDS,
    LION,
    SGDM,
    OptimizerConfig,
    UpdateDecomposition,
    compute_tuc,
    init_state,
    step,
    tuc_limit,
)


def cfg_for(kind, **kw):
    base = dict(eta=0.1, weight_decay=0.01)
    base.update(kw)
    return OptimizerConfig(kind=kind, **base)


def run_steps(cfg, p0, grads):
    state = init_state(cfg, p0.shape)
    p = p0.copy()
    decomps = []
    for g in grads:
        d = step(state, p, g, cfg)
        p = p + d.total()
        decomps.append(d)
    return p, decomps


def test_kinds_listed():
    assert KINDS == (SGDM, ADAMW, ADAML2, LION)


def test_config_validation():
    with pytest.raises(ValueError):
        OptimizerConfig(kind="rmsprop", eta=0.1).validate()
    with pytest.raises(ValueError):
        OptimizerConfig(kind=ADAMW, eta=0.0).validate()
    with pytest.raises(ValueError):
        OptimizerConfig(kind=ADAMW, eta=0.1, weight_decay=-1.0).validate()
    with pytest.raises(ValueError):
        OptimizerConfig(kind=ADAMW, eta=0.1, beta2=1.0).validate()
    with pytest.raises(ValueError):
        OptimizerConfig(kind=SGDM, eta=0.1, momentum=1.0).validate()


def test_with_eta_replaces_only_eta():
    cfg = cfg_for(ADAMW, beta1=0.8)
    cfg2 = cfg.with_eta(0.5)
    assert cfg2.eta == 0.5
    assert cfg2.beta1 == 0.8
    assert cfg.eta == 0.1  # original untouched


def test_decomposition_total():
    d = UpdateDecomposition(np.array([1.0, 2.0]), np.array([-0.5, 0.5]))
    np.testing.assert_array_equal(d.total(), [0.5, 2.5])


# --- SGDM ---


def test_sgdm_matches_reference_loop():
    """Hand-rolled heavy-ball recursion: m <- alpha*m + (g + lam*p),
    p <- p - eta*m. The split accumulators must add up to it exactly."""
    cfg = cfg_for(SGDM, eta=0.05, weight_decay=0.02, momentum=0.9)
    rng = np.random.default_rng(3)
    p0 = rng.standard_normal(7)
    grads = rng.standard_normal((9, 7))

    p_ref = p0.copy()
    m_ref = np.zeros_like(p0)
    for g in grads:
        m_ref = cfg.momentum * m_ref + (g + cfg.weight_decay * p_ref)
        p_ref = p_ref - cfg.eta * m_ref

    p, decomps = run_steps(cfg, p0, grads)
    np.testing.assert_allclose(p, p_ref, rtol=1e-12, atol=1e-15)
    # decay part carries exactly the lam*p history, gradient part the rest
    assert all(np.any(d.delta_lambda != 0.0) for d in decomps)


def test_sgdm_zero_decay_has_zero_decay_part():
    cfg = cfg_for(SGDM, weight_decay=0.0)
    rng = np.random.default_rng(4)
    _, decomps = run_steps(cfg, rng.standard_normal(5), rng.standard_normal((4, 5)))
    for d in decomps:
        np.testing.assert_array_equal(d.delta_lambda, np.zeros(5))


# --- AdamW ---


def test_adamw_matches_reference_loop():
    cfg = cfg_for(ADAMW, eta=0.01, weight_decay=0.1, beta1=0.9, beta2=0.99, eps=1e-8)
    rng = np.random.default_rng(5)
    p0 = rng.standard_normal(6)
    grads = rng.standard_normal((11, 6))

    p_ref = p0.copy()
    m = np.zeros(6)
    v = np.zeros(6)
    for t, g in enumerate(grads, start=1):
        m = cfg.beta1 * m + (1 - cfg.beta1) * g
        v = cfg.beta2 * v + (1 - cfg.beta2) * g * g
        mhat = m / (1 - cfg.beta1 ** t)
        vhat = v / (1 - cfg.beta2 ** t)
        p_ref = p_ref - cfg.eta * (mhat / (np.sqrt(vhat) + cfg.eps) + cfg.weight_decay * p_ref)

    p, decomps = run_steps(cfg, p0, grads)
    np.testing.assert_allclose(p, p_ref, rtol=1e-12, atol=1e-15)


def test_adamw_decay_is_decoupled():
    """The gradient-driven part must not depend on lambda."""
    rng = np.random.default_rng(6)
    p0 = rng.standard_normal(5)
    grads = rng.standard_normal((6, 5))
    _, with_decay = run_steps(cfg_for(ADAMW, weight_decay=0.3), p0, grads)
    # replay without decay, feeding the same p trajectory is not possible,
    # so compare only step 1 where p is identical
    _, without = run_steps(cfg_for(ADAMW, weight_decay=0.0), p0, grads)
    np.testing.assert_allclose(
        with_decay[0].delta_g, without[0].delta_g, rtol=1e-12
    )
    np.testing.assert_allclose(with_decay[0].delta_lambda, -0.1 * 0.3 * p0, rtol=1e-12)


def test_adamw_first_step_is_signed_eta():
    """With bias correction, step 1 gives eta * sign(g) exactly (eps aside)."""
    cfg = cfg_for(ADAMW, eta=0.01, weight_decay=0.0, eps=0.0)
    state = init_state(cfg, (4,))
    g = np.array([3.0, -2.0, 0.5, -0.1])
    d = step(state, np.ones(4), g, cfg)
    np.testing.assert_allclose(d.delta_g, -cfg.eta * np.sign(g), rtol=1e-12)


def test_adamw_zero_gradient_gives_zero_update():
    cfg = cfg_for(ADAMW, eps=0.0)
    state = init_state(cfg, (3,))
    d = step(state, np.ones(3), np.zeros(3), cfg)
    np.testing.assert_array_equal(d.delta_g, np.zeros(3))


# --- Adam with l2 ---


def test_adam_l2_matches_reference_loop():
    """l2 feeds g + lam*p into both moment accumulators; there is no
    separate decay term in the applied update."""
    cfg = cfg_for(ADAML2, eta=0.01, weight_decay=0.05, beta1=0.9, beta2=0.999)
    rng = np.random.default_rng(7)
    p0 = rng.standard_normal(6)
    grads = rng.standard_normal((8, 6))

    p_ref = p0.copy()
    m = np.zeros(6)
    v = np.zeros(6)
    for t, g in enumerate(grads, start=1):
        ge = g + cfg.weight_decay * p_ref
        m = cfg.beta1 * m + (1 - cfg.beta1) * ge
        v = cfg.beta2 * v + (1 - cfg.beta2) * ge * ge
        mhat = m / (1 - cfg.beta1 ** t)
        vhat = v / (1 - cfg.beta2 ** t)
        p_ref = p_ref - cfg.eta * mhat / (np.sqrt(vhat) + cfg.eps)

    p, decomps = run_steps(cfg, p0, grads)
    np.testing.assert_allclose(p, p_ref, rtol=1e-12, atol=1e-15)
    for d in decomps:
        np.testing.assert_array_equal(d.delta_lambda, np.zeros(6))


def test_adam_l2_reduces_to_adamw_at_zero_decay():
    rng = np.random.default_rng(8)
    p0 = rng.standard_normal(5)
    grads = rng.standard_normal((5, 5))
    pa, _ = run_steps(cfg_for(ADAML2, weight_decay=0.0), p0, grads)
    pw, _ = run_steps(cfg_for(ADAMW, weight_decay=0.0), p0, grads)
    np.testing.assert_allclose(pa, pw, rtol=1e-12)


# --- Lion ---


def test_lion_matches_reference_loop():
    """Update direction interpolates m and g with beta1 and is signed; the
    momentum buffer then advances with beta2."""
    cfg = cfg_for(LION, eta=1e-3, weight_decay=0.5, beta1=0.9, beta2=0.99)
    rng = np.random.default_rng(9)
    p0 = rng.standard_normal(6)
    grads = rng.standard_normal((10, 6))

    p_ref = p0.copy()
    m = np.zeros(6)
    for g in grads:
        direction = np.sign(cfg.beta1 * m + (1 - cfg.beta1) * g)
        m = cfg.beta2 * m + (1 - cfg.beta2) * g
        p_ref = p_ref - cfg.eta * (direction + cfg.weight_decay * p_ref)

    p, _ = run_steps(cfg, p0, grads)
    np.testing.assert_allclose(p, p_ref, rtol=1e-12, atol=1e-15)


def test_lion_update_magnitude_is_eta_sqrt_c():
    cfg = cfg_for(LION)
    rng = np.random.default_rng(10)
    _, decomps = run_steps(cfg, rng.standard_normal(64), rng.standard_normal((5, 64)))
    for d in decomps:
        assert np.linalg.norm(d.delta_g) == pytest.approx(cfg.eta * 8.0, rel=1e-12)


# --- total update contributions ---


def test_tuc_sgdm_gradient_closed_form():
    cfg = cfg_for(SGDM, eta=0.5, weight_decay=1e-4, momentum=0.9)
    g = np.array([1.0, -2.0, 0.5])
    horizon = 200
    u = compute_tuc(cfg, g, horizon=horizon, component="gradient")
    expect = -cfg.eta * (1 - cfg.momentum ** horizon) / (1 - cfg.momentum) * g
    np.testing.assert_allclose(u, expect, rtol=1e-12)
    np.testing.assert_allclose(
        tuc_limit(cfg, g, component="gradient"), -cfg.eta / (1 - cfg.momentum) * g, rtol=1e-12
    )


def test_tuc_sgdm_decay_closed_form():
    cfg = cfg_for(SGDM, eta=0.5, weight_decay=1e-4, momentum=0.9)
    w = np.array([2.0, 0.0, -1.0])
    d = compute_tuc(cfg, w, horizon=200, component="decay")
    expect = -cfg.eta * cfg.weight_decay * (1 - cfg.momentum ** 200) / (1 - cfg.momentum) * w
    np.testing.assert_allclose(d, expect, rtol=1e-12)


def test_tuc_adamw_needs_v_track():
    cfg = cfg_for(ADAMW)
    with pytest.raises(ValueError):
        compute_tuc(cfg, np.ones(3), horizon=10, component="gradient")


def test_tuc_adamw_decay_is_single_shot():
    """Decoupled decay acts once; there is no momentum tail to sum."""
    cfg = cfg_for(ADAMW, eta=0.01, weight_decay=0.1)
    w = np.array([1.0, 2.0])
    d = compute_tuc(cfg, w, horizon=50, component="decay")
    np.testing.assert_allclose(d, -cfg.eta * cfg.weight_decay * w, rtol=1e-12)


def test_tuc_rejects_unknown_component():
    cfg = cfg_for(SGDM)
    with pytest.raises(ValueError):
        compute_tuc(cfg, np.ones(2), horizon=5, component="sideways")


def test_state_dimension_mismatch_raises():
    cfg = cfg_for(ADAMW)
    state = init_state(cfg, (4,))
    with pytest.raises(ValueError):
        step(state, np.ones(4), np.ones(5), cfg)
