import math

import numpy as np
import pytest

from rotlab.core import (
    RngStream,
    StreamingMoments,
    angle_between,
    project_out,
    rms_downsample,
    sample_normal,
)


def test_rngstream_reproducible():
    a = RngStream(42, 1).standard_normal(16)
    b = RngStream(42, 1).standard_normal(16)
    np.testing.assert_array_equal(a, b)


def test_rngstream_keys_independent():
    a = RngStream(42, 0).standard_normal(16)
    b = RngStream(42, 1).standard_normal(16)
    assert not np.array_equal(a, b)


def test_rngstream_seeds_independent():
    a = RngStream(1, 0).standard_normal(16)
    b = RngStream(2, 0).standard_normal(16)
    assert not np.array_equal(a, b)


def test_rngstream_spawn_matches_fresh_stream():
    spawned = RngStream(7, 0).spawn(3).standard_normal(8)
    fresh = RngStream(7, 3).standard_normal(8)
    np.testing.assert_array_equal(spawned, fresh)


def test_sample_normal_zero_std_consumes_draws():
    r1 = RngStream(5)
    r2 = RngStream(5)
    z = sample_normal(r1, 10, 0.0)
    sample_normal(r2, 10, 1.0)
    assert np.all(z == 0.0)
    # both streams must now be in the same position
    np.testing.assert_array_equal(r1.standard_normal(4), r2.standard_normal(4))


def test_sample_normal_rejects_bad_args():
    with pytest.raises(ValueError):
        sample_normal(RngStream(0), 4, -1.0)
    with pytest.raises(ValueError):
        sample_normal(RngStream(0), 0, 1.0)


@pytest.mark.parametrize(
    "a, b, expected",
    [
        ([1.0, 0.0], [0.0, 1.0], math.pi / 2),
        ([1.0, 0.0], [1.0, 0.0], 0.0),
        ([1.0, 0.0], [-1.0, 0.0], math.pi),
        ([1.0, 0.0], [1.0, 1.0], math.pi / 4),
    ],
)
def test_angle_between_known_angles(a, b, expected):
    assert angle_between(np.array(a), np.array(b)) == pytest.approx(expected, abs=1e-12)


def test_angle_between_clamp_handles_rounding():
    v = np.array([1.0, 1e-8])
    # parallel up to rounding; cosine may exceed 1 by a few ulp
    assert angle_between(v, 2.0 * v) == pytest.approx(0.0, abs=1e-6)


def test_angle_between_zero_vector_raises():
    with pytest.raises(ValueError):
        angle_between(np.zeros(3), np.ones(3))


def test_project_out_removes_component():
    rng = np.random.default_rng(0)
    v = rng.standard_normal(32)
    b = rng.standard_normal(32)
    r = project_out(v, b)
    assert abs(float(r @ b)) < 1e-12 * np.linalg.norm(v) * np.linalg.norm(b)
    # v decomposes into the projection plus a multiple of b
    np.testing.assert_allclose(v - r, (float(v @ b) / float(b @ b)) * b, rtol=1e-12)


def test_project_out_zero_basis_raises():
    with pytest.raises(ValueError):
        project_out(np.ones(3), np.zeros(3))


def test_rms_downsample_blocks():
    x = np.array([3.0, 4.0, 3.0, 4.0, 5.0])
    out = rms_downsample(x, 2)
    np.testing.assert_allclose(out, [math.sqrt(12.5), math.sqrt(12.5), 5.0])


def test_rms_downsample_identity_and_empty():
    x = np.array([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(rms_downsample(x, 1), x)
    assert rms_downsample([], 3).size == 0
    with pytest.raises(ValueError):
        rms_downsample(x, 0)


def test_streaming_moments_match_batch():
    rng = np.random.default_rng(1)
    xs = rng.standard_normal((50, 6))
    sm = StreamingMoments()
    for x in xs:
        sm.update(x)
    np.testing.assert_allclose(sm.mean, xs.mean(axis=0), rtol=1e-12)
    np.testing.assert_allclose(sm.mean_sq, (xs * xs).mean(axis=0), rtol=1e-12)
    np.testing.assert_allclose(sm.rms, np.sqrt((xs * xs).mean(axis=0)), rtol=1e-12)
    assert sm.count == 50


def test_streaming_moments_scalar():
    sm = StreamingMoments()
    for v in (1.0, 2.0, 3.0):
        sm.update(v)
    assert sm.mean == pytest.approx(2.0)
    assert sm.mean_sq == pytest.approx(14.0 / 3.0)
