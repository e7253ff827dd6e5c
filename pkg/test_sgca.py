import math

import numpy as np
import pytest

from errors import ConfigurationError, DegenerateInputError
from sgca import (
    REC709,
    ColorAdjustment,
    SgcaParams,
    StatVector,
    apply_adjustment,
    compute_stats,
    luminance,
    predict_adjustment,
    sgca_forward,
)


def test_stats_constant_image():
    image = np.full((1, 3, 5, 5), 0.3, dtype=np.float32)
    stats = compute_stats(image)
    for values in (stats.mu, stats.v_bright, stats.v_dark):
        np.testing.assert_allclose(values, 0.3, atol=1e-6)
    np.testing.assert_allclose(stats.sigma, 0.0, atol=1e-7)


def test_stats_tail_buckets():
    ramp = (np.arange(100) / 100.0).astype(np.float32)
    image = np.stack([ramp, ramp[::-1], ramp])[None].reshape(1, 3, 10, 10)
    stats = compute_stats(image)
    np.testing.assert_allclose(stats.v_bright, 0.97, atol=1e-6)
    np.testing.assert_allclose(stats.v_dark, 0.02, atol=1e-6)


def test_stats_match_full_sort(random_image):
    image = random_image(16, 16)
    stats = compute_stats(image)
    k = math.floor(0.05 * 256)
    for c in range(3):
        ordered = np.sort(image[0, c].ravel().astype(np.float64))
        assert stats.mu[c] == pytest.approx(ordered.mean(), abs=1e-6)
        assert stats.sigma[c] == pytest.approx(ordered.std(), abs=1e-6)
        assert stats.v_bright[c] == pytest.approx(ordered[-k:].mean(), abs=1e-6)
        assert stats.v_dark[c] == pytest.approx(ordered[:k].mean(), abs=1e-6)


def test_stats_ordering(rng):
    for _ in range(50):
        height, width = rng.integers(5, 20, size=2)
        stats = compute_stats(rng.random((1, 3, height, width)).astype(np.float32))
        assert np.all(stats.v_dark <= stats.mu) and np.all(stats.mu <= stats.v_bright)
        assert np.all(stats.sigma >= 0)


def test_stats_need_twenty_pixels():
    with pytest.raises(DegenerateInputError):
        compute_stats(np.zeros((1, 3, 4, 4), dtype=np.float32))
    compute_stats(np.zeros((1, 3, 4, 5), dtype=np.float32))


def test_stat_vector_order():
    stats = StatVector.from_array(np.arange(12))
    np.testing.assert_array_equal(stats.sigma, [3, 4, 5])
    np.testing.assert_array_equal(stats.as_array(), np.arange(12))


def test_zero_mlp_is_noop():
    adj = predict_adjustment(StatVector.from_array(np.linspace(0, 1, 12)), SgcaParams.zeros())
    assert (adj.delta_t, adj.delta_tau, adj.s_gain) == (0.0, 0.0, 1.0)


def test_saturated_output_hits_bound():
    params = SgcaParams.zeros(hidden=4)
    params = SgcaParams(params.w1, params.b1, params.w2, [50.0, -50.0, 50.0])
    adj = predict_adjustment(StatVector.from_array(np.zeros(12)), params)
    assert adj.delta_t == pytest.approx(0.15)
    assert adj.delta_tau == pytest.approx(-0.15)
    assert adj.s_gain == pytest.approx(1.5)


def test_hand_evaluated_prediction():
    features = np.array([0.4, 0.5, 0.3, 0.1, 0.2, 0.15, 0.8, 0.9, 0.7, 0.05, 0.1, 0.02])
    w1 = np.zeros((2, 12))
    w1[0, 0], w1[0, 3] = 1.0, -2.0
    w1[1, 6] = 0.5
    b1 = np.array([0.1, -0.2])
    w2 = np.array([[1.0, 0.0], [0.0, -1.0], [2.0, 3.0]])
    b2 = np.array([0.0, 0.1, -0.5])
    adj = predict_adjustment(StatVector.from_array(features), SgcaParams(w1, b1, w2, b2))

    h0 = max(0.0, 0.4 - 2.0 * 0.1 + 0.1)
    h1 = max(0.0, 0.5 * 0.8 - 0.2)
    assert adj.delta_t == pytest.approx(0.15 * math.tanh(h0), abs=1e-6)
    assert adj.delta_tau == pytest.approx(0.15 * math.tanh(-h1 + 0.1), abs=1e-6)
    assert adj.s_gain == pytest.approx(1.0 + 0.5 * math.tanh(2.0 * h0 + 3.0 * h1 - 0.5), abs=1e-6)


def test_stat_mask_hides_groups():
    features = StatVector.from_array(np.linspace(0.1, 0.9, 12))
    w1 = np.zeros((1, 12))
    w1[0, 3:6] = 5.0
    params = SgcaParams(w1, [0.0], [[1.0], [0.0], [0.0]], [0.0, 0.0, 0.0], stat_mask=(True, False, True, True))
    assert predict_adjustment(features, params).delta_t == 0.0
    with pytest.raises(ConfigurationError):
        SgcaParams(w1, [0.0], [[1.0], [0.0], [0.0]], [0.0, 0.0, 0.0], stat_mask=(True, False))


def test_bounds_hold_for_random_draws(rng):
    violations = 0
    for _ in range(10_000):
        stats = StatVector.from_array(rng.random(12))
        params = SgcaParams.random(rng, hidden=int(rng.integers(1, 32)), scale=float(rng.uniform(0.1, 20.0)))
        adj = predict_adjustment(stats, params)
        if not adj.within_bounds(0.15, 0.5):
            violations += 1
    assert violations == 0


def test_identity_adjustment(random_image):
    image = random_image(6, 6)
    np.testing.assert_allclose(apply_adjustment(image, ColorAdjustment()), image, atol=1e-6)


def test_gray_pixels_are_fixed_under_saturation():
    image = np.full((1, 3, 3, 3), 0.42, dtype=np.float32)
    for gain in (0.5, 0.8, 1.5):
        np.testing.assert_allclose(apply_adjustment(image, ColorAdjustment(s_gain=gain)), image, atol=1e-6)


def test_temperature_shift_hand_value():
    image = np.full((1, 3, 1, 1), 0.5, dtype=np.float32)
    out = apply_adjustment(image, ColorAdjustment(delta_t=0.1))
    np.testing.assert_allclose(out[0, :, 0, 0], [0.6, 0.5, 0.4], atol=1e-6)


def test_saturation_preserves_luminance(rng):
    image = rng.random((1, 3, 12, 12)).astype(np.float32)
    for gain in rng.uniform(0.5, 1.5, 10):
        out = apply_adjustment(image, ColorAdjustment(s_gain=float(gain)), clamp=False)
        np.testing.assert_allclose(luminance(out), luminance(image), atol=1e-5)


def test_sgca_forward_zero_mlp_is_identity(random_image):
    image = random_image(8, 8)
    np.testing.assert_allclose(sgca_forward(image, SgcaParams.zeros()), image, atol=1e-6)


def test_sgca_forward_matches_composed_oracle(rng):
    image = rng.random((1, 3, 5, 5)).astype(np.float32)
    params = SgcaParams.random(np.random.default_rng(3), hidden=2, scale=1.0)

    flat = image[0].reshape(3, 25).astype(np.float64)
    features = np.concatenate([flat.mean(axis=1), flat.std(axis=1), flat.max(axis=1), flat.min(axis=1)])
    hidden = np.maximum(params.w1.astype(np.float64) @ features + params.b1, 0.0)
    raw = params.w2.astype(np.float64) @ hidden + params.b2
    dt, dtau, gain = 0.15 * np.tanh(raw[0]), 0.15 * np.tanh(raw[1]), 1.0 + 0.5 * np.tanh(raw[2])

    r, g, b = flat[0] + dt, flat[1] - dtau, flat[2] - dt
    y = REC709[0] * r + REC709[1] * g + REC709[2] * b
    expected = np.clip(np.stack([y + gain * (c - y) for c in (r, g, b)]), 0.0, 1.0).reshape(1, 3, 5, 5)

    adjustments = []
    out = sgca_forward(image, params, adjustments)
    np.testing.assert_allclose(out, expected, atol=1e-5)
    assert len(adjustments) == 1 and adjustments[0].within_bounds()


def test_sgca_forward_handles_batches(random_image):
    batch = np.concatenate([random_image(5, 5), random_image(5, 5)])
    params = SgcaParams.random(np.random.default_rng(1), hidden=4)
    out = sgca_forward(batch, params)
    np.testing.assert_allclose(out[1:2], sgca_forward(batch[1:2], params), atol=1e-7)
