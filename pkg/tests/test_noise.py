import numpy as np
import pytest

from helpers import piecewise_smooth
from twsc.noise import (
    ChannelSigmas,
    add_awgn,
    add_heterogeneous_noise,
    estimate_channel_sigma,
    estimate_sigmas,
    gradient_std_map,
)


def test_constant_plane_estimates_zero():
    assert estimate_channel_sigma(np.full((10, 12), 80.0)) == 0.0


def test_estimator_on_pure_noise():
    plane = add_awgn(np.zeros((256, 256)), 25.0, seed=3)
    assert 22.5 <= estimate_channel_sigma(plane) <= 27.5


def test_estimator_on_gradient():
    yy, xx = np.mgrid[0:256, 0:256]
    plane = add_awgn(0.5 * xx + 0.3 * yy, 10.0, seed=4)
    assert 8.5 <= estimate_channel_sigma(plane) <= 11.5


@pytest.mark.parametrize("sigma", [5, 15, 25, 50, 75])
def test_estimator_consistency(sigma):
    clean = piecewise_smooth(256, 256)
    est = estimate_channel_sigma(add_awgn(clean, sigma, seed=sigma))
    assert abs(est - sigma) <= 0.1 * sigma


def test_estimator_rejects_small():
    with pytest.raises(ValueError):
        estimate_channel_sigma(np.zeros((2, 5)))


def test_estimate_sigmas_per_channel():
    img = np.zeros((64, 64, 3))
    noisy = add_heterogeneous_noise(img, (5.0, 10.0, 20.0), np.ones((64, 64)), seed=1)
    s = estimate_sigmas(noisy)
    assert s.source == "estimated" and len(s) == 3
    np.testing.assert_allclose(s.values, (5, 10, 20), rtol=0.1)


def test_awgn():
    img = np.random.default_rng(0).uniform(0, 255, (256, 256))
    np.testing.assert_array_equal(add_awgn(img, 0.0, seed=1), img)
    noisy = add_awgn(img, 25.0, seed=2)
    assert 24.5 <= np.std(noisy - img) <= 25.5
    np.testing.assert_array_equal(noisy, add_awgn(img, 25.0, seed=2))
    assert noisy.min() < 0 or noisy.max() > 255  # not clamped
    with pytest.raises(ValueError):
        add_awgn(img, -1.0, seed=0)


def test_heterogeneous_uniform_map_matches_awgn():
    img = np.zeros((256, 256))
    a = add_heterogeneous_noise(img, (12.0,), np.ones((256, 256)), seed=7)
    assert np.std(a) == pytest.approx(12.0, rel=0.02)
    np.testing.assert_array_equal(add_heterogeneous_noise(img, (12.0,), np.zeros((256, 256)), seed=7), img)


def test_heterogeneous_channel_stds():
    img = np.zeros((256, 256, 3))
    n = add_heterogeneous_noise(img, ChannelSigmas((5.8, 4.4, 5.5)), np.ones((256, 256)), seed=9)
    np.testing.assert_allclose(n.std(axis=(0, 1)), (5.8, 4.4, 5.5), rtol=0.03)
    np.testing.assert_array_equal(
        n, add_heterogeneous_noise(img, (5.8, 4.4, 5.5), np.ones((256, 256)), seed=9)
    )


def test_heterogeneous_validation():
    with pytest.raises(ValueError):
        add_heterogeneous_noise(np.zeros((4, 4)), (1.0,), np.ones((3, 4)), seed=0)
    with pytest.raises(ValueError):
        add_heterogeneous_noise(np.zeros((4, 4)), (1.0,), -np.ones((4, 4)), seed=0)


def test_gradient_map():
    m = gradient_std_map((10, 21), 2.0)
    assert np.sqrt(np.mean(m**2)) == pytest.approx(1.0)
    assert m[0, -1] / m[0, 0] == pytest.approx(2.0)
    np.testing.assert_array_equal(m[0], m[9])


def test_channel_sigmas():
    s = ChannelSigmas((1.0, 2.0, 2.0))
    assert s.pooled == pytest.approx(np.sqrt(3.0))
    assert s.source == "user_supplied"
    for bad in ((1.0, 2.0), (-1.0,), (float("nan"),)):
        with pytest.raises(ValueError):
            ChannelSigmas(bad)
