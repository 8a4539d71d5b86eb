import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from posebranch.pose import (
    LossWeights,
    PoseBinning,
    aaai_accuracy,
    abs_angular_error,
    argmax_pose,
    bin_of,
    circular_mean,
    expected_pose,
    joint_loss,
    threshold_accuracy,
)

B16 = PoseBinning(16)
angles = st.floats(min_value=-1e4, max_value=1e4, allow_nan=False)


def brute_geodesic(a, b):
    """Loop-based wrap of both angles into [0, 360) and fold past 180."""
    a, b = float(a), float(b)
    while a < 0:
        a += 360.0
    while a >= 360:
        a -= 360.0
    while b < 0:
        b += 360.0
    while b >= 360:
        b -= 360.0
    d = abs(a - b)
    return 360.0 - d if d > 180.0 else d


def brute_aaai_radians(a_deg, b_deg):
    ti, tj = math.radians(a_deg % 360.0), math.radians(b_deg % 360.0)
    d = abs(ti - tj)
    return 1.0 - min(d, 2 * math.pi - d) / math.pi


class TestBinOf:
    def test_examples(self):
        assert bin_of(0.0) == 0
        assert bin_of(22.5) == 1
        assert bin_of(359.9) == 15
        assert bin_of(-10.0) == 15 == bin_of(350.0)

    def test_tiny_negative_wraps_to_last_bin(self):
        assert bin_of(-1e-18) == 15

    @pytest.mark.parametrize("p", [4, 8, 16, 36])
    def test_bin_of_center_is_identity(self, p):
        b = PoseBinning(p)
        np.testing.assert_array_equal(bin_of(b.centers, b), np.arange(p))

    @given(angles)
    def test_every_angle_in_exactly_one_bin(self, a):
        i = bin_of(a)
        w = 22.5
        r = a % 360.0
        assert 0 <= i < 16
        assert i * w <= r < (i + 1) * w or (r >= 360.0 - 1e-9 and i == 15)


class TestPrediction:
    def test_argmax_examples(self):
        d = np.zeros(16)
        d[3] = 1
        assert argmax_pose(d) == 78.75
        assert argmax_pose(np.full(16, 1 / 16)) == 11.25
        p = np.zeros(16)
        p[:3] = [0.1, 0.6, 0.3]
        assert argmax_pose(p) == B16.center(1)

    def test_expected_examples(self):
        d = np.zeros(16)
        d[3] = 1
        assert expected_pose(d) == pytest.approx(78.75)
        assert expected_pose(np.full(16, 1 / 16)) == pytest.approx(180.0)
        d = np.zeros(16)
        d[0] = d[15] = 0.5
        assert expected_pose(d) == pytest.approx(180.0)

    def test_circular_variant_handles_the_seam(self):
        d = np.zeros(16)
        d[0] = d[15] = 0.5
        assert abs_angular_error(expected_pose(d, circular=True), 0.0) == pytest.approx(0.0, abs=1e-9)

    def test_wrong_length_rejected(self):
        with pytest.raises(ValueError):
            expected_pose(np.ones(8) / 8)

    def test_expected_matches_weighted_sum(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            d = rng.dirichlet(np.ones(16))
            ref = sum(d[i] * (i * 22.5 + 11.25) for i in range(16))
            assert abs(expected_pose(d) - ref) < 1e-12


class TestMetrics:
    def test_abs_error_examples(self):
        assert abs_angular_error(90, 90) == 0
        assert abs_angular_error(350, 10) == pytest.approx(20)
        assert abs_angular_error(0, 180) == 180

    def test_aaai_examples(self):
        assert aaai_accuracy(42.0, 42.0) == 1.0
        assert aaai_accuracy(0.0, 180.0) == 0.0
        assert aaai_accuracy(350.0, 10.0) == pytest.approx(1 - 20 / 180)
        assert aaai_accuracy(350.0, 10.0) == pytest.approx(0.8889, abs=1e-4)

    def test_threshold_examples(self):
        assert threshold_accuracy([10, 30, 50], 22.5) == pytest.approx(1 / 3)
        assert threshold_accuracy([10, 30, 50], 45) == pytest.approx(2 / 3)
        assert threshold_accuracy([22.5], 22.5) == 0.0
        with pytest.raises(ValueError):
            threshold_accuracy([], 10)
        with pytest.raises(ValueError):
            threshold_accuracy([1.0], 0)

    @given(angles, angles)
    def test_aaai_properties(self, a, b):
        v = aaai_accuracy(a, b)
        assert 0.0 <= v <= 1.0
        assert v == pytest.approx(aaai_accuracy(b, a), abs=1e-12)
        assert v == pytest.approx(aaai_accuracy(a + 360.0, b), abs=1e-9)
        assert v == pytest.approx(brute_aaai_radians(a, b), abs=1e-9)

    @given(st.integers(-5, 5), st.floats(0, 359.9))
    def test_aaai_one_iff_equal_mod_360(self, k, a):
        assert aaai_accuracy(a, a + 360.0 * k) == pytest.approx(1.0, abs=1e-12)
        assert aaai_accuracy(a, a + 1.0) < 1.0

    @given(st.lists(st.floats(0, 180), min_size=1, max_size=30), st.floats(0.1, 90), st.floats(0, 90))
    def test_threshold_monotone(self, errs, tau, extra):
        assert threshold_accuracy(errs, tau) <= threshold_accuracy(errs, tau + extra)

    def test_abs_error_brute_force(self):
        rng = np.random.default_rng(1)
        a, b = rng.uniform(-720, 720, 2000), rng.uniform(-720, 720, 2000)
        ref = np.array([brute_geodesic(x, y) for x, y in zip(a, b)])
        np.testing.assert_allclose(abs_angular_error(a, b), ref, atol=1e-9)


def test_circular_mean_examples():
    assert circular_mean([10, 20, 30]) == pytest.approx(20.0)
    assert abs_angular_error(circular_mean([350, 0, 10]), 0.0) == pytest.approx(0.0, abs=1e-9)


def test_joint_loss():
    assert joint_loss(0.3, 0.4) == pytest.approx(0.7)
    assert joint_loss(0.5, 1.0, LossWeights(2, 1)) == 2.0
    with pytest.raises(ValueError):
        joint_loss(float("nan"), 1.0)
    with pytest.raises(ValueError):
        LossWeights(-1, 1)
