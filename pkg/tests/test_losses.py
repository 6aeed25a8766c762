from decimal import Decimal, getcontext

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from damdnet import tensor as T
from damdnet.errors import DataError, DimensionError
from damdnet.losses import (
    CombinedLossConfig,
    WingConfig,
    WpdcWeights,
    combined,
    vertex_wing,
    wing,
    wpdc,
    wpdc_weights_from_std,
)
from damdnet.morphable import EulerPose, pose_encode


def _random_params(rng, f=1.5):
    pose = pose_encode(EulerPose(f, 0.15, -0.3, 0.2, rng.normal(0, 0.3, 3)))
    return np.concatenate([pose, rng.normal(0, 0.2, 50)])


class TestWpdc:
    def test_zero_at_equality(self, rng):
        p = _random_params(rng)
        assert wpdc(p, p, WpdcWeights.uniform()) == pytest.approx(0.0, abs=1e-12)

    def test_unit_weights_give_squared_distance(self, rng):
        a, b = _random_params(rng), _random_params(rng)
        expected = float(np.sum((a - b) ** 2))
        assert wpdc(b, a, WpdcWeights.uniform()) == pytest.approx(expected, rel=1e-9)

    def test_single_coordinate_perturbation_all_62(self, rng):
        base = _random_params(rng)
        w = rng.uniform(0.1, 2.0, 62)
        weights = WpdcWeights(w)
        delta = 0.37
        for k in range(62):
            p = base.copy()
            p[k] += delta
            assert wpdc(p, base, weights) == pytest.approx(w[k] * delta**2, rel=1e-9)

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            wpdc(np.zeros(61), np.zeros(62), WpdcWeights.uniform())

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31))
    def test_nonnegative_zero_iff_equal(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.normal(0, 1, 62)
        b = a + rng.normal(0, 1, 62)
        w = WpdcWeights(rng.uniform(0.01, 3.0, 62))
        v = wpdc(b, a, w)
        assert v >= 0.0
        if not np.array_equal(a, b):
            assert v > 0.0


class TestWing:
    def test_zero(self):
        assert wing(0.0) == 0.0

    def test_branches_agree_at_omega(self):
        getcontext().prec = 40
        ln6 = Decimal(6).ln()
        left = float(Decimal(10) * ln6)
        cfg = WingConfig(omega=10.0, epsilon=2.0)
        right = 10.0 - cfg.C
        assert abs(left - right) < 1e-9
        assert wing(10.0, cfg) == pytest.approx(left, abs=1e-9)
        assert cfg.C == pytest.approx(float(Decimal(10) - Decimal(10) * ln6), abs=1e-9)
        assert cfg.C == pytest.approx(-7.91759469228055, abs=1e-9)

    def test_reference_values(self):
        getcontext().prec = 40
        assert wing(5.0) == pytest.approx(float(Decimal(10) * Decimal("3.5").ln()), abs=1e-9)
        assert wing(5.0) == pytest.approx(12.527629684953681, abs=1e-9)
        assert wing(100.0) == pytest.approx(107.91759469228055, abs=1e-9)

    @settings(max_examples=60, deadline=None)
    @given(d=st.floats(-200, 200, allow_nan=False))
    def test_even_and_continuous_and_monotone(self, d):
        cfg = WingConfig()
        assert wing(d, cfg) == pytest.approx(wing(-d, cfg), abs=1e-12)
        assert wing(d, cfg) >= 0.0
        step = abs(d) * 1e-3 + 1e-6
        assert wing(abs(d) + step, cfg) >= wing(abs(d), cfg)
        # Bound: the log branch peaks at omega + |C|, the linear branch is
        # exactly |d| + |C|.
        assert wing(d, cfg) <= max(abs(d), cfg.omega) + abs(cfg.C) + 1e-12

    def test_continuity_at_kink(self):
        cfg = WingConfig()
        eps = 1e-9
        assert abs(wing(10.0 - eps, cfg) - wing(10.0 + eps, cfg)) < 1e-7


class TestVertexWing:
    def test_zero_at_equality(self, face_model, rng):
        p = _random_params(rng)
        assert vertex_wing(face_model, p, p) == pytest.approx(0.0, abs=1e-12)

    def test_translation_only_x_shift(self, face_model):
        # Identity pose, f = 1, translation differs by (delta, 0, 0): every
        # x coordinate moves by delta and the mean over the three coordinate
        # axes gives wing(delta) / 3.
        delta = 3.7
        pose = np.concatenate([np.eye(3).reshape(-1), np.zeros(3)])
        p_gt = np.concatenate([pose, np.zeros(50)])
        p = p_gt.copy()
        p[9] += delta
        expected = wing(delta) / 3.0
        assert vertex_wing(face_model, p, p_gt) == pytest.approx(expected, rel=1e-9)

    def test_gradient_vs_finite_differences(self, face_model, rng):
        from damdnet.gradcheck import finite_diff_check
        from damdnet.morphable import rotation_from_euler

        f_scale = 1.2
        r = rotation_from_euler(0.1, 0.3, -0.2)
        pose = pose_encode(EulerPose(f_scale, 0.1, 0.3, -0.2, [0.2, 0.1, -0.3]))
        p_gt = np.concatenate([pose, rng.normal(0, 0.15, 50)])
        p0 = p_gt.copy()
        p0[9:12] += r.T @ (np.array([3.0, 6.0, 14.0]) / f_scale)
        err = finite_diff_check(lambda t: vertex_wing(face_model, t, p_gt), T.Tensor(p0), h=1e-5)
        assert err < 1e-4

    def test_full_vertex_mode(self, face_model):
        # The translation-shift identity holds for the whole mesh too.
        delta = 3.7
        pose = np.concatenate([np.eye(3).reshape(-1), np.zeros(3)])
        p_gt = np.concatenate([pose, np.zeros(50)])
        p = p_gt.copy()
        p[9] += delta
        got = vertex_wing(face_model, p, p_gt, all_vertices=True)
        assert got == pytest.approx(wing(delta) / 3.0, rel=1e-9)
        # Landmark and full-vertex modes genuinely differ on shape changes.
        p2 = p_gt.copy()
        p2[12] += 1.0
        assert vertex_wing(face_model, p2, p_gt, all_vertices=True) != pytest.approx(
            vertex_wing(face_model, p2, p_gt), rel=1e-6
        )

    def test_invalid_gt_pose_propagates(self, face_model):
        bad = np.concatenate([(-np.eye(3)).reshape(-1), np.zeros(3), np.zeros(50)])
        good = np.concatenate([np.eye(3).reshape(-1), np.zeros(3), np.zeros(50)])
        from damdnet.errors import InvalidPoseError

        with pytest.raises(InvalidPoseError):
            vertex_wing(face_model, good, bad)


class TestCombined:
    def test_lambda1_only_equals_wpdc(self, face_model, rng):
        a, b = _random_params(rng), _random_params(rng)
        w = WpdcWeights.uniform()
        got = combined(b, a, face_model, CombinedLossConfig(1.0, 0.0), w)
        assert got == pytest.approx(wpdc(b, a, w), rel=1e-12)

    def test_lambda2_only_equals_vertex_wing(self, face_model, rng):
        a, b = _random_params(rng), _random_params(rng)
        got = combined(b, a, face_model, CombinedLossConfig(0.0, 1.0))
        assert got == pytest.approx(vertex_wing(face_model, b, a), rel=1e-12)

    def test_weighted_composition(self, face_model, rng):
        a, b = _random_params(rng), _random_params(rng)
        w = WpdcWeights.uniform()
        part_a = wpdc(b, a, w)
        part_b = vertex_wing(face_model, b, a)
        got = combined(b, a, face_model, CombinedLossConfig(0.5, 1.0), w)
        assert got == pytest.approx(0.5 * part_a + 1.0 * part_b, rel=1e-12)

    def test_both_zero_rejected(self):
        with pytest.raises(DataError):
            CombinedLossConfig(0.0, 0.0)


class TestWeightsFromStd:
    def test_all_unit_std(self):
        w = wpdc_weights_from_std(np.ones(62))
        np.testing.assert_array_equal(w.w, np.ones(62))

    def test_powers_of_two(self):
        std = np.concatenate([[1.0, 2.0, 4.0], np.full(59, 8.0)])
        w = wpdc_weights_from_std(std)
        np.testing.assert_allclose(w.w[:3], [1.0, 0.5, 0.25])
        np.testing.assert_allclose(w.w[3:], 0.125)

    def test_permutation_equivariance(self, rng):
        std = rng.uniform(0.1, 5.0, 62)
        perm = rng.permutation(62)
        w1 = wpdc_weights_from_std(std)
        w2 = wpdc_weights_from_std(std[perm])
        np.testing.assert_allclose(w2.w, w1.w[perm], rtol=1e-12)

    def test_nonpositive_rejected(self):
        bad = np.ones(62)
        bad[5] = 0.0
        with pytest.raises(DataError):
            wpdc_weights_from_std(bad)
