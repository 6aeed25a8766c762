import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from damdnet.errors import DataError, DimensionError, InvalidPoseError
from damdnet.morphable import (
    EulerPose,
    ParamVector,
    euler_from_rotation,
    generate_synthetic_model,
    load_model,
    pose_decode,
    pose_encode,
    project,
    reconstruct_vertices,
    rotation_from_euler,
    save_model,
    synthesize_shape,
)

angles = st.floats(-math.pi, math.pi, allow_nan=False)


class TestSynthesizeShape:
    def test_zero_coefficients_give_mean(self, face_model):
        s = synthesize_shape(face_model, np.zeros(40), np.zeros(10))
        np.testing.assert_array_equal(s, face_model.mean_shape)

    def test_one_hot_adds_single_column(self, face_model):
        for k in (0, 5, 39):
            alpha = np.zeros(40)
            alpha[k] = 1.0
            s = synthesize_shape(face_model, alpha, np.zeros(10))
            np.testing.assert_allclose(
                s, face_model.mean_shape + face_model.id_basis[:, k], atol=1e-12
            )

    def test_matches_naive_per_vertex_loop(self, face_model, rng):
        a_id = rng.normal(0, 0.3, 40)
        a_exp = rng.normal(0, 0.2, 10)
        got = synthesize_shape(face_model, a_id, a_exp)
        ref = face_model.mean_shape.copy()
        for row in range(ref.size):
            for k in range(40):
                ref[row] += face_model.id_basis[row, k] * a_id[k]
            for k in range(10):
                ref[row] += face_model.exp_basis[row, k] * a_exp[k]
        assert np.abs(got - ref).max() < 1e-5

    def test_length_mismatch(self, face_model):
        with pytest.raises(DimensionError):
            synthesize_shape(face_model, np.zeros(39), np.zeros(10))


class TestRotation:
    def test_zero_angles_identity(self):
        np.testing.assert_allclose(rotation_from_euler(0, 0, 0), np.eye(3), atol=1e-15)

    def test_yaw_quarter_turn_maps_x_to_minus_z(self):
        r = rotation_from_euler(0.0, math.pi / 2, 0.0)
        np.testing.assert_allclose(r @ np.array([1.0, 0, 0]), [0, 0, -1], atol=1e-12)

    def test_composition_order(self):
        # R must equal Rz(roll) @ Ry(yaw) @ Rx(pitch) composed by hand.
        p, y, r = 0.3, -0.7, 1.1
        rx = np.array([[1, 0, 0], [0, math.cos(p), -math.sin(p)], [0, math.sin(p), math.cos(p)]])
        ry = np.array([[math.cos(y), 0, math.sin(y)], [0, 1, 0], [-math.sin(y), 0, math.cos(y)]])
        rz = np.array([[math.cos(r), -math.sin(r), 0], [math.sin(r), math.cos(r), 0], [0, 0, 1]])
        np.testing.assert_allclose(rotation_from_euler(p, y, r), rz @ ry @ rx, atol=1e-14)

    @settings(max_examples=100, deadline=None)
    @given(pitch=angles, yaw=angles, roll=angles)
    def test_always_orthonormal_with_unit_det(self, pitch, yaw, roll):
        r = rotation_from_euler(pitch, yaw, roll)
        assert np.abs(r.T @ r - np.eye(3)).max() < 1e-6
        assert abs(np.linalg.det(r) - 1.0) < 1e-6


class TestProjection:
    def test_identity_pose_truncates(self, face_model):
        pose = EulerPose(1.0, 0, 0, 0, np.zeros(3))
        s2d = project(face_model.mean_shape, pose).reshape(-1, 2)
        pts = face_model.mean_shape.reshape(-1, 3)
        np.testing.assert_allclose(s2d, pts[:, :2], atol=1e-12)

    def test_scale_doubles_coordinates(self, face_model):
        pose = EulerPose(2.0, 0, 0, 0, np.zeros(3))
        s2d = project(face_model.mean_shape, pose).reshape(-1, 2)
        pts = face_model.mean_shape.reshape(-1, 3)
        np.testing.assert_allclose(s2d, 2.0 * pts[:, :2], atol=1e-12)

    def test_matches_per_vertex_oracle(self, face_model, rng):
        pose = EulerPose(1.7, 0.2, -0.5, 0.9, rng.normal(0, 0.5, 3))
        got = project(face_model.mean_shape, pose).reshape(-1, 2)
        r = rotation_from_euler(pose.pitch, pose.yaw, pose.roll)
        pts = face_model.mean_shape.reshape(-1, 3)
        for i in range(pts.shape[0]):
            v = pose.f * (r @ (pts[i] + pose.t3d))
            assert np.abs(got[i] - v[:2]).max() < 1e-5

    def test_roll_equivariance_with_zero_translation(self, face_model):
        # An extra roll rotates projected points in the plane (z-axis
        # rotation commutes with truncation).
        base = EulerPose(1.3, 0.2, -0.3, 0.4, np.zeros(3))
        delta = 0.6
        rolled = EulerPose(1.3, 0.2, -0.3, 0.4 + delta, np.zeros(3))
        a = project(face_model.mean_shape, base).reshape(-1, 2)
        b = project(face_model.mean_shape, rolled).reshape(-1, 2)
        c, s = math.cos(delta), math.sin(delta)
        rot2d = np.array([[c, -s], [s, c]])
        np.testing.assert_allclose(b, a @ rot2d.T, atol=1e-9)

    def test_non_finite_shape_rejected(self):
        pose = EulerPose(1.0, 0, 0, 0, np.zeros(3))
        bad = np.array([1.0, np.nan, 0.0])
        with pytest.raises(DimensionError):
            project(bad, pose)


class TestPoseCodec:
    def test_trivial_pose(self):
        pose12 = pose_encode(EulerPose(1.0, 0, 0, 0, np.zeros(3)))
        np.testing.assert_allclose(pose12[:9].reshape(3, 3), np.eye(3), atol=1e-15)
        decoded = pose_decode(pose12)
        assert decoded.f == pytest.approx(1.0)
        np.testing.assert_allclose(decoded.t3d, 0.0)

    def test_double_identity(self):
        pose12 = np.concatenate([(2.0 * np.eye(3)).reshape(-1), np.zeros(3)])
        decoded = pose_decode(pose12)
        assert decoded.f == pytest.approx(2.0)
        np.testing.assert_allclose(
            rotation_from_euler(decoded.pitch, decoded.yaw, decoded.roll),
            np.eye(3),
            atol=1e-12,
        )

    def test_nonpositive_determinant_rejected(self):
        m = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(InvalidPoseError):
            pose_decode(np.concatenate([m.reshape(-1), np.zeros(3)]))

    @settings(max_examples=100, deadline=None)
    @given(
        f=st.floats(0.1, 10.0),
        pitch=st.floats(-1.2, 1.2),
        yaw=st.floats(-1.45, 1.45),
        roll=st.floats(-3.0, 3.0),
        t=st.tuples(*[st.floats(-5, 5)] * 3),
    )
    def test_round_trip(self, f, pitch, yaw, roll, t):
        pose = EulerPose(f, pitch, yaw, roll, np.array(t))
        decoded = pose_decode(pose_encode(pose))
        assert decoded.f == pytest.approx(f, rel=1e-6)
        assert decoded.pitch == pytest.approx(pitch, abs=1e-6)
        assert decoded.yaw == pytest.approx(yaw, abs=1e-6)
        assert decoded.roll == pytest.approx(roll, abs=1e-6)
        np.testing.assert_allclose(decoded.t3d, t, atol=1e-6)
        re_encoded = pose_encode(decoded)
        np.testing.assert_allclose(re_encoded, pose_encode(pose), atol=1e-5)

    def test_gimbal_lock_pins_roll(self):
        r = rotation_from_euler(0.4, math.pi / 2, 0.3)
        pitch, yaw, roll = euler_from_rotation(r)
        assert roll == 0.0
        np.testing.assert_allclose(
            rotation_from_euler(pitch, yaw, roll), r, atol=1e-9
        )


class TestReconstruct:
    def test_zero_coeffs_identity_pose(self, face_model):
        p = ParamVector.pack(
            np.concatenate([np.eye(3).reshape(-1), np.zeros(3)]), np.zeros(40), np.zeros(10)
        )
        v = reconstruct_vertices(face_model, p)
        np.testing.assert_allclose(v, face_model.mean_shape, atol=1e-12)

    def test_projection_consistency(self, face_model, rng):
        pose = EulerPose(1.4, 0.3, 0.5, -0.2, rng.normal(0, 0.3, 3))
        p = ParamVector.pack(pose_encode(pose), rng.normal(0, 0.2, 40), rng.normal(0, 0.1, 10))
        v3 = reconstruct_vertices(face_model, p).reshape(-1, 3)
        shape = synthesize_shape(face_model, p.alpha_id, p.alpha_exp)
        s2d = project(shape, pose).reshape(-1, 2)
        np.testing.assert_allclose(v3[:, :2], s2d, atol=1e-9)

    def test_matches_naive_loop(self, face_model, rng):
        pose12 = pose_encode(EulerPose(0.8, -0.2, 0.7, 0.1, rng.normal(0, 1, 3)))
        p = ParamVector.pack(pose12, rng.normal(0, 0.2, 40), rng.normal(0, 0.1, 10))
        got = reconstruct_vertices(face_model, p).reshape(-1, 3)
        m = pose12[:9].reshape(3, 3)
        t = pose12[9:]
        shape = synthesize_shape(face_model, p.alpha_id, p.alpha_exp).reshape(-1, 3)
        for i in range(shape.shape[0]):
            np.testing.assert_allclose(got[i], m @ (shape[i] + t), atol=1e-5)


class TestSyntheticModel:
    def test_same_seed_bit_identical(self):
        a = generate_synthetic_model(11, 120)
        b = generate_synthetic_model(11, 120)
        np.testing.assert_array_equal(a.mean_shape, b.mean_shape)
        np.testing.assert_array_equal(a.id_basis, b.id_basis)
        np.testing.assert_array_equal(a.triangles, b.triangles)
        np.testing.assert_array_equal(a.landmark_indices, b.landmark_indices)

    def test_basis_columns_orthonormal(self, face_model):
        basis = np.concatenate([face_model.id_basis, face_model.exp_basis], axis=1)
        gram = basis.T @ basis
        assert np.abs(gram - np.eye(50)).max() < 1e-5

    def test_invariants(self, face_model):
        assert face_model.n_vertices >= 68
        assert face_model.landmark_indices.max() < face_model.n_vertices
        assert face_model.triangles.max() < face_model.n_vertices
        assert (face_model.param_std > 0).all()
        assert len(set(face_model.landmark_indices.tolist())) == 68
        assert np.isfinite(face_model.mean_shape).all()
        assert np.abs(face_model.mean_shape).max() <= 1.0 + 1e-12
        # spreads decay with component index
        assert (np.diff(face_model.param_std) < 0).all()

    def test_too_few_vertices_rejected(self):
        with pytest.raises(DataError):
            generate_synthetic_model(0, 67)

    def test_file_round_trip(self, face_model, tmp_path):
        path = tmp_path / "model.damd3dmm"
        save_model(face_model, path)
        loaded = load_model(path)
        assert loaded.n_vertices == face_model.n_vertices
        np.testing.assert_allclose(loaded.mean_shape, face_model.mean_shape, atol=1e-6)
        np.testing.assert_allclose(loaded.id_basis, face_model.id_basis, atol=1e-6)
        np.testing.assert_allclose(loaded.exp_basis, face_model.exp_basis, atol=1e-6)
        np.testing.assert_array_equal(loaded.triangles, face_model.triangles)
        np.testing.assert_array_equal(loaded.landmark_indices, face_model.landmark_indices)
        # Saving the loaded model reproduces the file byte for byte.
        path2 = tmp_path / "model2.damd3dmm"
        save_model(loaded, path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOTAMODEL" + b"\x00" * 100)
        with pytest.raises(DataError, match="not a DAMD3DMM"):
            load_model(path)
