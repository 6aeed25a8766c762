import math

import numpy as np
import pytest

from damdnet.augment import (
    FaceCrop,
    bilinear_sample,
    crop_face,
    remap_params_to_crop,
    rotate_profile,
    sample_consistency_error,
    synthesize_virtual_sample,
)
from damdnet.errors import DataError
from damdnet.morphable import (
    EulerPose,
    ParamVector,
    pose_decode,
    pose_encode,
    reconstruct_vertices,
    rotation_from_euler,
)


class TestCropFace:
    def test_hand_computed_enlargement(self, rng):
        # bbox (10, 10, 40, 80): enlarged side max(50, 100) = 100, centered
        # at (30, 50) -> square corner (-20, 0).
        img = rng.uniform(0, 1, (160, 160, 3))
        crop = crop_face(img, (10, 10, 40, 80))
        assert crop.scale == pytest.approx(100 / 120)
        np.testing.assert_allclose(crop.offset, [-20.0, 0.0])
        assert crop.image.shape == (120, 120, 3)
        assert crop.image.min() >= -1.0 and crop.image.max() <= 1.0

    def test_affine_round_trips_landmarks(self, rng):
        img = rng.uniform(0, 1, (90, 140, 3))
        crop = crop_face(img, (20, 15, 60, 50))
        pts_src = rng.uniform(20, 70, (10, 2))
        back = crop.crop_to_source(crop.source_to_crop(pts_src))
        assert np.abs(back - pts_src).max() < 0.5  # well within half a pixel

    def test_centered_face_box_is_identity(self, rng):
        # A 120x120 frame whose detection box enlarges exactly to the full
        # frame: the crop is the identity resample.
        img = rng.uniform(0, 1, (120, 120, 3))
        crop = crop_face(img, (12, 12, 96, 96))
        assert crop.scale == pytest.approx(1.0)
        np.testing.assert_allclose(crop.offset, 0.0, atol=1e-12)
        np.testing.assert_allclose(crop.image, img * 2 - 1, atol=1e-3)
        again = crop_face((crop.image + 1) / 2, (12, 12, 96, 96))
        np.testing.assert_allclose(again.image, crop.image, atol=1e-3)

    def test_out_of_frame_pixels_black(self):
        img = np.ones((50, 50, 3))
        crop = crop_face(img, (0, 0, 50, 50))  # enlarged square pokes outside
        assert crop.image.min() == pytest.approx(-1.0)  # black -> -1 after scaling
        assert crop.image.max() == pytest.approx(1.0)

    def test_disjoint_bbox_rejected(self):
        img = np.zeros((50, 50, 3))
        with pytest.raises(DataError):
            crop_face(img, (500, 500, 20, 20))

    def test_degenerate_bbox_rejected(self):
        with pytest.raises(DataError):
            crop_face(np.zeros((10, 10, 3)), (1, 1, 0, 5))


class TestBilinear:
    def test_exact_at_pixel_centers(self, rng):
        img = rng.uniform(0, 1, (8, 9, 3))
        ys, xs = np.mgrid[0:8, 0:9]
        out = bilinear_sample(img, xs + 0.5, ys + 0.5)
        np.testing.assert_allclose(out, img, atol=1e-12)

    def test_midpoint_average(self):
        img = np.zeros((2, 2, 1))
        img[0, 0, 0], img[0, 1, 0], img[1, 0, 0], img[1, 1, 0] = 1, 3, 5, 7
        out = bilinear_sample(img, np.array([1.0]), np.array([1.0]))
        assert out[0, 0] == pytest.approx(4.0)


class TestParamRemap:
    def test_crop_remap_consistency(self, face_model, rng):
        pose = pose_encode(EulerPose(40.0, 0.1, 0.4, -0.2, [1.2, 1.1, 0.0]))
        p_src = np.concatenate([pose, rng.normal(0, 0.2, 50)])
        crop = FaceCrop(
            image=np.zeros((120, 120, 3)),
            bbox=np.array([10, 20, 50, 40]),
            scale=0.65,
            offset=np.array([3.0, -7.0]),
        )
        p_crop = remap_params_to_crop(p_src, crop)
        v_src = reconstruct_vertices(face_model, ParamVector(p_src)).reshape(-1, 3)
        v_crop = reconstruct_vertices(face_model, ParamVector(p_crop)).reshape(-1, 3)
        np.testing.assert_allclose(
            v_crop[:, :2], crop.source_to_crop(v_src[:, :2]), atol=1e-8
        )


class TestRotateProfile:
    def _sample(self, model, rng, yaw=0.2):
        s = synthesize_virtual_sample(model, 42)
        return s

    def test_zero_delta_unchanged(self, face_model):
        s = self._sample(face_model, None)
        s2 = rotate_profile(s, face_model, 0.0)
        np.testing.assert_array_equal(s2.p_gt, s.p_gt)
        np.testing.assert_array_equal(s2.landmarks, s.landmarks)

    def test_landmarks_match_independent_projection(self, face_model):
        s = self._sample(face_model, None)
        delta = 25.0
        s2 = rotate_profile(s, face_model, delta)
        # independent computation: V = M_new (S + t) with M_new = Ry(d) M
        m = s.p_gt[:9].reshape(3, 3)
        ry = rotation_from_euler(0.0, math.radians(delta), 0.0)
        from damdnet.morphable import synthesize_shape

        shape = synthesize_shape(face_model, s.p_gt[12:52], s.p_gt[52:62]).reshape(-1, 3)
        v = (shape + s.p_gt[9:12]) @ (ry @ m).T
        expected = v[face_model.landmark_indices, :2]
        np.testing.assert_allclose(s2.landmarks, expected, atol=1e-9)

    def test_rotations_compose(self, face_model):
        s = self._sample(face_model, None)
        a = rotate_profile(rotate_profile(s, face_model, 20.0), face_model, 15.0)
        b = rotate_profile(s, face_model, 35.0)
        np.testing.assert_allclose(a.landmarks, b.landmarks, atol=1e-9)
        np.testing.assert_allclose(a.p_gt, b.p_gt, atol=1e-9)

    def test_consistency_invariant_survives_rotation(self, face_model):
        s = self._sample(face_model, None)
        for delta in (10.0, 45.0, 90.0):
            s2 = rotate_profile(s, face_model, delta)
            assert sample_consistency_error(face_model, s2) < 1e-3

    def test_out_of_range_delta_rejected(self, face_model):
        s = self._sample(face_model, None)
        with pytest.raises(DataError):
            rotate_profile(s, face_model, 120.0)


class TestVirtualSamples:
    def test_same_seed_bit_identical(self, face_model):
        a = synthesize_virtual_sample(face_model, 9)
        b = synthesize_virtual_sample(face_model, 9)
        np.testing.assert_array_equal(a.p_gt, b.p_gt)
        np.testing.assert_array_equal(a.crop.image, b.crop.image)
        np.testing.assert_array_equal(a.landmarks, b.landmarks)

    def test_labels_consistent_by_construction(self, face_model):
        for seed in range(5):
            s = synthesize_virtual_sample(face_model, seed)
            assert sample_consistency_error(face_model, s) < 1e-3

    def test_yaw_matches_pose_decode(self, face_model):
        for seed in range(5):
            s = synthesize_virtual_sample(face_model, seed)
            decoded = pose_decode(s.p_gt[:12])
            assert math.degrees(decoded.yaw) == pytest.approx(s.yaw_deg, abs=1e-3)

    def test_face_fills_frame(self, face_model):
        s = synthesize_virtual_sample(face_model, 17)
        span = s.landmarks.max(axis=0) - s.landmarks.min(axis=0)
        assert span.max() <= 98.0  # inside the 96px box plus margin
        assert s.landmarks.min() >= 5.0
        assert s.landmarks.max() <= 115.0

    def test_image_matches_labels_visually(self, face_model):
        # Rendered pixels near visible landmarks should not be background.
        s = synthesize_virtual_sample(face_model, 23)
        img = (s.crop.image + 1.0) / 2.0
        hits = 0
        total = 0
        for (x, y), vis in zip(s.landmarks, s.visibility):
            if not vis:
                continue
            total += 1
            ix, iy = int(x), int(y)
            # silhouette landmarks may sit a pixel off the filled region
            patch = img[max(0, iy - 1) : iy + 2, max(0, ix - 1) : ix + 2]
            if patch.size and patch.mean(axis=2).max() > 0.1:
                hits += 1
        assert total > 10
        assert hits / total > 0.9
