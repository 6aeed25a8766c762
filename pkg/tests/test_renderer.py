import numpy as np

from damdnet.morphable import ParamVector
from damdnet.renderer import (
    Framebuffer,
    draw_triangles,
    overlay_landmarks,
    rasterize,
    vertex_visibility,
)


from oracles import coverage_oracle, fragment_oracle


def _draw(xy, z, tris, width=24, height=24, colors=None):
    fb = Framebuffer(width, height)
    n = xy.shape[0]
    vertices = np.concatenate([xy, z[:, None]], axis=1)
    vcol = colors if colors is not None else np.ones((n, 3)) * 0.5
    draw_triangles(fb, vertices, np.asarray(tris, dtype=np.int32), vcol)
    return fb


class TestCoverage:
    def test_axis_aligned_triangle_exact_coverage(self):
        xy = np.array([[2.0, 2.0], [10.0, 2.0], [2.0, 10.0]])
        z = np.zeros(3)
        fb = _draw(xy, z, [[0, 1, 2]], 16, 16)
        got = fb.depth > -np.inf
        want = coverage_oracle((xy[0], xy[1], xy[2]), 16, 16)
        np.testing.assert_array_equal(got, want)

    def test_random_triangles_match_oracle(self, rng):
        for _ in range(15):
            xy = rng.uniform(-3, 20, size=(3, 2))
            z = np.zeros(3)
            fb = _draw(xy, z, [[0, 1, 2]], 18, 18)
            got = fb.depth > -np.inf
            want = coverage_oracle((xy[0], xy[1], xy[2]), 18, 18)
            np.testing.assert_array_equal(got, want)

    def test_shared_edge_paints_once(self):
        # A split quad must partition its pixels between the two triangles.
        xy = np.array([[2.0, 2.0], [14.0, 2.0], [14.0, 14.0], [2.0, 14.0]])
        z = np.zeros(4)
        fb = _draw(xy, z, [[0, 1, 2], [0, 2, 3]], 20, 20)
        quad = coverage_oracle((xy[0], xy[1], xy[2]), 20, 20) | coverage_oracle(
            (xy[0], xy[2], xy[3]), 20, 20
        )
        covered = fb.depth > -np.inf
        np.testing.assert_array_equal(covered, quad)
        # no pixel was written twice: each covered pixel belongs to exactly
        # one triangle in the two single-triangle renders
        one = coverage_oracle((xy[0], xy[1], xy[2]), 20, 20)
        two = coverage_oracle((xy[0], xy[2], xy[3]), 20, 20)
        assert not (one & two).any()


class TestDepth:
    def test_front_triangle_wins(self):
        xy = np.array([[2.0, 2.0], [12.0, 2.0], [2.0, 12.0]])
        tris = [[0, 1, 2], [0, 1, 2]]
        z_back = np.zeros(3)
        fb = Framebuffer(16, 16)
        vertices_back = np.concatenate([xy, z_back[:, None]], axis=1)
        vertices_front = np.concatenate([xy, np.full((3, 1), 5.0)], axis=1)
        red = np.tile([1.0, 0, 0], (3, 1))
        blue = np.tile([0, 0, 1.0], (3, 1))
        draw_triangles(fb, vertices_back, np.array([[0, 1, 2]], dtype=np.int32), blue,
                       tri_ids=np.array([0]))
        draw_triangles(fb, vertices_front, np.array([[0, 1, 2]], dtype=np.int32), red,
                       tri_ids=np.array([1]))
        covered = fb.depth > -np.inf
        assert covered.any()
        np.testing.assert_allclose(fb.color[covered][:, 0], fb.color[covered][:, 0].max())
        assert fb.color[covered][:, 0].max() > 0.5  # red won everywhere

    def test_depth_equals_fragment_bruteforce_on_random_scenes(self, rng):
        for trial in range(6):
            n = 14
            xy = rng.uniform(-5, 40, size=(n, 2))
            z = rng.uniform(0, 10, size=n)
            tris = rng.integers(0, n, size=(10, 3))
            fb = _draw(xy, z, tris, 36, 36)
            want_depth, _ = fragment_oracle(xy, z, tris, 36, 36)
            np.testing.assert_allclose(fb.depth, want_depth, atol=1e-9)

    def test_depth_bruteforce_64x64(self, rng):
        n = 20
        xy = rng.uniform(-8, 70, size=(n, 2))
        z = rng.uniform(0, 10, size=n)
        tris = rng.integers(0, n, size=(16, 3))
        fb = _draw(xy, z, tris, 64, 64)
        want_depth, _ = fragment_oracle(xy, z, tris, 64, 64)
        np.testing.assert_allclose(fb.depth, want_depth, atol=1e-9)

    def test_triangle_order_independence(self, rng):
        n = 12
        xy = rng.uniform(0, 30, size=(n, 2))
        z = rng.uniform(0, 5, size=n)
        tris = rng.integers(0, n, size=(8, 3)).astype(np.int32)
        colors = rng.uniform(0, 1, size=(n, 3))
        perm = rng.permutation(8)

        fb1 = Framebuffer(32, 32)
        vertices = np.concatenate([xy, z[:, None]], axis=1)
        draw_triangles(fb1, vertices, tris, colors, tri_ids=np.arange(8))
        fb2 = Framebuffer(32, 32)
        draw_triangles(fb2, vertices, tris[perm], colors, tri_ids=np.arange(8)[perm])
        np.testing.assert_array_equal(fb1.depth, fb2.depth)
        np.testing.assert_array_equal(fb1.color, fb2.color)
        np.testing.assert_array_equal(fb1.tri_index, fb2.tri_index)

    def test_degenerate_triangles_counted_and_skipped(self):
        xy = np.array([[1.0, 1.0], [5.0, 5.0], [9.0, 9.0]])
        z = np.zeros(3)
        fb = _draw(xy, z, [[0, 1, 2]], 12, 12)
        assert fb.degenerate_count == 1
        assert not (fb.depth > -np.inf).any()


class TestModelRender:
    def test_yaw_flip_changes_depth_winners(self, face_model):
        base = np.concatenate([60.0 * np.eye(3).reshape(-1) / 1.0, np.array([1.0, 1.0, 0.0]),
                               np.zeros(50)])
        from damdnet.morphable import EulerPose, pose_encode
        import math

        # t is applied before rotation, so the flipped pose needs t rotated
        # back to keep the face in frame.
        front_pose = pose_encode(EulerPose(45.0, 0, 0, 0, np.array([1.3, 1.3, 0.0])))
        back_pose = pose_encode(EulerPose(45.0, 0, math.pi, 0, np.array([-1.3, 1.3, 0.0])))
        front = rasterize(face_model, ParamVector(np.concatenate([front_pose, np.zeros(50)])),
                          background=np.zeros(3))
        back = rasterize(face_model, ParamVector(np.concatenate([back_pose, np.zeros(50)])),
                         background=np.zeros(3))
        both = (front.depth > -np.inf) & (back.depth > -np.inf)
        assert both.sum() > 50
        assert not np.array_equal(front.tri_index[both], back.tri_index[both])

    def test_visibility_flips_with_yaw(self, face_model):
        import math
        from damdnet.morphable import EulerPose, pose_encode, reconstruct_vertices

        for yaw, expect_majority_visible in ((0.0, True), (math.pi, False)):
            pose = pose_encode(EulerPose(1.0, 0, yaw, 0, np.zeros(3)))
            p = ParamVector(np.concatenate([pose, np.zeros(50)]))
            v = reconstruct_vertices(face_model, p).reshape(-1, 3)
            vis = vertex_visibility(v, face_model.triangles, face_model.n_vertices)
            frac = vis.mean()
            assert (frac > 0.5) == expect_majority_visible


class TestOverlay:
    def test_center_landmark_colors_center_pixel(self):
        img = np.zeros((21, 21, 3))
        out = overlay_landmarks(img, np.array([[10.5, 10.5]]))
        assert out[10, 10, 1] > 0.5  # green disc
        assert img[10, 10, 1] == 0.0  # input untouched

    def test_out_of_frame_points_clip(self):
        img = np.zeros((10, 10, 3))
        pts = np.array([[-50.0, -50.0], [500.0, 3.0]])
        out = overlay_landmarks(img, pts)
        np.testing.assert_array_equal(out, img)

    def test_disc_matches_bruteforce_distance_test(self):
        img = np.zeros((15, 15, 3))
        center = (7.2, 6.8)
        radius = 2.0
        out = overlay_landmarks(img, np.array([center]), radius=radius)
        painted = out[:, :, 1] > 0.5
        for iy in range(15):
            for ix in range(15):
                d2 = (ix + 0.5 - center[0]) ** 2 + (iy + 0.5 - center[1]) ** 2
                assert painted[iy, ix] == (d2 <= radius**2)

    def test_hidden_points_get_distinct_color(self):
        img = np.zeros((9, 9, 3))
        out = overlay_landmarks(img, np.array([[4.5, 4.5]]), visibility=np.array([False]))
        assert out[4, 4, 0] > 0.5  # red-ish
