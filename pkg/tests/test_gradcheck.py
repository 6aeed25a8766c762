import math

import numpy as np

from damdnet import tensor as T
from damdnet.gradcheck import finite_diff_check
from damdnet.losses import WingConfig, vertex_wing


def test_linear_function_error_near_zero(rng):
    x = T.Tensor(rng.standard_normal(8))
    err = finite_diff_check(lambda t: T.sum_(t), x, h=1e-4)
    assert err < 1e-10


def test_wing_away_from_kinks(rng, face_model):
    cfg = WingConfig()
    # Loss through a tensor graph built directly on the checked tensor.
    delta0 = rng.uniform(2.0, 8.0, size=11)

    def f(t):
        mag = T.absolute(t)
        small = T.Tensor((mag.data < cfg.omega).astype(np.float64))
        log_branch = T.mul(T.log(T.add(T.mul(mag, 1.0 / cfg.epsilon), 1.0)), cfg.omega)
        lin_branch = T.sub(mag, cfg.C)
        return T.mean(T.add(T.mul(small, log_branch),
                            T.mul(T.sub(1.0, small), lin_branch)))

    err = finite_diff_check(f, T.Tensor(delta0), h=1e-5)
    assert err < 1e-6


def test_vertex_wing_gradient(rng, face_model):
    from damdnet.morphable import EulerPose, pose_encode, rotation_from_euler

    f_scale = 1.5
    r = rotation_from_euler(0.2, -0.4, 0.1)
    pose = pose_encode(EulerPose(f_scale, 0.2, -0.4, 0.1, [0.1, -0.2, 0.3]))
    p_gt = np.concatenate([pose, rng.normal(0, 0.2, 50)])
    # Shift only the translation so every coordinate error is exactly 2, 5 or
    # 12 model units: far from both wing kinks (0 and omega), so central
    # differences are valid everywhere.
    p0 = p_gt.copy()
    p0[9:12] += r.T @ (np.array([2.0, 5.0, 12.0]) / f_scale)

    def f(t):
        return vertex_wing(face_model, t, p_gt)

    err = finite_diff_check(f, T.Tensor(p0), h=1e-5)
    assert err < 1e-4


def test_non_finite_reports_failure_not_crash():
    x = T.Tensor(np.array([2.0]))

    def f(t):
        return T.log(T.sub(t, 10.0))  # log of a negative number -> nan

    with np.errstate(invalid="ignore"):
        err = finite_diff_check(f, x, h=1e-4)
    assert math.isinf(err)


def test_coordinate_sampling_is_deterministic(rng):
    x = T.Tensor(rng.standard_normal(50))

    def f(t):
        return T.sum_(T.mul(t, t))

    a = finite_diff_check(f, T.Tensor(x.data.copy()), h=1e-5, max_coords=10, seed=3)
    b = finite_diff_check(f, T.Tensor(x.data.copy()), h=1e-5, max_coords=10, seed=3)
    assert a == b
