"""Training objectives: weighted parameter distance, wing loss on vertices,
and their weighted combination.

All losses accept either plain arrays (returning floats) or engine Tensors
(returning scalar Tensors differentiable w.r.t. the prediction).  Batched
inputs of shape [B, 62] are averaged over the batch.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import DataError, DimensionError
from .morphable import (
    EXP_DIM,
    ID_DIM,
    PARAM_DIM,
    POSE_DIM,
    MorphableModel,
    ParamVector,
    reconstruct_vertices,
)


@dataclass
class WingConfig:
    """Wing loss parameters; C is derived so the two branches join at omega."""

    omega: float = 10.0
    epsilon: float = 2.0
    C: float = field(init=False)

    def __post_init__(self):
        if self.omega <= 0 or self.epsilon <= 0:
            raise DataError("wing parameters must be positive")
        self.C = self.omega - self.omega * math.log(1.0 + self.omega / self.epsilon)


@dataclass
class WpdcWeights:
    """Diagonal of the 62x62 weighting matrix."""

    w: np.ndarray

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64).reshape(-1)
        if self.w.size != PARAM_DIM:
            raise DimensionError(f"need {PARAM_DIM} weights, got {self.w.size}")
        if not np.isfinite(self.w).all() or not (self.w > 0).all():
            raise DataError("weights must be positive and finite")

    @classmethod
    def uniform(cls):
        return cls(np.ones(PARAM_DIM))


@dataclass
class CombinedLossConfig:
    lambda1: float = 0.5
    lambda2: float = 1.0

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise DataError("loss weights must be nonnegative")
        if self.lambda1 == 0 and self.lambda2 == 0:
            raise DataError("loss weights cannot both be zero")


def wpdc_weights_from_std(param_std) -> WpdcWeights:
    """Inverse standard deviations, rescaled so the largest weight is 1."""
    std = np.asarray(param_std, dtype=np.float64).reshape(-1)
    if std.size != PARAM_DIM:
        raise DimensionError(f"need {PARAM_DIM} standard deviations, got {std.size}")
    if not (std > 0).all():
        raise DataError("standard deviations must be strictly positive")
    w = 1.0 / std
    return WpdcWeights(w / w.max())


def wing(delta, config: WingConfig | None = None):
    """Pointwise wing value: omega*ln(1+|d|/eps) below omega, |d|-C above."""
    cfg = config or WingConfig()
    d = np.abs(np.asarray(delta, dtype=np.float64))
    out = np.where(
        d < cfg.omega,
        cfg.omega * np.log1p(d / cfg.epsilon),
        d - cfg.C,
    )
    return float(out) if out.ndim == 0 else out


# -- tensor-graph internals ----------------------------------------------------


def _as_batch(p, dtype):
    """Normalize a parameter argument to a [B, 62] Tensor."""
    if isinstance(p, ParamVector):
        p = p.values
    if isinstance(p, T.Tensor):
        t = p
    else:
        t = T.Tensor(np.asarray(p, dtype=dtype))
    if t.data.ndim == 1:
        if t.data.size != PARAM_DIM:
            raise DimensionError(
                f"parameter vector must have {PARAM_DIM} entries, got {t.data.size}"
            )
        t = T.reshape(t, (1, PARAM_DIM))
    if t.data.ndim != 2 or t.shape[1] != PARAM_DIM:
        raise DimensionError(
            f"parameter batch must be [B, {PARAM_DIM}], got {tuple(t.shape)}"
        )
    return t


def _loss_dtype(*args):
    for a in args:
        if isinstance(a, T.Tensor):
            return a.dtype
    return np.float64


def _returns_tensor(*args):
    return any(isinstance(a, T.Tensor) for a in args)


def _finish(loss, as_tensor):
    return loss if as_tensor else loss.item()


def wpdc(p_pred, p_gt, weights: WpdcWeights):
    """Sum_k w_k (p_gt_k - p_pred_k)^2, averaged over the batch."""
    as_tensor = _returns_tensor(p_pred)
    dtype = _loss_dtype(p_pred, p_gt)
    pred = _as_batch(p_pred, dtype)
    gt = _as_batch(p_gt, dtype)
    if pred.shape != gt.shape:
        raise DimensionError(
            f"prediction batch {tuple(pred.shape)} != ground truth {tuple(gt.shape)}"
        )
    wrow = T.Tensor(weights.w.astype(dtype).reshape(1, PARAM_DIM))
    diff = T.sub(gt, pred)
    per_sample = T.sum_(T.mul(T.mul(diff, diff), wrow), axis=1)
    return _finish(T.mean(per_sample), as_tensor)


def _landmark_constants(model: MorphableModel, dtype, all_vertices=False):
    if all_vertices:
        mean_lm = model.mean_shape.astype(dtype)
        basis = np.concatenate([model.id_basis, model.exp_basis], axis=1)
    else:
        rows = model.landmark_rows()
        mean_lm = model.mean_shape[rows].astype(dtype)
        basis = np.concatenate([model.id_basis, model.exp_basis], axis=1)[rows]
    return mean_lm, basis.astype(dtype)


def reconstruct_landmarks_graph(model: MorphableModel, p, all_vertices=False):
    """Differentiable V(P); returns [B, K, 3] over the 68 landmark vertices
    (or every vertex when `all_vertices`)."""
    dtype = _loss_dtype(p)
    pred = _as_batch(p, dtype)
    b = pred.shape[0]
    mean_lm, basis = _landmark_constants(model, dtype, all_vertices)

    sel = np.zeros((PARAM_DIM, POSE_DIM), dtype=dtype)
    sel[np.arange(POSE_DIM), np.arange(POSE_DIM)] = 1
    pose = T.matmul(pred, T.Tensor(sel))  # [B, 12]
    m9 = T.matmul(pose, T.Tensor(np.eye(POSE_DIM, 9, dtype=dtype)))
    tvec = T.matmul(pose, T.Tensor(np.eye(POSE_DIM, dtype=dtype)[:, 9:12]))

    sel_a = np.zeros((PARAM_DIM, ID_DIM + EXP_DIM), dtype=dtype)
    sel_a[POSE_DIM:, :] = np.eye(ID_DIM + EXP_DIM, dtype=dtype)
    alpha = T.matmul(pred, T.Tensor(sel_a))  # [B, 50]

    n_pts = mean_lm.size // 3
    shape = T.add(T.matmul(alpha, T.Tensor(basis.T)), T.Tensor(mean_lm.reshape(1, -1)))
    pts = T.reshape(shape, (b, n_pts, 3))
    shifted = T.add(pts, T.reshape(tvec, (b, 1, 3)))  # S + t

    m_e = T.reshape(m9, (b, 1, 3, 3))
    s_e = T.reshape(shifted, (b, n_pts, 1, 3))
    return T.sum_(T.mul(m_e, s_e), axis=3)  # [B, n_pts, 3]


def vertex_wing(model: MorphableModel, p_pred, p_gt, config: WingConfig | None = None,
                all_vertices=False):
    """Wing loss over vertex coordinate errors, mean-reduced.

    By default only the 68 landmark vertices contribute (the alignment
    target); `all_vertices=True` spreads the loss over the whole mesh.  The
    reduction averages over the coordinates of each sample (and the batch);
    the loss is differentiable through the vertex reconstruction.
    """
    cfg = config or WingConfig()
    as_tensor = _returns_tensor(p_pred)
    dtype = _loss_dtype(p_pred, p_gt)
    pred = _as_batch(p_pred, dtype)
    gt = _as_batch(p_gt, dtype)
    if pred.shape != gt.shape:
        raise DimensionError(
            f"prediction batch {tuple(pred.shape)} != ground truth {tuple(gt.shape)}"
        )

    v_pred = reconstruct_landmarks_graph(model, pred, all_vertices)
    v_gt = np.stack(
        [
            reconstruct_vertices(
                model, ParamVector(row), landmarks_only=not all_vertices
            ).reshape(-1, 3)
            for row in gt.data
        ]
    ).astype(dtype)

    delta = T.sub(T.Tensor(v_gt), v_pred)
    mag = T.absolute(delta)
    small = T.Tensor((mag.data < cfg.omega).astype(dtype))
    log_branch = T.mul(T.log(T.add(T.mul(mag, 1.0 / cfg.epsilon), 1.0)), cfg.omega)
    lin_branch = T.sub(mag, cfg.C)
    per_coord = T.add(T.mul(small, log_branch), T.mul(T.sub(1.0, small), lin_branch))
    return _finish(T.mean(per_coord), as_tensor)


def combined(
    p_pred,
    p_gt,
    model: MorphableModel,
    cfg: CombinedLossConfig | None = None,
    weights: WpdcWeights | None = None,
    wing_cfg: WingConfig | None = None,
):
    """lambda1 * wpdc + lambda2 * vertex_wing."""
    cfg = cfg or CombinedLossConfig()
    weights = weights or WpdcWeights.uniform()
    as_tensor = _returns_tensor(p_pred)
    total = None
    if cfg.lambda1 != 0.0:
        a = wpdc(p_pred, p_gt, weights)
        a = a if isinstance(a, T.Tensor) else T.Tensor(np.float64(a))
        total = T.mul(a, cfg.lambda1)
    if cfg.lambda2 != 0.0:
        b = vertex_wing(model, p_pred, p_gt, wing_cfg)
        b = b if isinstance(b, T.Tensor) else T.Tensor(np.float64(b))
        b = T.mul(b, cfg.lambda2)
        total = b if total is None else T.add(total, b)
    return _finish(total, as_tensor)
