"""Input preprocessing and pose augmentation.

Coordinate conventions: a WxH image spans [0, W] x [0, H] in continuous
coordinates, pixel (i, j) covering [i, i+1) x [j, j+1) with its center at
(i + 0.5, j + 0.5).  y grows downward.  Crops record the affine map from
crop coordinates back to source coordinates (src = crop * scale + offset).

Desk-scale profile rotation transforms labels exactly (the 3-d ground truth
is known) and leaves pixels untouched; virtual samples get consistent pixels
from the z-buffer renderer.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError
from .morphable import (
    MorphableModel,
    ParamVector,
    pose_decode,
    pose_matrix,
    reconstruct_vertices,
    rotation_from_euler,
    synthesize_shape,
)
from .renderer import rasterize, vertex_visibility

CROP_SIZE = 120
ENLARGE = 1.25
FILL_FRACTION = 0.8


@dataclass
class FaceCrop:
    """120x120 crop in [-1, 1] plus the affine map back to the source."""

    image: np.ndarray  # (120, 120, 3) in [-1, 1]
    bbox: np.ndarray  # (4,) source-space x, y, w, h as given
    scale: float  # src units per crop unit
    offset: np.ndarray  # (2,) source coords of the crop origin

    def crop_to_source(self, pts):
        return np.asarray(pts, dtype=np.float64) * self.scale + self.offset

    def source_to_crop(self, pts):
        return (np.asarray(pts, dtype=np.float64) - self.offset) / self.scale


@dataclass
class TrainingSample:
    """One training unit: crop image plus labels in crop coordinates."""

    crop: FaceCrop
    p_gt: np.ndarray  # (62,)
    landmarks: np.ndarray  # (68, 2)
    visibility: np.ndarray  # (68,) bool
    yaw_deg: float


def bilinear_sample(image, xs, ys):
    """Sample pixel-center-interpolated values at continuous points; points
    outside the image read as black."""
    h, w = image.shape[:2]
    fx = np.asarray(xs, dtype=np.float64) - 0.5
    fy = np.asarray(ys, dtype=np.float64) - 0.5
    x0 = np.floor(fx).astype(np.int64)
    y0 = np.floor(fy).astype(np.int64)
    tx = (fx - x0)[..., None]
    ty = (fy - y0)[..., None]

    def tap(xi, yi):
        valid = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
        out = np.zeros(xi.shape + (image.shape[2],))
        out[valid] = image[yi[valid], xi[valid]]
        return out

    top = tap(x0, y0) * (1 - tx) + tap(x0 + 1, y0) * tx
    bot = tap(x0, y0 + 1) * (1 - tx) + tap(x0 + 1, y0 + 1) * tx
    return top * (1 - ty) + bot * ty


def crop_face(image, bbox):
    """Enlarge `bbox` by 25% about its center, crop the bounding square,
    resample to 120x120 and rescale pixels to [-1, 1]."""
    x, y, w, h = (float(v) for v in bbox)
    if w <= 0 or h <= 0:
        raise DataError(f"bbox must have positive size, got {bbox}")
    ih, iw = image.shape[:2]
    cx, cy = x + w / 2.0, y + h / 2.0
    side = max(w * ENLARGE, h * ENLARGE)
    x0, y0 = cx - side / 2.0, cy - side / 2.0
    if x0 + side <= 0 or y0 + side <= 0 or x0 >= iw or y0 >= ih:
        raise DataError(f"bbox {bbox} does not intersect a {iw}x{ih} image")
    scale = side / CROP_SIZE
    grid = (np.arange(CROP_SIZE) + 0.5) * scale
    xs = np.broadcast_to(grid[None, :] + x0, (CROP_SIZE, CROP_SIZE))
    ys = np.broadcast_to(grid[:, None] + y0, (CROP_SIZE, CROP_SIZE))
    resampled = bilinear_sample(image, xs, ys)
    return FaceCrop(
        image=resampled * 2.0 - 1.0,
        bbox=np.asarray(bbox, dtype=np.float64),
        scale=scale,
        offset=np.array([x0, y0]),
    )


def remap_params_to_crop(params, crop: FaceCrop):
    """Re-express a 62-dim parameter vector in crop coordinates.

    With V_crop = (V_src - X0) / s the pose block maps as M' = M / s and
    t' = t - M^-1 X0 (X0 = crop origin at depth 0); shape coefficients are
    unchanged.
    """
    params = np.asarray(params, dtype=np.float64)
    m, t = pose_matrix(params[:12])
    x0 = np.array([crop.offset[0], crop.offset[1], 0.0])
    m_new = m / crop.scale
    t_new = t - np.linalg.solve(m, x0)
    out = params.copy()
    out[:9] = m_new.reshape(-1)
    out[9:12] = t_new
    return out


def sample_from_record(image, record):
    """Build a TrainingSample from a source image plus dataset record."""
    crop = crop_face(image, record.bbox)
    lm = crop.source_to_crop(record.landmarks)
    if record.params is None:
        raise DataError(f"record {record.image_path} has no parameters")
    p = remap_params_to_crop(record.params, crop)
    return TrainingSample(
        crop=crop,
        p_gt=p,
        landmarks=lm,
        visibility=np.asarray(record.visibility, dtype=bool),
        yaw_deg=float(record.yaw_deg),
    )


def sample_consistency_error(model: MorphableModel, sample: TrainingSample):
    """Max pixel distance between stored landmarks and the projection of the
    stored parameters (must stay below 1e-3 for any emitted sample)."""
    v = reconstruct_vertices(model, ParamVector(sample.p_gt), landmarks_only=True)
    proj = v.reshape(-1, 3)[:, :2]
    return float(np.max(np.linalg.norm(proj - sample.landmarks, axis=1)))


def rotate_labels(model: MorphableModel, params, delta_deg):
    """Core of the profile rotation: compose an extra camera-frame yaw onto
    the pose block and recompute landmarks, visibility and yaw exactly.

    Returns (params, landmarks (68, 2), landmark visibility, yaw_deg).
    """
    if not 0.0 <= delta_deg <= 90.0:
        raise DataError(f"profile rotation must be in [0, 90] degrees, got {delta_deg}")
    params = np.asarray(params, dtype=np.float64)
    m, _ = pose_matrix(params[:12])
    ry = rotation_from_euler(0.0, math.radians(delta_deg), 0.0)
    p_new = params.copy()
    p_new[:9] = (ry @ m).reshape(-1)
    vertices = reconstruct_vertices(model, ParamVector(p_new)).reshape(-1, 3)
    landmarks = vertices[model.landmark_indices, :2]
    visible = vertex_visibility(vertices, model.triangles, model.n_vertices)
    yaw_deg = math.degrees(pose_decode(p_new[:12]).yaw)
    return p_new, landmarks, visible[model.landmark_indices], yaw_deg


def rotate_profile(sample: TrainingSample, model: MorphableModel, delta_deg):
    """Profile-rotate a training sample's labels; pixels are left unchanged
    in desk-scale mode."""
    if delta_deg == 0.0:
        return replace(sample)
    p_new, landmarks, visible, yaw_deg = rotate_labels(model, sample.p_gt, delta_deg)
    return TrainingSample(
        crop=sample.crop,
        p_gt=p_new,
        landmarks=landmarks,
        visibility=visible,
        yaw_deg=yaw_deg,
    )


def synthesize_virtual_sample(model: MorphableModel, seed):
    """Sample parameters, render the mean-texture face, and emit a sample
    whose labels are exact by construction.

    Identity/expression coefficients are drawn from the model's per-parameter
    spreads, yaw uniform in (-90, 90) degrees, pitch/roll in (-30, 30); scale
    and translation place the face centered, filling ~80% of the 120px frame.
    """
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0xFACE)))
    alpha_id = rng.normal(0.0, model.param_std[12:52])
    alpha_exp = rng.normal(0.0, model.param_std[52:62])
    yaw = math.radians(rng.uniform(-90.0, 90.0))
    pitch = math.radians(rng.uniform(-30.0, 30.0))
    roll = math.radians(rng.uniform(-30.0, 30.0))

    shape = synthesize_shape(model, alpha_id, alpha_exp).reshape(-1, 3)
    r = rotation_from_euler(pitch, yaw, roll)
    rotated = shape @ r.T
    lo = rotated[:, :2].min(axis=0)
    hi = rotated[:, :2].max(axis=0)
    extent = float(max(hi[0] - lo[0], hi[1] - lo[1]))
    f = FILL_FRACTION * CROP_SIZE / extent
    center2 = (lo + hi) / 2.0
    target = np.array(
        [CROP_SIZE / 2.0 / f - center2[0], CROP_SIZE / 2.0 / f - center2[1], 0.0]
    )
    t3d = r.T @ target

    pose12 = np.concatenate([(f * r).reshape(-1), t3d])
    p_gt = np.concatenate([pose12, alpha_id, alpha_exp])

    vertices = reconstruct_vertices(model, ParamVector(p_gt)).reshape(-1, 3)
    landmarks = vertices[model.landmark_indices, :2]
    visible = vertex_visibility(vertices, model.triangles, model.n_vertices)

    fb = rasterize(model, ParamVector(p_gt), background=np.array([0.06, 0.06, 0.08]))
    crop = FaceCrop(
        image=fb.color * 2.0 - 1.0,
        bbox=np.array(
            [
                CROP_SIZE * (1 - FILL_FRACTION) / 2.0,
                CROP_SIZE * (1 - FILL_FRACTION) / 2.0,
                CROP_SIZE * FILL_FRACTION,
                CROP_SIZE * FILL_FRACTION,
            ]
        ),
        scale=1.0,
        offset=np.zeros(2),
    )
    return TrainingSample(
        crop=crop,
        p_gt=p_gt,
        landmarks=landmarks,
        visibility=visible[model.landmark_indices],
        yaw_deg=math.degrees(yaw),
    )
