"""Linear 3D face model, pose handling and weak-perspective projection.

Shapes are stored as 3N float vectors with x, y, z interleaved per vertex.
The 62-dim parameter vector P is laid out as 12 pose values (row-major 3x3
matrix M = f*R followed by the 3-vector t) then 40 identity and 10 expression
coefficients.  The projection applied everywhere is

    V = M @ (S + t)          (3-d, depth kept)
    S2d = first two rows of V

i.e. the translation is applied in model units before rotation and scaling.
Rotations use the fixed convention R = Rz(roll) @ Ry(yaw) @ Rx(pitch).
"""

import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, DimensionError, InvalidPoseError

ID_DIM = 40
EXP_DIM = 10
POSE_DIM = 12
PARAM_DIM = POSE_DIM + ID_DIM + EXP_DIM
N_LANDMARKS = 68

MODEL_MAGIC = b"DAMD3DMM"


@dataclass
class MorphableModel:
    """Mean shape plus identity/expression bases and metadata.

    Immutable after construction; all operations are pure functions of it.
    """

    mean_shape: np.ndarray  # (3N,)
    id_basis: np.ndarray  # (3N, 40)
    exp_basis: np.ndarray  # (3N, 10)
    triangles: np.ndarray  # (T, 3) uint32
    landmark_indices: np.ndarray  # (68,) int
    param_std: np.ndarray  # (62,)
    mean_texture: np.ndarray  # (N, 3) in [0, 1]

    @property
    def n_vertices(self):
        return self.mean_shape.size // 3

    def validate(self):
        n = self.n_vertices
        if n < N_LANDMARKS:
            raise DataError(f"model needs >= {N_LANDMARKS} vertices, got {n}")
        if self.mean_shape.size != 3 * n:
            raise DataError("mean_shape length is not a multiple of 3")
        if self.id_basis.shape != (3 * n, ID_DIM):
            raise DataError(f"id_basis shape {self.id_basis.shape} != {(3 * n, ID_DIM)}")
        if self.exp_basis.shape != (3 * n, EXP_DIM):
            raise DataError(f"exp_basis shape {self.exp_basis.shape} != {(3 * n, EXP_DIM)}")
        if self.landmark_indices.shape != (N_LANDMARKS,):
            raise DataError("need exactly 68 landmark indices")
        if self.landmark_indices.min() < 0 or self.landmark_indices.max() >= n:
            raise DataError("landmark index out of range")
        if self.triangles.min() < 0 or self.triangles.max() >= n:
            raise DataError("triangle index out of range")
        if self.param_std.shape != (PARAM_DIM,):
            raise DataError(f"param_std must have {PARAM_DIM} entries")
        if not (self.param_std > 0).all():
            raise DataError("param_std entries must be strictly positive")
        for name in ("mean_shape", "id_basis", "exp_basis"):
            if not np.isfinite(getattr(self, name)).all():
                raise DataError(f"{name} contains non-finite values")
        return self

    def landmark_rows(self):
        """Row indices into the 3N shape vector for the 68 landmarks."""
        idx = self.landmark_indices
        return np.stack([3 * idx, 3 * idx + 1, 3 * idx + 2], axis=1).reshape(-1)


@dataclass
class EulerPose:
    """Scale, rotation angles (radians) and model-unit translation."""

    f: float
    pitch: float
    yaw: float
    roll: float
    t3d: np.ndarray

    def __post_init__(self):
        self.t3d = np.asarray(self.t3d, dtype=np.float64).reshape(3)
        if not self.f > 0:
            raise InvalidPoseError(f"scale must be positive, got {self.f}")
        for a in (self.pitch, self.yaw, self.roll):
            if not math.isfinite(a):
                raise InvalidPoseError("rotation angles must be finite")


@dataclass
class ParamVector:
    """62-dim prediction target: pose12 + 40 identity + 10 expression."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if self.values.size != PARAM_DIM:
            raise DimensionError(f"parameter vector must have {PARAM_DIM} entries")

    @property
    def pose12(self):
        return self.values[:POSE_DIM]

    @property
    def alpha_id(self):
        return self.values[POSE_DIM : POSE_DIM + ID_DIM]

    @property
    def alpha_exp(self):
        return self.values[POSE_DIM + ID_DIM :]

    @classmethod
    def pack(cls, pose12, alpha_id, alpha_exp):
        return cls(np.concatenate([np.asarray(pose12, dtype=np.float64).reshape(-1),
                                   np.asarray(alpha_id, dtype=np.float64).reshape(-1),
                                   np.asarray(alpha_exp, dtype=np.float64).reshape(-1)]))


# -- shape synthesis ----------------------------------------------------------


def synthesize_shape(model: MorphableModel, alpha_id, alpha_exp):
    """Mean shape plus basis offsets; returns the interleaved 3N vector."""
    alpha_id = np.asarray(alpha_id, dtype=np.float64).reshape(-1)
    alpha_exp = np.asarray(alpha_exp, dtype=np.float64).reshape(-1)
    if alpha_id.size != ID_DIM:
        raise DimensionError(f"alpha_id must have {ID_DIM} entries, got {alpha_id.size}")
    if alpha_exp.size != EXP_DIM:
        raise DimensionError(f"alpha_exp must have {EXP_DIM} entries, got {alpha_exp.size}")
    return (
        model.mean_shape.astype(np.float64)
        + model.id_basis.astype(np.float64) @ alpha_id
        + model.exp_basis.astype(np.float64) @ alpha_exp
    )


# -- rotations ----------------------------------------------------------------


def rotation_from_euler(pitch, yaw, roll):
    """R = Rz(roll) @ Ry(yaw) @ Rx(pitch); proper rotation for finite angles."""
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    cr, sr = math.cos(roll), math.sin(roll)
    rx = np.array([[1, 0, 0], [0, cp, -sp], [0, sp, cp]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cr, -sr, 0], [sr, cr, 0], [0, 0, 1]])
    return rz @ ry @ rx


def euler_from_rotation(r):
    """Invert `rotation_from_euler`; at |yaw| = pi/2 roll is pinned to 0."""
    sy = -float(r[2, 0])
    sy = min(1.0, max(-1.0, sy))
    yaw = math.asin(sy)
    cy = math.cos(yaw)
    if abs(cy) > 1e-9:
        pitch = math.atan2(r[2, 1], r[2, 2])
        roll = math.atan2(r[1, 0], r[0, 0])
    else:
        # Gimbal lock: only pitch +/- roll is observable; fix roll = 0.
        roll = 0.0
        pitch = math.atan2(sy * r[0, 1], sy * r[0, 2])
    return pitch, yaw, roll


# -- projection ---------------------------------------------------------------


def transform_shape(shape, pose: EulerPose):
    """Apply f * R @ (S + t) per vertex, keeping depth; returns (N, 3)."""
    pts = np.asarray(shape, dtype=np.float64).reshape(-1, 3)
    if not np.isfinite(pts).all():
        raise DimensionError("shape contains non-finite coordinates")
    r = rotation_from_euler(pose.pitch, pose.yaw, pose.roll)
    return pose.f * (pts + pose.t3d) @ r.T


def project(shape, pose: EulerPose):
    """Weak-perspective projection; returns interleaved 2N vector (x, y)."""
    return transform_shape(shape, pose)[:, :2].reshape(-1)


# -- pose codec ----------------------------------------------------------------


def pose_encode(pose: EulerPose):
    """Pack an EulerPose into the 12-float pose block (M = f*R, then t)."""
    m = pose.f * rotation_from_euler(pose.pitch, pose.yaw, pose.roll)
    return np.concatenate([m.reshape(-1), pose.t3d])


def pose_decode(pose12):
    """Recover EulerPose from a pose block.

    f is the cube root of det(M); R is the rotation nearest to M / f
    (orthogonal Procrustes).  det(M) <= 0 is rejected.
    """
    pose12 = np.asarray(pose12, dtype=np.float64).reshape(-1)
    if pose12.size != POSE_DIM:
        raise DimensionError(f"pose block must have {POSE_DIM} entries")
    m = pose12[:9].reshape(3, 3)
    det = float(np.linalg.det(m))
    if not det > 0:
        raise InvalidPoseError(f"pose matrix must have positive determinant, got {det:.3g}")
    f = det ** (1.0 / 3.0)
    u, _, vt = np.linalg.svd(m / f)
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, -1] = -u[:, -1]
        r = u @ vt
    pitch, yaw, roll = euler_from_rotation(r)
    return EulerPose(f=f, pitch=pitch, yaw=yaw, roll=roll, t3d=pose12[9:12].copy())


def pose_matrix(pose12):
    """Split a pose block into (M, t) without the Euler round trip."""
    pose12 = np.asarray(pose12, dtype=np.float64).reshape(-1)
    if pose12.size != POSE_DIM:
        raise DimensionError(f"pose block must have {POSE_DIM} entries")
    m = pose12[:9].reshape(3, 3)
    if not np.linalg.det(m) > 0:
        raise InvalidPoseError("pose matrix must have positive determinant")
    return m, pose12[9:12]


def reconstruct_vertices(model: MorphableModel, p: ParamVector, landmarks_only=False):
    """3-d vertices V(P) = M @ (S(alpha) + t), interleaved 3N (or 3*68)."""
    m, t = pose_matrix(p.pose12)
    shape = synthesize_shape(model, p.alpha_id, p.alpha_exp)
    pts = shape.reshape(-1, 3)
    if landmarks_only:
        pts = pts[model.landmark_indices]
    return ((pts + t) @ m.T).reshape(-1)


def project_params(model: MorphableModel, p: ParamVector, landmarks_only=True):
    """2-d landmarks (68, 2) or full vertex set implied by the parameters."""
    v = reconstruct_vertices(model, p, landmarks_only=landmarks_only).reshape(-1, 3)
    return v[:, :2].copy()


# -- synthetic model generator ------------------------------------------------


def _strip_triangulation(row_counts):
    """Triangulate consecutive point rows (two-pointer strip merge)."""
    tris = []
    offsets = np.concatenate([[0], np.cumsum(row_counts)])
    for r in range(len(row_counts) - 1):
        a0, na = offsets[r], row_counts[r]
        b0, nb = offsets[r + 1], row_counts[r + 1]
        i = j = 0
        while i < na - 1 or j < nb - 1:
            # advance on the side whose next parameter position is smaller
            ta = (i + 1) / (na - 1) if i < na - 1 else 2.0
            tb = (j + 1) / (nb - 1) if j < nb - 1 else 2.0
            if ta <= tb:
                tris.append((a0 + i, b0 + j, a0 + i + 1))
                i += 1
            else:
                tris.append((a0 + i, b0 + j, b0 + j + 1))
                j += 1
    return np.array(tris, dtype=np.uint32)


def generate_synthetic_model(seed, n_vertices=500):
    """Deterministic stand-in for a licensed face basis.

    The mean shape is a face-like half-ellipsoid (tapered toward the chin,
    with a nose bump) scaled into the [-1, 1]^3 box; id/exp basis columns are
    jointly orthonormalized Gaussian vectors; per-parameter standard
    deviations decay geometrically.
    """
    if n_vertices < N_LANDMARKS:
        raise DataError(f"need at least {N_LANDMARKS} vertices, got {n_vertices}")
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0x3D4D)))

    rows = max(3, int(round(math.sqrt(n_vertices))))
    counts = np.full(rows, n_vertices // rows, dtype=int)
    counts[: n_vertices - counts.sum()] += 1
    counts = np.maximum(counts, 2)
    while counts.sum() > n_vertices:
        counts[np.argmax(counts)] -= 1

    pts = []
    for r, cnt in enumerate(counts):
        v = -1.0 + 2.0 * r / (rows - 1)  # down the face
        width = 0.95 - 0.25 * max(0.0, v) ** 2  # taper toward the chin
        for i in range(cnt):
            u = (-1.0 + 2.0 * i / (cnt - 1)) * width
            x = 0.8 * u
            y = v
            dome = max(0.0, 1.0 - u * u - v * v)
            z = 0.55 * math.sqrt(dome)
            z += 0.18 * math.exp(-((u / 0.22) ** 2 + ((v - 0.15) / 0.28) ** 2))
            pts.append((x, y, z))
    pts = np.array(pts, dtype=np.float64)
    pts -= pts.mean(axis=0)
    pts /= np.abs(pts).max()
    mean_shape = pts.reshape(-1)

    tris = _strip_triangulation(counts)
    # Orient all triangles counter-clockwise in the (x, y) plane so frontal
    # normals point toward +z.
    p = pts[tris.astype(int)]
    cross = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (
        p[:, 1, 1] - p[:, 0, 1]
    ) * (p[:, 2, 0] - p[:, 0, 0])
    flip = cross < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]

    basis = rng.standard_normal((3 * n_vertices, ID_DIM + EXP_DIM))
    q, _ = np.linalg.qr(basis)
    id_basis = q[:, :ID_DIM].copy()
    exp_basis = q[:, ID_DIM:].copy()

    param_std = 0.35 * np.power(0.95, np.arange(PARAM_DIM))

    landmark_indices = np.sort(rng.choice(n_vertices, size=N_LANDMARKS, replace=False))

    shade = 0.75 + 0.25 * (pts[:, 2] - pts[:, 2].min()) / np.ptp(pts[:, 2])
    base = np.array([0.87, 0.65, 0.52])
    mean_texture = np.clip(shade[:, None] * base[None, :], 0.0, 1.0)

    model = MorphableModel(
        mean_shape=mean_shape,
        id_basis=id_basis,
        exp_basis=exp_basis,
        triangles=tris,
        landmark_indices=landmark_indices.astype(np.int64),
        param_std=param_std,
        mean_texture=mean_texture,
    )
    return model.validate()


# -- model file format ---------------------------------------------------------


def save_model(model: MorphableModel, path):
    """Write the DAMD3DMM container (JSON header + little-endian blocks)."""
    n = model.n_vertices
    blocks = [
        ("mean_shape", model.mean_shape.astype("<f4").tobytes()),
        ("id_basis", model.id_basis.astype("<f4").tobytes(order="F")),
        ("exp_basis", model.exp_basis.astype("<f4").tobytes(order="F")),
        ("param_std", model.param_std.astype("<f4").tobytes()),
        ("mean_texture", model.mean_texture.astype("<f4").tobytes()),
        ("triangles", model.triangles.astype("<u4").tobytes()),
    ]
    offsets = {}
    pos = 0
    for name, raw in blocks:
        offsets[name] = pos
        pos += len(raw)
    header = json.dumps(
        {
            "n_vertices": n,
            "landmark_indices": model.landmark_indices.tolist(),
            "triangle_count": int(model.triangles.shape[0]),
            "offsets": offsets,
        },
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MODEL_MAGIC)
    buf.write(len(header).to_bytes(4, "little"))
    buf.write(header)
    for _, raw in blocks:
        buf.write(raw)
    data = buf.getvalue()
    with open(path, "wb") as fh:
        fh.write(data)
    return len(data)


def load_model(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != MODEL_MAGIC:
        raise DataError(f"{path}: not a DAMD3DMM model file")
    hlen = int.from_bytes(raw[8:12], "little")
    try:
        header = json.loads(raw[12 : 12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: corrupt model header ({exc})") from exc
    n = header["n_vertices"]
    tcount = header["triangle_count"]
    off = header["offsets"]
    payload = raw[12 + hlen :]

    def block(name, count, dtype):
        start = off[name]
        nbytes = count * np.dtype(dtype).itemsize
        if start + nbytes > len(payload):
            raise DataError(f"{path}: block '{name}' truncated")
        return np.frombuffer(payload[start : start + nbytes], dtype=dtype)

    model = MorphableModel(
        mean_shape=block("mean_shape", 3 * n, "<f4").astype(np.float64),
        id_basis=block("id_basis", 3 * n * ID_DIM, "<f4")
        .astype(np.float64)
        .reshape((3 * n, ID_DIM), order="F"),
        exp_basis=block("exp_basis", 3 * n * EXP_DIM, "<f4")
        .astype(np.float64)
        .reshape((3 * n, EXP_DIM), order="F"),
        param_std=block("param_std", PARAM_DIM, "<f4").astype(np.float64),
        mean_texture=block("mean_texture", 3 * n, "<f4").astype(np.float64).reshape(n, 3),
        triangles=block("triangles", 3 * tcount, "<u4").reshape(tcount, 3).copy(),
        landmark_indices=np.asarray(header["landmark_indices"], dtype=np.int64),
    )
    return model.validate()
