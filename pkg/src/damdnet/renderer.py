"""Software z-buffer rasterizer for mean-texture reconstructions.

Vertices are transformed with the same weak-perspective math as the
projection pipeline, keeping z before truncation as the depth value: larger
z is closer to the viewer.  Triangles are filled with barycentric texture
interpolation and flat Lambertian shading from a fixed headlight; depth
ties are resolved toward the lower triangle index so output does not depend
on triangle order.
"""

import numpy as np

from .backend import kernels
from .errors import DataError
from .morphable import MorphableModel, ParamVector, reconstruct_vertices

AMBIENT = 0.35
DIFFUSE = 0.65
VISIBLE_COLOR = np.array([0.1, 0.9, 0.2])
HIDDEN_COLOR = np.array([0.95, 0.25, 0.2])


class Framebuffer:
    """Color + depth + triangle-index buffers of one render."""

    def __init__(self, width, height, background=None):
        if width <= 0 or height <= 0:
            raise DataError(f"framebuffer dims must be positive, got {width}x{height}")
        self.width = width
        self.height = height
        self.color = np.zeros((height, width, 3), dtype=np.float64)
        if background is not None:
            bg = np.asarray(background, dtype=np.float64)
            self.color[:] = bg  # flat color or full image, broadcast either way
        self.depth = np.full((height, width), -np.inf, dtype=np.float64)
        self.tri_index = np.full((height, width), np.iinfo(np.int64).max, dtype=np.int64)
        self.degenerate_count = 0


def triangle_normals(vertices, triangles):
    """Per-triangle normals (unnormalized cross products)."""
    p = vertices[triangles.astype(np.int64)]
    return np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])


def vertex_visibility(vertices, triangles, n_vertices):
    """Back-face test: a vertex is visible when its accumulated normal points
    toward the viewer (+z)."""
    normals = triangle_normals(vertices, triangles)
    acc = np.zeros((n_vertices, 3))
    np.add.at(acc, triangles.astype(np.int64).reshape(-1), np.repeat(normals, 3, axis=0))
    return acc[:, 2] > 0


def draw_triangles(fb: Framebuffer, vertices, triangles, vertex_colors, tri_ids=None):
    """Fill triangles into `fb`; `vertices` is (N, 3) in pixel coordinates."""
    vertices = np.ascontiguousarray(vertices, dtype=np.float64)
    tris = np.ascontiguousarray(triangles, dtype=np.int32)
    if tri_ids is None:
        tri_ids = np.arange(tris.shape[0], dtype=np.int64)
    tri_ids = np.ascontiguousarray(tri_ids, dtype=np.int64)
    normals = triangle_normals(vertices, tris)
    norm = np.linalg.norm(normals, axis=1)
    nz = np.divide(normals[:, 2], norm, out=np.zeros_like(norm), where=norm > 0)
    shade = AMBIENT + DIFFUSE * np.maximum(nz, 0.0)
    count = kernels.fill_triangles(
        vertices[:, :2].copy(),
        np.ascontiguousarray(vertices[:, 2]),
        np.ascontiguousarray(vertex_colors, dtype=np.float64),
        tris,
        tri_ids,
        np.ascontiguousarray(shade),
        fb.color,
        fb.depth,
        fb.tri_index,
    )
    fb.degenerate_count += int(count)
    return fb


def rasterize(model: MorphableModel, p: ParamVector, background, width=120, height=120):
    """Render the mean-texture face implied by `p` over a background."""
    fb = Framebuffer(width, height, background=background)
    vertices = reconstruct_vertices(model, p).reshape(-1, 3)
    draw_triangles(fb, vertices, model.triangles, model.mean_texture)
    return fb


def overlay_landmarks(image, landmarks, visibility=None, radius=2.0):
    """Draw filled discs on a copy of `image`; hidden points get their own
    color, out-of-frame points are clipped."""
    out = np.array(image, dtype=np.float64, copy=True)
    h, w = out.shape[:2]
    landmarks = np.asarray(landmarks, dtype=np.float64)
    if visibility is None:
        visibility = np.ones(len(landmarks), dtype=bool)
    for (x, y), vis in zip(landmarks, visibility):
        if not (np.isfinite(x) and np.isfinite(y)):
            raise DataError("landmark coordinates must be finite")
        color = VISIBLE_COLOR if vis else HIDDEN_COLOR
        x0 = max(int(np.floor(x - radius)), 0)
        x1 = min(int(np.ceil(x + radius)), w - 1)
        y0 = max(int(np.floor(y - radius)), 0)
        y1 = min(int(np.ceil(y + radius)), h - 1)
        for py in range(y0, y1 + 1):
            for px in range(x0, x1 + 1):
                if (px + 0.5 - x) ** 2 + (py + 0.5 - y) ** 2 <= radius * radius:
                    out[py, px] = color
    return out
