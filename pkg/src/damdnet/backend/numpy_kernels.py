"""Pure-NumPy implementations of the hot kernels.

These mirror the compiled extension in `_native.pyx` exactly; the package
selects one of the two at import time (see `damdnet.backend`).  Convolutions
use an im2col-style gather so the inner loops run inside BLAS/einsum.
"""

import numpy as np

NAME = "numpy"


def _windows(xp, k, stride):
    """View padded input as [N, C, Hout, Wout, k, k] sliding windows."""
    w = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    return w[:, :, ::stride, ::stride]


def _pad(x, padding):
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def conv2d_forward(x, w, stride, padding):
    k = w.shape[2]
    win = _windows(_pad(x, padding), k, stride)
    return np.einsum("ncyxij,ocij->noyx", win, w, optimize=True)


def conv2d_backward(x, w, gy, stride, padding):
    """Gradients of conv2d w.r.t. input and weight."""
    n, c, h, wd = x.shape
    k = w.shape[2]
    hout, wout = gy.shape[2], gy.shape[3]
    xp = _pad(x, padding)
    win = _windows(xp, k, stride)
    gw = np.einsum("noyx,ncyxij->ocij", gy, win, optimize=True)
    gxp = np.zeros_like(xp)
    for i in range(k):
        for j in range(k):
            contrib = np.einsum("noyx,oc->ncyx", gy, w[:, :, i, j], optimize=True)
            gxp[:, :, i : i + stride * hout : stride, j : j + stride * wout : stride] += contrib
    if padding:
        gxp = gxp[:, :, padding : padding + h, padding : padding + wd]
    return gxp, gw


def depthwise_forward(x, w, stride, padding):
    k = w.shape[2]
    win = _windows(_pad(x, padding), k, stride)
    return np.einsum("ncyxij,cij->ncyx", win, w[:, 0], optimize=True)


def depthwise_backward(x, w, gy, stride, padding):
    n, c, h, wd = x.shape
    k = w.shape[2]
    hout, wout = gy.shape[2], gy.shape[3]
    xp = _pad(x, padding)
    win = _windows(xp, k, stride)
    gw = np.einsum("ncyx,ncyxij->cij", gy, win, optimize=True)[:, None]
    gxp = np.zeros_like(xp)
    for i in range(k):
        for j in range(k):
            contrib = gy * w[None, :, 0, i, j, None, None]
            gxp[:, :, i : i + stride * hout : stride, j : j + stride * wout : stride] += contrib
    if padding:
        gxp = gxp[:, :, padding : padding + h, padding : padding + wd]
    return gxp, gw


def _edge(ax, ay, bx, by, px, py):
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


def _top_left(ax, ay, bx, by):
    # Flat-top or left edge of a triangle whose signed area is positive in
    # image coordinates (y grows downward): boundary pixels belong to edges
    # running upward, or horizontal edges running rightward.
    return (by < ay) or (by == ay and bx > ax)


def fill_triangles(xy, z, vcol, tris, tri_ids, shade, color, depth, idxbuf):
    """Rasterize triangles with a z-buffer into (color, depth, idxbuf).

    Depth test: larger z wins (toward the viewer); exact ties are broken by
    the smaller entry of `tri_ids`, which makes the result independent of
    triangle processing order.  Boundary pixels follow the top-left fill
    rule.  Returns the number of degenerate (zero-area) triangles skipped.
    """
    height, width = depth.shape
    degenerate = 0
    xs = np.arange(width) + 0.5
    for t in range(tris.shape[0]):
        i0, i1, i2 = tris[t]
        x0, y0 = xy[i0]
        x1, y1 = xy[i1]
        x2, y2 = xy[i2]
        area = _edge(x0, y0, x1, y1, x2, y2)
        if area == 0.0:
            degenerate += 1
            continue
        if area < 0.0:
            i1, i2 = i2, i1
            x1, y1, x2, y2 = x2, y2, x1, y1
            area = -area
        xmin = max(int(np.floor(min(x0, x1, x2) - 0.5)), 0)
        xmax = min(int(np.ceil(max(x0, x1, x2) - 0.5)), width - 1)
        ymin = max(int(np.floor(min(y0, y1, y2) - 0.5)), 0)
        ymax = min(int(np.ceil(max(y0, y1, y2) - 0.5)), height - 1)
        if xmin > xmax or ymin > ymax:
            continue
        px = xs[xmin : xmax + 1][None, :]
        py = (np.arange(ymin, ymax + 1) + 0.5)[:, None]
        e0 = _edge(x1, y1, x2, y2, px, py)
        e1 = _edge(x2, y2, x0, y0, px, py)
        e2 = _edge(x0, y0, x1, y1, px, py)
        inside = (
            ((e0 > 0) | ((e0 == 0) & _top_left(x1, y1, x2, y2)))
            & ((e1 > 0) | ((e1 == 0) & _top_left(x2, y2, x0, y0)))
            & ((e2 > 0) | ((e2 == 0) & _top_left(x0, y0, x1, y1)))
        )
        if not inside.any():
            continue
        b0 = e0 / area
        b1 = e1 / area
        b2 = e2 / area
        zf = b0 * z[i0] + b1 * z[i1] + b2 * z[i2]
        dwin = depth[ymin : ymax + 1, xmin : xmax + 1]
        iwin = idxbuf[ymin : ymax + 1, xmin : xmax + 1]
        tid = tri_ids[t]
        write = inside & ((zf > dwin) | ((zf == dwin) & (tid < iwin)))
        if not write.any():
            continue
        col = (
            b0[..., None] * vcol[i0]
            + b1[..., None] * vcol[i1]
            + b2[..., None] * vcol[i2]
        ) * shade[t]
        cwin = color[ymin : ymax + 1, xmin : xmax + 1]
        dwin[write] = zf[write]
        iwin[write] = tid
        cwin[write] = col[write]
    return degenerate
