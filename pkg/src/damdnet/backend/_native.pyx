# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: direct-loop convolutions and z-buffer triangle fill.

Semantics match `numpy_kernels` bit-for-bit in exact arithmetic; tests assert
numerical agreement between the two backends.
"""

import numpy as np

cimport cython
cimport numpy as cnp
from libc.math cimport ceil, floor

NAME = "native"

ctypedef fused floating:
    float
    double


cdef inline Py_ssize_t _tap_lo(Py_ssize_t padding, Py_ssize_t tap, Py_ssize_t stride) nogil:
    # Smallest output index whose input tap is in bounds.
    cdef Py_ssize_t d = padding - tap
    if d <= 0:
        return 0
    return (d + stride - 1) // stride


cdef inline Py_ssize_t _tap_hi(Py_ssize_t limit, Py_ssize_t padding, Py_ssize_t tap,
                               Py_ssize_t stride, Py_ssize_t out_limit) nogil:
    # One past the largest output index whose input tap is in bounds.
    cdef Py_ssize_t q = limit - 1 + padding - tap
    if q < 0:
        return 0
    q = q // stride + 1
    if q > out_limit:
        return out_limit
    return q


def conv2d_forward(floating[:, :, :, ::1] x, floating[:, :, :, ::1] w,
                   int stride, int padding):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t co = w.shape[0], k = w.shape[2]
    cdef Py_ssize_t hout = (h + 2 * padding - k) // stride + 1
    cdef Py_ssize_t wout = (wd + 2 * padding - k) // stride + 1
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.zeros((n, co, hout, wout), dtype=dtype)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b, o, ci, y, xx, i, j, iy, y0, y1, x0, x1, base
    cdef floating wval
    with nogil:
        for b in range(n):
            for o in range(co):
                for ci in range(c):
                    for i in range(k):
                        y0 = _tap_lo(padding, i, stride)
                        y1 = _tap_hi(h, padding, i, stride, hout)
                        for j in range(k):
                            wval = w[o, ci, i, j]
                            x0 = _tap_lo(padding, j, stride)
                            x1 = _tap_hi(wd, padding, j, stride, wout)
                            base = j - padding
                            for y in range(y0, y1):
                                iy = y * stride - padding + i
                                for xx in range(x0, x1):
                                    out[b, o, y, xx] += wval * x[b, ci, iy, xx * stride + base]
    return out_arr


def conv2d_backward(floating[:, :, :, ::1] x, floating[:, :, :, ::1] w,
                    floating[:, :, :, ::1] gy, int stride, int padding):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t co = w.shape[0], k = w.shape[2]
    cdef Py_ssize_t hout = gy.shape[2], wout = gy.shape[3]
    dtype = np.float32 if floating is float else np.float64
    gx_arr = np.zeros((n, c, h, wd), dtype=dtype)
    gw_arr = np.zeros((co, c, k, k), dtype=dtype)
    cdef floating[:, :, :, ::1] gx = gx_arr
    cdef floating[:, :, :, ::1] gw = gw_arr
    cdef Py_ssize_t b, o, ci, y, xx, i, j, iy, y0, y1, x0, x1, base
    cdef floating wval, acc, g
    with nogil:
        for b in range(n):
            for o in range(co):
                for ci in range(c):
                    for i in range(k):
                        y0 = _tap_lo(padding, i, stride)
                        y1 = _tap_hi(h, padding, i, stride, hout)
                        for j in range(k):
                            wval = w[o, ci, i, j]
                            x0 = _tap_lo(padding, j, stride)
                            x1 = _tap_hi(wd, padding, j, stride, wout)
                            base = j - padding
                            acc = 0
                            for y in range(y0, y1):
                                iy = y * stride - padding + i
                                for xx in range(x0, x1):
                                    g = gy[b, o, y, xx]
                                    gx[b, ci, iy, xx * stride + base] += g * wval
                                    acc += g * x[b, ci, iy, xx * stride + base]
                            gw[o, ci, i, j] += acc
    return gx_arr, gw_arr


def depthwise_forward(floating[:, :, :, ::1] x, floating[:, :, :, ::1] w,
                      int stride, int padding):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t k = w.shape[2]
    cdef Py_ssize_t hout = (h + 2 * padding - k) // stride + 1
    cdef Py_ssize_t wout = (wd + 2 * padding - k) // stride + 1
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.zeros((n, c, hout, wout), dtype=dtype)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b, ci, y, xx, i, j, iy, y0, y1, x0, x1, base
    cdef floating wval
    with nogil:
        for b in range(n):
            for ci in range(c):
                for i in range(k):
                    y0 = _tap_lo(padding, i, stride)
                    y1 = _tap_hi(h, padding, i, stride, hout)
                    for j in range(k):
                        wval = w[ci, 0, i, j]
                        x0 = _tap_lo(padding, j, stride)
                        x1 = _tap_hi(wd, padding, j, stride, wout)
                        base = j - padding
                        for y in range(y0, y1):
                            iy = y * stride - padding + i
                            for xx in range(x0, x1):
                                out[b, ci, y, xx] += wval * x[b, ci, iy, xx * stride + base]
    return out_arr


def depthwise_backward(floating[:, :, :, ::1] x, floating[:, :, :, ::1] w,
                       floating[:, :, :, ::1] gy, int stride, int padding):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t k = w.shape[2]
    cdef Py_ssize_t hout = gy.shape[2], wout = gy.shape[3]
    dtype = np.float32 if floating is float else np.float64
    gx_arr = np.zeros((n, c, h, wd), dtype=dtype)
    gw_arr = np.zeros((c, 1, k, k), dtype=dtype)
    cdef floating[:, :, :, ::1] gx = gx_arr
    cdef floating[:, :, :, ::1] gw = gw_arr
    cdef Py_ssize_t b, ci, y, xx, i, j, iy, y0, y1, x0, x1, base
    cdef floating wval, acc, g
    with nogil:
        for b in range(n):
            for ci in range(c):
                for i in range(k):
                    y0 = _tap_lo(padding, i, stride)
                    y1 = _tap_hi(h, padding, i, stride, hout)
                    for j in range(k):
                        wval = w[ci, 0, i, j]
                        x0 = _tap_lo(padding, j, stride)
                        x1 = _tap_hi(wd, padding, j, stride, wout)
                        base = j - padding
                        acc = 0
                        for y in range(y0, y1):
                            iy = y * stride - padding + i
                            for xx in range(x0, x1):
                                g = gy[b, ci, y, xx]
                                gx[b, ci, iy, xx * stride + base] += g * wval
                                acc += g * x[b, ci, iy, xx * stride + base]
                        gw[ci, 0, i, j] += acc
    return gx_arr, gw_arr


cdef inline double _edge(double ax, double ay, double bx, double by,
                         double px, double py) nogil:
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


cdef inline bint _top_left(double ax, double ay, double bx, double by) nogil:
    return (by < ay) or (by == ay and bx > ax)


def fill_triangles(double[:, ::1] xy, double[::1] z, double[:, ::1] vcol,
                   int[:, ::1] tris, long[::1] tri_ids, double[::1] shade,
                   double[:, :, ::1] color, double[:, ::1] depth,
                   long[:, ::1] idxbuf):
    """Z-buffer fill; larger z wins, exact ties go to the smaller tri_id."""
    cdef Py_ssize_t height = depth.shape[0], width = depth.shape[1]
    cdef Py_ssize_t t, ntri = tris.shape[0]
    cdef Py_ssize_t i0, i1, i2, tmp
    cdef double x0, y0, x1, y1, x2, y2, area
    cdef double px, py, e0, e1, e2, b0, b1, b2, zf, sh
    cdef Py_ssize_t xmin, xmax, ymin, ymax, ix, iy
    cdef bint in0, in1, in2
    cdef long tid
    cdef long degenerate = 0
    with nogil:
        for t in range(ntri):
            i0 = tris[t, 0]
            i1 = tris[t, 1]
            i2 = tris[t, 2]
            x0 = xy[i0, 0]; y0 = xy[i0, 1]
            x1 = xy[i1, 0]; y1 = xy[i1, 1]
            x2 = xy[i2, 0]; y2 = xy[i2, 1]
            area = _edge(x0, y0, x1, y1, x2, y2)
            if area == 0.0:
                degenerate += 1
                continue
            if area < 0.0:
                tmp = i1; i1 = i2; i2 = tmp
                px = x1; x1 = x2; x2 = px
                py = y1; y1 = y2; y2 = py
                area = -area
            xmin = <Py_ssize_t> floor(min3(x0, x1, x2) - 0.5)
            if xmin < 0:
                xmin = 0
            xmax = <Py_ssize_t> ceil(max3(x0, x1, x2) - 0.5)
            if xmax > width - 1:
                xmax = width - 1
            ymin = <Py_ssize_t> floor(min3(y0, y1, y2) - 0.5)
            if ymin < 0:
                ymin = 0
            ymax = <Py_ssize_t> ceil(max3(y0, y1, y2) - 0.5)
            if ymax > height - 1:
                ymax = height - 1
            tid = tri_ids[t]
            sh = shade[t]
            for iy in range(ymin, ymax + 1):
                py = iy + 0.5
                for ix in range(xmin, xmax + 1):
                    px = ix + 0.5
                    e0 = _edge(x1, y1, x2, y2, px, py)
                    e1 = _edge(x2, y2, x0, y0, px, py)
                    e2 = _edge(x0, y0, x1, y1, px, py)
                    in0 = e0 > 0 or (e0 == 0 and _top_left(x1, y1, x2, y2))
                    in1 = e1 > 0 or (e1 == 0 and _top_left(x2, y2, x0, y0))
                    in2 = e2 > 0 or (e2 == 0 and _top_left(x0, y0, x1, y1))
                    if not (in0 and in1 and in2):
                        continue
                    b0 = e0 / area
                    b1 = e1 / area
                    b2 = e2 / area
                    zf = b0 * z[i0] + b1 * z[i1] + b2 * z[i2]
                    if zf > depth[iy, ix] or (zf == depth[iy, ix] and tid < idxbuf[iy, ix]):
                        depth[iy, ix] = zf
                        idxbuf[iy, ix] = tid
                        color[iy, ix, 0] = sh * (b0 * vcol[i0, 0] + b1 * vcol[i1, 0] + b2 * vcol[i2, 0])
                        color[iy, ix, 1] = sh * (b0 * vcol[i0, 1] + b1 * vcol[i1, 1] + b2 * vcol[i2, 1])
                        color[iy, ix, 2] = sh * (b0 * vcol[i0, 2] + b1 * vcol[i1, 2] + b2 * vcol[i2, 2])
    return degenerate


cdef inline double min3(double a, double b, double c) nogil:
    cdef double m = a
    if b < m:
        m = b
    if c < m:
        m = c
    return m


cdef inline double max3(double a, double b, double c) nogil:
    cdef double m = a
    if b > m:
        m = b
    if c > m:
        m = c
    return m
