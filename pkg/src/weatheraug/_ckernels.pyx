# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled sprite kernels; mirror of ``_pykernels``."""

import numpy as np
from libc.math cimport floor


cdef inline double _fetch(const double[:, ::1] src, Py_ssize_t y, Py_ssize_t x) nogil:
    if y < 0 or x < 0 or y >= src.shape[0] or x >= src.shape[1]:
        return 0.0
    return src[y, x]


def warp_bilinear(const double[:, ::1] intensity, const double[:, ::1] alpha,
                  const double[:, ::1] hinv, Py_ssize_t x0, Py_ssize_t y0,
                  Py_ssize_t out_h, Py_ssize_t out_w):
    out_i = np.zeros((out_h, out_w))
    out_a = np.zeros((out_h, out_w))
    cdef double[:, ::1] oi = out_i
    cdef double[:, ::1] oa = out_a
    cdef Py_ssize_t r, c, ix, iy
    cdef double X, Y, w, tx, ty, fx, fy, w00, w01, w10, w11
    with nogil:
        for r in range(out_h):
            Y = y0 + r + 0.5
            for c in range(out_w):
                X = x0 + c + 0.5
                w = hinv[2, 0] * X + hinv[2, 1] * Y + hinv[2, 2]
                if w == 0.0:
                    continue
                tx = (hinv[0, 0] * X + hinv[0, 1] * Y + hinv[0, 2]) / w - 0.5
                ty = (hinv[1, 0] * X + hinv[1, 1] * Y + hinv[1, 2]) / w - 0.5
                if tx <= -1.0 or ty <= -1.0 or tx >= intensity.shape[1] or ty >= intensity.shape[0]:
                    continue
                ix = <Py_ssize_t>floor(tx)
                iy = <Py_ssize_t>floor(ty)
                fx = tx - ix
                fy = ty - iy
                w00 = (1.0 - fx) * (1.0 - fy)
                w01 = fx * (1.0 - fy)
                w10 = (1.0 - fx) * fy
                w11 = fx * fy
                oi[r, c] = (w00 * _fetch(intensity, iy, ix) + w01 * _fetch(intensity, iy, ix + 1)
                            + w10 * _fetch(intensity, iy + 1, ix) + w11 * _fetch(intensity, iy + 1, ix + 1))
                oa[r, c] = (w00 * _fetch(alpha, iy, ix) + w01 * _fetch(alpha, iy, ix + 1)
                            + w10 * _fetch(alpha, iy + 1, ix) + w11 * _fetch(alpha, iy + 1, ix + 1))
    return out_i, out_a


def blend_into(double[:, :, ::1] canvas, const double[:, ::1] intensity,
               const double[:, ::1] alpha, const double[::1] gain,
               Py_ssize_t x0, Py_ssize_t y0, double tau1, double exposure, double tau0):
    cdef Py_ssize_t r, c, ch, y, x
    cdef Py_ssize_t h = intensity.shape[0], w = intensity.shape[1]
    cdef double keep, s
    cdef double ratio = tau1 / tau0
    with nogil:
        for r in range(h):
            y = y0 + r
            if y < 0 or y >= canvas.shape[0]:
                continue
            for c in range(w):
                x = x0 + c
                if x < 0 or x >= canvas.shape[1]:
                    continue
                keep = (exposure - alpha[r, c] * tau1) / exposure
                s = intensity[r, c]
                for ch in range(3):
                    canvas[y, x, ch] = keep * canvas[y, x, ch] + s * gain[ch] * ratio


def project_drops(const double[:, ::1] positions, const double[:, ::1] velocities,
                  const double[::1] diameters_mm, double focal_px, double cx, double cy,
                  double exposure, double width, double height):
    """Single pass: project exposure start/end, drop diameter in px, and cull."""
    cdef Py_ssize_t n = positions.shape[0]
    start_a = np.empty((n, 2))
    end_a = np.empty((n, 2))
    diam_a = np.empty(n)
    keep_a = np.zeros(n, dtype=np.uint8)
    cdef double[:, ::1] start = start_a
    cdef double[:, ::1] end = end_a
    cdef double[::1] diam = diam_a
    cdef unsigned char[::1] keep = keep_a
    cdef Py_ssize_t i
    cdef double x0, y0, z0, x1, y1, z1, u0, v0, u1, v1, half, lo, hi
    with nogil:
        for i in range(n):
            x0 = positions[i, 0]
            y0 = positions[i, 1]
            z0 = positions[i, 2]
            x1 = x0 + velocities[i, 0] * exposure
            y1 = y0 + velocities[i, 1] * exposure
            z1 = z0 + velocities[i, 2] * exposure
            if z0 <= 1e-6 or z1 <= 1e-6:
                continue
            u0 = focal_px * x0 / z0 + cx
            v0 = focal_px * y0 / z0 + cy
            u1 = focal_px * x1 / z1 + cx
            v1 = focal_px * y1 / z1 + cy
            start[i, 0] = u0
            start[i, 1] = v0
            end[i, 0] = u1
            end[i, 1] = v1
            diam[i] = diameters_mm[i] * 1e-3 * focal_px / z0
            half = diam[i] / 2
            lo = (u0 if u0 < u1 else u1) - half
            hi = (u1 if u0 < u1 else u0) + half
            if hi < 0 or lo > width:
                continue
            lo = (v0 if v0 < v1 else v1) - half
            hi = (v1 if v0 < v1 else v0) + half
            if hi < 0 or lo > height:
                continue
            keep[i] = 1
    return start_a, end_a, diam_a, keep_a.view(np.bool_)
