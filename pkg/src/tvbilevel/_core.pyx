# cython: boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled kernel core: fused C loops for the solver hot path.

Mirrors tvbilevel._kernels_py function by function; see that module for the
shape conventions and the numerical contract.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor, sqrt

cnp.import_array()


def grad2d(double[:, ::1] u):
    cdef Py_ssize_t h = u.shape[0], w = u.shape[1], i, j
    out_arr = np.zeros((2, h, w), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    for i in range(h):
        for j in range(w - 1):
            out[0, i, j] = u[i, j + 1] - u[i, j]
    for i in range(h - 1):
        for j in range(w):
            out[1, i, j] = u[i + 1, j] - u[i, j]
    return out_arr


def div2d(double[:, :, ::1] w):
    cdef Py_ssize_t h = w.shape[1], ww = w.shape[2], i, j
    out_arr = np.zeros((h, ww), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for i in range(h):
        out[i, 0] += w[0, i, 0]
        for j in range(1, ww - 1):
            out[i, j] += w[0, i, j] - w[0, i, j - 1]
        out[i, ww - 1] -= w[0, i, ww - 2]
    for j in range(ww):
        out[0, j] += w[1, 0, j]
    for i in range(1, h - 1):
        for j in range(ww):
            out[i, j] += w[1, i, j] - w[1, i - 1, j]
    for j in range(ww):
        out[h - 1, j] -= w[1, h - 2, j]
    return out_arr


def proj_nonneg(double[:, ::1] u):
    cdef Py_ssize_t h = u.shape[0], w = u.shape[1], i, j
    out_arr = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for i in range(h):
        for j in range(w):
            out[i, j] = u[i, j] if u[i, j] > 0.0 else 0.0
    return out_arr


def pixel_norm(double[:, :, ::1] w):
    cdef Py_ssize_t h = w.shape[1], ww = w.shape[2], i, j
    out_arr = np.empty((h, ww), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for i in range(h):
        for j in range(ww):
            out[i, j] = sqrt(w[0, i, j] * w[0, i, j] + w[1, i, j] * w[1, i, j])
    return out_arr


def proj_l2ball(double[:, :, ::1] w, double radius):
    cdef Py_ssize_t h = w.shape[1], ww = w.shape[2], i, j
    cdef double n, f
    out_arr = np.empty((2, h, ww), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    for i in range(h):
        for j in range(ww):
            n = sqrt(w[0, i, j] * w[0, i, j] + w[1, i, j] * w[1, i, j])
            f = n / radius
            if f > 1.0:
                out[0, i, j] = w[0, i, j] / f
                out[1, i, j] = w[1, i, j] / f
            else:
                out[0, i, j] = w[0, i, j]
                out[1, i, j] = w[1, i, j]
    return out_arr


def tv_value(double[:, ::1] u):
    cdef Py_ssize_t h = u.shape[0], w = u.shape[1], i, j
    cdef double acc = 0.0, dx, dy
    for i in range(h):
        for j in range(w):
            dx = u[i, j + 1] - u[i, j] if j < w - 1 else 0.0
            dy = u[i + 1, j] - u[i, j] if i < h - 1 else 0.0
            acc += sqrt(dx * dx + dy * dy)
    return acc


def radon2d(double[:, ::1] u, double[::1] cos_t, double[::1] sin_t, Py_ssize_t n_det):
    cdef Py_ssize_t h = u.shape[0], w = u.shape[1]
    cdef Py_ssize_t n_angles = cos_t.shape[0], a, i, j, k0
    cdef double half = 0.5 * (n_det - 1)
    cdef double cx = 0.5 * (w - 1), cy = 0.5 * (h - 1)
    cdef double tk, frac, val
    out_arr = np.zeros((n_angles, n_det), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for a in range(n_angles):
        for i in range(h):
            for j in range(w):
                tk = (j - cx) * cos_t[a] + (i - cy) * sin_t[a] + half
                k0 = <Py_ssize_t>floor(tk)
                frac = tk - k0
                val = u[i, j]
                if 0 <= k0 < n_det:
                    out[a, k0] += val * (1.0 - frac)
                if 0 <= k0 + 1 < n_det:
                    out[a, k0 + 1] += val * frac
    return out_arr


def backproject2d(double[:, ::1] s, double[::1] cos_t, double[::1] sin_t,
                  Py_ssize_t h, Py_ssize_t w):
    cdef Py_ssize_t n_angles = s.shape[0], n_det = s.shape[1], a, i, j, k0
    cdef double half = 0.5 * (n_det - 1)
    cdef double cx = 0.5 * (w - 1), cy = 0.5 * (h - 1)
    cdef double tk, frac, acc
    out_arr = np.zeros((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for a in range(n_angles):
        for i in range(h):
            for j in range(w):
                tk = (j - cx) * cos_t[a] + (i - cy) * sin_t[a] + half
                k0 = <Py_ssize_t>floor(tk)
                frac = tk - k0
                acc = 0.0
                if 0 <= k0 < n_det:
                    acc += s[a, k0] * (1.0 - frac)
                if 0 <= k0 + 1 < n_det:
                    acc += s[a, k0 + 1] * frac
                out[i, j] += acc
    return out_arr
