"""Pure numpy kernels: reference implementations of the hot inner-loop ops.

The Cython module ``tvbilevel._core`` mirrors these signatures; either one is
picked at import by :mod:`tvbilevel.backend`.  All kernels are deterministic
elementwise/stencil maps on C-contiguous float64 arrays.

Conventions: images are (H, W), dual fields are (2, H, W) with channel 0 the
x (column) differences and channel 1 the y (row) differences; sinograms are
(n_angles, n_det).
"""

import numpy as np


def grad2d(u):
    """Forward-difference gradient with replicate (Neumann) boundary.

    Last column of the x channel and last row of the y channel are zero.
    """
    h, w = u.shape
    out = np.zeros((2, h, w), dtype=np.float64)
    out[0, :, : w - 1] = u[:, 1:] - u[:, : w - 1]
    out[1, : h - 1, :] = u[1:, :] - u[: h - 1, :]
    return out


def div2d(w):
    """Discrete divergence, the exact negative adjoint of :func:`grad2d`."""
    _, h, ww = w.shape
    out = np.zeros((h, ww), dtype=np.float64)
    out[:, 0] += w[0, :, 0]
    out[:, 1 : ww - 1] += w[0, :, 1 : ww - 1] - w[0, :, : ww - 2]
    out[:, ww - 1] -= w[0, :, ww - 2]
    out[0, :] += w[1, 0, :]
    out[1 : h - 1, :] += w[1, 1 : h - 1, :] - w[1, : h - 2, :]
    out[h - 1, :] -= w[1, h - 2, :]
    return out


def proj_nonneg(u):
    """Componentwise projection onto the non-negative orthant."""
    return np.maximum(u, 0.0)


def pixel_norm(w):
    """Per-pixel Euclidean norm of a dual field, shape (H, W)."""
    return np.sqrt(w[0] * w[0] + w[1] * w[1])


def proj_l2ball(w, radius):
    """Per-pixel projection of a dual field onto 2-balls of given radius."""
    factor = np.maximum(1.0, pixel_norm(w) / radius)
    return w / factor


def tv_value(u):
    """Isotropic total variation: sum of per-pixel gradient magnitudes."""
    g = grad2d(u)
    return float(np.sqrt(g[0] * g[0] + g[1] * g[1]).sum())


def radon2d(u, cos_t, sin_t, n_det):
    """Pixel-driven parallel-beam projection with linear detector splat.

    Pixel (i, j) sits at x = j - (W-1)/2, y = i - (H-1)/2; angle a maps it to
    detector coordinate x*cos + y*sin, splat linearly onto the two nearest
    bins.  bincount keeps the per-bin accumulation order fixed (row-major
    pixel order), so results are bit-reproducible run to run.
    """
    h, w = u.shape
    n_angles = cos_t.shape[0]
    half = 0.5 * (n_det - 1)
    x = np.arange(w, dtype=np.float64) - 0.5 * (w - 1)
    y = np.arange(h, dtype=np.float64) - 0.5 * (h - 1)
    xg, yg = np.meshgrid(x, y)
    out = np.empty((n_angles, n_det), dtype=np.float64)
    uflat = u.ravel()
    for a in range(n_angles):
        tk = (xg * cos_t[a] + yg * sin_t[a]).ravel() + half
        k0 = np.floor(tk).astype(np.intp)
        frac = tk - k0
        w0 = uflat * (1.0 - frac)
        w1 = uflat * frac
        ok0 = (k0 >= 0) & (k0 < n_det)
        ok1 = (k0 + 1 >= 0) & (k0 + 1 < n_det)
        row = np.bincount(np.where(ok0, k0, 0), np.where(ok0, w0, 0.0),
                          minlength=n_det)
        row += np.bincount(np.where(ok1, k0 + 1, 0), np.where(ok1, w1, 0.0),
                           minlength=n_det)
        out[a] = row
    return out


def backproject2d(s, cos_t, sin_t, h, w):
    """Exact transpose of :func:`radon2d` (gather with the same weights)."""
    n_angles, n_det = s.shape
    half = 0.5 * (n_det - 1)
    x = np.arange(w, dtype=np.float64) - 0.5 * (w - 1)
    y = np.arange(h, dtype=np.float64) - 0.5 * (h - 1)
    xg, yg = np.meshgrid(x, y)
    out = np.zeros((h, w), dtype=np.float64)
    for a in range(n_angles):
        tk = xg * cos_t[a] + yg * sin_t[a] + half
        k0 = np.floor(tk).astype(np.intp)
        frac = tk - k0
        ok0 = (k0 >= 0) & (k0 < n_det)
        ok1 = (k0 + 1 >= 0) & (k0 + 1 < n_det)
        row = s[a]
        out += np.where(ok0, row[np.where(ok0, k0, 0)] * (1.0 - frac), 0.0)
        out += np.where(ok1, row[np.where(ok1, k0 + 1, 0)] * frac, 0.0)
    return out
