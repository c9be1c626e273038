"""Linear operators with matched adjoints, plus spectral-norm estimation.

Images are float64 arrays of shape (H, W), dual fields (2, H, W), sinograms
(n_angles, n_det).  Every operator here ships an exact-transpose adjoint so
that adjoint identities hold to float64 round-off, which both the primal-dual
convergence theory and the finite-difference gradient checks rely on.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import backend

# Upper bound on ||grad2d||^2 in 2D; the solvers use it as a step-size
# constant instead of a per-problem power-method estimate.
GRAD_NORM_SQ = 8.0


def as_image(u):
    u = np.ascontiguousarray(u, dtype=np.float64)
    if u.ndim != 2:
        raise ValueError(f"image must be 2-D, got shape {u.shape}")
    return u


def as_dual(w):
    w = np.ascontiguousarray(w, dtype=np.float64)
    if w.ndim != 3 or w.shape[0] != 2:
        raise ValueError(f"dual field must have shape (2, H, W), got {w.shape}")
    return w


def grad2d(u):
    """Forward-difference gradient of an image, shape (2, H, W)."""
    return backend.grad2d(as_image(u))


def div2d(w):
    """Discrete divergence; satisfies <grad2d(u), w> = -<u, div2d(w)>."""
    return backend.div2d(as_dual(w))


@dataclass
class Sinogram:
    """Projection data plus its acquisition angles (radians in [0, pi))."""

    data: np.ndarray
    angles: np.ndarray

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        self.angles = np.ascontiguousarray(self.angles, dtype=np.float64)
        if self.angles.ndim != 1 or self.angles.size == 0:
            raise ValueError("angles must be a non-empty 1-D array")
        if self.data.ndim != 2 or self.data.shape[0] != self.angles.size:
            raise ValueError(
                f"sinogram shape {self.data.shape} does not match "
                f"{self.angles.size} angles")
        if np.any(self.angles < 0) or np.any(self.angles >= math.pi):
            raise ValueError("angles must lie in [0, pi)")
        if np.any(np.diff(self.angles) <= 0):
            raise ValueError("angles must be strictly increasing")

    @property
    def n_angles(self):
        return self.data.shape[0]

    @property
    def n_det(self):
        return self.data.shape[1]


class LinearMap:
    """Forward/adjoint pair between array spaces.

    Subclasses set ``domain_shape`` / ``codomain_shape`` and implement
    :meth:`apply` and :meth:`adjoint` as exact transposes of each other.
    """

    domain_shape = None
    codomain_shape = None

    def apply(self, x):
        raise NotImplementedError

    def adjoint(self, y):
        raise NotImplementedError

    def __call__(self, x):
        return self.apply(x)


class IdentityMap(LinearMap):
    def __init__(self, shape):
        self.domain_shape = tuple(shape)
        self.codomain_shape = tuple(shape)

    def apply(self, x):
        return np.array(x, dtype=np.float64, copy=True)

    adjoint = apply


class Grad2D(LinearMap):
    """The image gradient as a LinearMap (adjoint is -div2d)."""

    def __init__(self, h, w):
        self.domain_shape = (h, w)
        self.codomain_shape = (2, h, w)

    def apply(self, u):
        return grad2d(u)

    def adjoint(self, w):
        return -div2d(w)


class DiagonalMap(LinearMap):
    """Elementwise multiplication by a fixed non-negative image."""

    def __init__(self, diag):
        self.diag = as_image(diag)
        self.domain_shape = self.diag.shape
        self.codomain_shape = self.diag.shape

    def apply(self, u):
        return self.diag * u

    adjoint = apply


class MatrixMap(LinearMap):
    """Dense matrix acting on 1-D vectors; adjoint is the transpose."""

    def __init__(self, m):
        self.m = np.ascontiguousarray(m, dtype=np.float64)
        self.domain_shape = (self.m.shape[1],)
        self.codomain_shape = (self.m.shape[0],)

    def apply(self, x):
        return self.m @ x

    def adjoint(self, y):
        return self.m.T @ y


class TomoProjector(LinearMap):
    """2-D parallel-beam projector, pixel-driven with linear interpolation.

    The backprojection reuses the interpolation weights of the forward
    projection, so the pair is an exact matrix transpose.
    """

    def __init__(self, h, w, angles, n_det=None):
        angles = np.ascontiguousarray(angles, dtype=np.float64)
        if angles.ndim != 1 or angles.size == 0:
            raise ValueError("at least one projection angle is required")
        if np.any(angles < 0) or np.any(angles >= math.pi):
            raise ValueError("angles must lie in [0, pi)")
        if np.any(np.diff(angles) <= 0):
            raise ValueError("angles must be strictly increasing")
        diag = math.hypot(h, w)
        if n_det is None:
            n_det = int(math.ceil(diag)) + 1
        if n_det < diag:
            raise ValueError(
                f"n_det={n_det} is smaller than the image diagonal {diag:.2f}")
        self.angles = angles
        self.n_det = int(n_det)
        self.cos_t = np.cos(angles)
        self.sin_t = np.sin(angles)
        self.domain_shape = (h, w)
        self.codomain_shape = (angles.size, self.n_det)

    def apply(self, u):
        return backend.radon2d(as_image(u), self.cos_t, self.sin_t, self.n_det)

    def adjoint(self, s):
        s = np.ascontiguousarray(s, dtype=np.float64)
        if s.shape != self.codomain_shape:
            raise ValueError(f"sinogram shape {s.shape} != {self.codomain_shape}")
        h, w = self.domain_shape
        return backend.backproject2d(s, self.cos_t, self.sin_t, h, w)


def radon2d(u, angles, n_det=None):
    """One-shot projection; returns a :class:`Sinogram`."""
    u = as_image(u)
    op = TomoProjector(u.shape[0], u.shape[1], angles, n_det)
    return Sinogram(op.apply(u), op.angles)


def backproject2d(sino, h, w):
    """One-shot backprojection of a :class:`Sinogram` onto an (h, w) grid."""
    op = TomoProjector(h, w, sino.angles, sino.n_det)
    return op.adjoint(sino.data)


def adjoint_residual(op, rng):
    """Normalized adjoint-test residual |<Au,y> - <u,A*y>| for random u, y."""
    u = rng.standard_normal(op.domain_shape)
    y = rng.standard_normal(op.codomain_shape)
    au = op.apply(u)
    aty = op.adjoint(y)
    lhs = float(np.vdot(au, y))
    rhs = float(np.vdot(u, aty))
    scale = float(np.linalg.norm(au) * np.linalg.norm(y)) + 1e-300
    return abs(lhs - rhs) / scale


def max_adjoint_residual(op, trials=100, seed=0):
    rng = np.random.default_rng(seed)
    return max(adjoint_residual(op, rng) for _ in range(trials))


def power_method(op, iters=100, seed=0, tol=1e-9):
    """Largest eigenvalue of A*A (i.e. ||A||^2) by power iteration.

    Uses the Rayleigh quotient of A*A, which is nondecreasing across
    iterations; stops early once its relative change drops below ``tol``.
    Deterministic for a fixed seed.
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(op.domain_shape)
    if not np.any(x):
        x = rng.standard_normal(op.domain_shape)
        if not np.any(x):
            raise ValueError("power method: initial vector is zero")
    est = 0.0
    for _ in range(iters):
        y = op.adjoint(op.apply(x))
        new = float(np.vdot(x, y) / np.vdot(x, x))
        ny = float(np.linalg.norm(y))
        if ny == 0.0:
            return 0.0
        x = y / ny
        if est > 0.0 and abs(new - est) <= tol * abs(new):
            return new
        est = new
    return est
