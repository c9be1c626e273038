"""Iterative solvers for the TV-regularized model with non-negativity.

Two problem classes are covered:

* denoising, 0.5*||u - v||^2 + lam*tv(u) + indicator(u >= 0), solved by
  gradient projection (GP), its accelerated variant (FGP), and the Condat-Vu
  primal-dual iteration specialized to this problem (two step-size modes);
* reconstruction, 0.5*||A u - v||^2 + lam*tv(u) + indicator(u >= 0), solved
  by FISTA whose prox step is approximated by a few inner Condat-Vu
  iterations (radius gamma*lam on the dual ball).

With the GP-equivalent step sizes (primal scale lam, dual step
1/(lam*||grad||^2), unit dual ball) the Condat-Vu primal update telescopes to
exactly the GP update, so ``cv_denoise(mode=StepMode.GP)`` reproduces
``gp_denoise`` to the last bit.  In the lam-free mode the step sizes are
(1, 1/||grad||^2) and lam moves into the dual ball radius instead; that is
the form whose unrolled derivative needs the least saved state.

All solvers run a fixed iteration count (no residual stopping) so the maps
they define are deterministic and single-valued in lam, which the unrolled
differentiation relies on.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np

from .linops import GRAD_NORM_SQ, Sinogram, as_image, div2d, grad2d
from .phantoms import tv_value
from .prox import check_positive, proj_l2ball, proj_nonneg


class StepMode(enum.Enum):
    """Step-size regimes for the denoising Condat-Vu iteration."""

    GP = "gp"   # primal scale lam, dual step 1/(lam*||grad||^2), unit ball
    CV = "cv"   # primal scale 1, dual step 1/||grad||^2, ball radius lam


@dataclass
class DenoiseProblem:
    """Noisy image plus regularization weight (weight strictly positive)."""

    v: np.ndarray
    lam: float

    def __post_init__(self):
        self.v = as_image(self.v)
        self.lam = check_positive("lambda", self.lam)


@dataclass
class ReconProblem:
    """Forward operator, data, weight, and beta = ||A||^2.

    lam = 0 is allowed and turns the prox into the bare non-negativity
    projection (the exact limit), which the FISTA rate check uses.
    """

    A: object
    v: object
    lam: float
    beta: float

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lambda must be non-negative, got {self.lam}")
        self.beta = check_positive("beta", self.beta)

    @property
    def data(self):
        return self.v.data if isinstance(self.v, Sinogram) else np.asarray(self.v, dtype=np.float64)


def fista_t_update(t):
    """Momentum sequence t_next = (1 + sqrt(1 + 4 t^2)) / 2; requires t >= 1."""
    if t < 1.0:
        raise ValueError(f"momentum parameter must be >= 1, got {t}")
    return 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))


def _check_iters(iters):
    if iters < 1:
        raise ValueError(f"iteration count must be >= 1, got {iters}")


def _dual_init(w0, shape):
    if w0 is None:
        return np.zeros((2,) + shape, dtype=np.float64)
    w0 = np.array(w0, dtype=np.float64, copy=True)
    if w0.shape != (2,) + shape:
        raise ValueError(f"dual variable shape {w0.shape} != {(2,) + shape}")
    return w0


def gp_denoise(p, iters, w0=None, callback=None):
    """Gradient projection on the dual of the denoising problem.

    Returns the last primal iterate (computed from the second-to-last dual)
    and the final dual variable.  ``w0`` must be unit-ball feasible.
    """
    _check_iters(iters)
    w = _dual_init(w0, p.v.shape)
    if np.any(w[0] * w[0] + w[1] * w[1] > 1.0 + 1e-12):
        raise ValueError("w0 must satisfy the unit dual-ball constraint")
    step = 1.0 / (p.lam * GRAD_NORM_SQ)
    u = None
    for k in range(iters):
        u = proj_nonneg(p.v + p.lam * div2d(w))
        w = proj_l2ball(w + step * grad2d(u), 1.0)
        if callback is not None:
            callback(k, u, w)
    return u, w


def fgp_denoise(p, iters, w0=None, callback=None):
    """GP with FISTA extrapolation on the dual variable."""
    _check_iters(iters)
    w = _dual_init(w0, p.v.shape)
    if np.any(w[0] * w[0] + w[1] * w[1] > 1.0 + 1e-12):
        raise ValueError("w0 must satisfy the unit dual-ball constraint")
    step = 1.0 / (p.lam * GRAD_NORM_SQ)
    y = w.copy()
    t = 1.0
    u = None
    for k in range(iters):
        u = proj_nonneg(p.v + p.lam * div2d(y))
        w_next = proj_l2ball(y + step * grad2d(u), 1.0)
        t_next = fista_t_update(t)
        y = w_next + ((t - 1.0) / t_next) * (w_next - w)
        w, t = w_next, t_next
        if callback is not None:
            callback(k, u, w)
    return u, w


def cv_denoise(p, iters, mode=StepMode.CV, u0=None, w0=None, callback=None):
    """Condat-Vu for the denoising problem, in either step-size mode.

    The primal update telescopes (the u_k terms cancel exactly at these step
    sizes), so ``u0`` only seeds the state and never enters the iteration.
    """
    _check_iters(iters)
    mode = StepMode(mode)
    w = _dual_init(w0, p.v.shape)
    if mode is StepMode.GP:
        sigma = 1.0 / (p.lam * GRAD_NORM_SQ)
        radius = 1.0
    else:
        sigma = 1.0 / GRAD_NORM_SQ
        radius = p.lam
    u = proj_nonneg(p.v) if u0 is None else as_image(u0)
    for k in range(iters):
        if mode is StepMode.GP:
            u = proj_nonneg(p.v + p.lam * div2d(w))
        else:
            u = proj_nonneg(p.v + div2d(w))
        w = proj_l2ball(w + sigma * grad2d(u), radius)
        if callback is not None:
            callback(k, u, w)
    return u, w


def default_recon_init(p):
    """Backprojection of the data, clipped and scaled into [0, 1]."""
    bp = proj_nonneg(p.A.adjoint(p.data))
    m = float(bp.max())
    return bp / m if m > 0 else bp


def fista_cv_reconstruct(p, outer_iters, inner_iters, warm_start=True,
                         u0=None, callback=None):
    """FISTA on the reconstruction problem with inner Condat-Vu prox solves.

    Each outer step takes the gradient step z = u_hat - gamma*A*(A u_hat - v)
    with gamma = 1/beta, then approximates prox of gamma*lam*(tv + nonneg)
    at z by ``inner_iters`` Condat-Vu iterations with dual ball radius
    gamma*lam.  ``warm_start`` carries the inner dual variable across outer
    iterations (recommended for small inner counts).
    """
    _check_iters(outer_iters)
    _check_iters(inner_iters)
    v = p.data
    gamma = 1.0 / p.beta
    mu = gamma * p.lam
    h, w_ = p.A.domain_shape
    u = default_recon_init(p) if u0 is None else as_image(u0).copy()
    u_hat = u
    w = np.zeros((2, h, w_), dtype=np.float64)
    t = 1.0
    for k in range(outer_iters):
        z = u_hat - gamma * p.A.adjoint(p.A.apply(u_hat) - v)
        if mu > 0:
            if not warm_start:
                w = np.zeros((2, h, w_), dtype=np.float64)
            u_next, w = cv_denoise(DenoiseProblem(z, mu), inner_iters,
                                   StepMode.CV, w0=w)
        else:
            u_next = proj_nonneg(z)
        t_next = fista_t_update(t)
        if k < outer_iters - 1:
            u_hat = u_next + ((t - 1.0) / t_next) * (u_next - u)
        u, t = u_next, t_next
        if callback is not None:
            callback(k, u)
    return u


def denoise_objective(u, p):
    """0.5*||u - v||^2 + lam*tv(u) (the indicator term is 0 on feasible u)."""
    d = u - p.v
    return 0.5 * float(np.vdot(d, d)) + p.lam * tv_value(u)


def recon_objective(u, p):
    """0.5*||A u - v||^2 + lam*tv(u)."""
    r = p.A.apply(u) - p.data
    return 0.5 * float(np.vdot(r, r)) + p.lam * tv_value(u)
