"""Outer loop: Nesterov-accelerated descent on lam with Armijo backtracking.

The upper-level objective is the tracking loss L(lam) = 0.5*||u_lam -
u_gt||^2 where u_lam is the fixed-budget unrolled solver output, so L is an
ordinary deterministic function of lam and plain line-searched descent
applies.  The gradient at the extrapolated point comes from one of the
unrolled-differentiation strategies; the line-search probes only need
forward solves.
"""

import math
from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np

from .linops import as_image
from .solvers import (DenoiseProblem, ReconProblem, StepMode, cv_denoise,
                      fista_cv_reconstruct, fista_t_update)
from .unroll import Strategy, grad_lambda_denoise, grad_lambda_recon

ARMIJO_C1 = 1e-4


def loss(u, u_gt):
    """Squared tracking loss 0.5*||u - u_gt||^2."""
    u = as_image(u)
    u_gt = as_image(u_gt)
    if u.shape != u_gt.shape:
        raise ValueError(f"shape mismatch: {u.shape} vs {u_gt.shape}")
    d = u - u_gt
    return 0.5 * float(np.vdot(d, d))


class LineSearchError(RuntimeError):
    """Backtracking exhausted: bad gradient or a non-smooth kink."""


ArmijoResult = namedtuple("ArmijoResult", "gamma backtracks value")


def armijo_search(phi, lambda0, d, gamma_init, c1=ARMIJO_C1, lam_min=0.0,
                  max_backtracks=50, phi0=None):
    """Largest gamma in {gamma_init * 2^-j} passing the sufficient decrease
    test phi(lambda0 - gamma*d) <= phi(lambda0) - c1*gamma*d^2 with the
    candidate kept at or above ``lam_min``.

    Returns (gamma, backtracks, value-at-accepted-point).  ``phi0`` lets the
    caller reuse an already computed phi(lambda0).
    """
    if gamma_init <= 0:
        raise ValueError(f"gamma_init must be positive, got {gamma_init}")
    if phi0 is None:
        phi0 = phi(lambda0)
    gamma = float(gamma_init)
    for j in range(max_backtracks + 1):
        cand = lambda0 - gamma * d
        if cand >= lam_min:
            val = phi(cand)
            if val <= phi0 - c1 * gamma * d * d:
                return ArmijoResult(gamma, j, val)
        gamma *= 0.5
    raise LineSearchError(
        f"no Armijo step within {max_backtracks} halvings from "
        f"gamma_init={gamma_init} (gradient {d} at lambda {lambda0})")


@dataclass
class TraceRow:
    """State of one outer iteration; ``accepted_loss`` is L at the accepted
    step (kept in memory for the descent check, not part of the CSV)."""

    k: int
    lam: float
    lam_hat: float
    loss: float
    grad: float
    step: float
    backtracks: int
    tape_bytes: int
    accepted_loss: float = math.nan


@dataclass
class BilevelTrace:
    rows: list = field(default_factory=list)

    def armijo_satisfied(self, c1=ARMIJO_C1):
        """The sufficient-decrease inequality, re-checked from the trace."""
        return all(r.accepted_loss <= r.loss - c1 * r.step * r.grad * r.grad
                   for r in self.rows if not math.isnan(r.accepted_loss))


class BilevelProblem:
    """Inner problem template with lam left free, plus the ground truth.

    ``loss_value(lam)`` runs the fixed-budget forward solve; the
    ``loss_and_grad(lam)`` strategy is fixed at construction.  Both are
    deterministic in lam, which makes the whole outer trace reproducible.
    """

    def __init__(self, loss_value, loss_and_grad):
        self.loss_value = loss_value
        self.loss_and_grad = loss_and_grad

    @classmethod
    def denoising(cls, v, u_gt, iters, strategy=Strategy.ACV):
        v = as_image(v)
        u_gt = as_image(u_gt)

        def value(lam):
            u, _ = cv_denoise(DenoiseProblem(v, lam), iters, StepMode.CV)
            return loss(u, u_gt)

        def value_and_grad(lam):
            return grad_lambda_denoise(DenoiseProblem(v, lam), u_gt, iters,
                                       strategy)

        return cls(value, value_and_grad)

    @classmethod
    def reconstruction(cls, a, v, beta, u_gt, outer_iters, inner_iters,
                       strategy=Strategy.ACV, warm_start=True):
        u_gt = as_image(u_gt)

        def value(lam):
            u = fista_cv_reconstruct(ReconProblem(a, v, lam, beta),
                                     outer_iters, inner_iters, warm_start)
            return loss(u, u_gt)

        def value_and_grad(lam):
            return grad_lambda_recon(ReconProblem(a, v, lam, beta), u_gt,
                                     outer_iters, inner_iters, strategy,
                                     warm_start)

        return cls(value, value_and_grad)


def ngd_learn(problem, lambda0, outer_iters=60, rel_tol=1e-4, c1=ARMIJO_C1,
              lam_min_factor=1e-8, restart=True):
    """Nesterov-accelerated gradient descent on lam with Armijo steps.

    Gradient at the extrapolated point, backtracked step, FISTA momentum on
    lam; every probed lam stays at or above lam_min = lam_min_factor *
    lambda0.  ``restart`` applies the standard gradient-sign adaptive
    restart (momentum resets when it points against the descent direction),
    which suppresses the ringing plain momentum exhibits near the minimum.
    Stops when the accepted lam moves by less than ``rel_tol`` relatively,
    or after ``outer_iters`` iterations.  Returns (lam_star, trace).
    """
    if lambda0 <= 0:
        raise ValueError(f"lambda0 must be positive, got {lambda0}")
    lam_min = lam_min_factor * lambda0
    lam = lam_hat = float(lambda0)
    t = 1.0
    gamma_prev = None
    d_prev = 0.0
    trace = BilevelTrace()
    for k in range(outer_iters):
        lg = problem.loss_and_grad(lam_hat)
        d = lg.grad
        if lam_hat <= lam_min and d > 0:
            # descent points below the positivity floor: the constrained
            # minimizer is the floor itself, so stop there
            trace.rows.append(TraceRow(k, lam, lam_hat, lg.value, d, 0.0, 0,
                                       lg.saved_bytes, accepted_loss=lg.value))
            lam = lam_min
            break
        if gamma_prev is None:
            gamma_init = 0.1 * lam_hat / abs(d) if d != 0 else 1.0
        else:
            gamma_init = 2.0 * gamma_prev
        res = armijo_search(problem.loss_value, lam_hat, d, gamma_init,
                            c1=c1, lam_min=lam_min, phi0=lg.value)
        lam_next = max(lam_hat - res.gamma * d, lam_min)
        if restart and d * d_prev < 0:
            # sign flip of the scalar gradient: momentum points the wrong
            # way, so reset it (adaptive restart) to stop the ringing
            t = 1.0
        d_prev = d
        t_next = fista_t_update(t)
        lam_hat_next = lam_next + ((t - 1.0) / t_next) * (lam_next - lam)
        lam_hat_next = max(lam_hat_next, lam_min)
        trace.rows.append(TraceRow(k, lam, lam_hat, lg.value, d, res.gamma,
                                   res.backtracks, lg.saved_bytes,
                                   accepted_loss=res.value))
        converged = abs(lam_next - lam) <= rel_tol * abs(lam)
        lam, lam_hat, t, gamma_prev = lam_next, lam_hat_next, t_next, res.gamma
        if converged:
            break
    return lam, trace


def grid_search(problem, lambdas):
    """Brute-force oracle: evaluate the loss on a fixed lam grid."""
    lambdas = np.asarray(lambdas, dtype=np.float64)
    if lambdas.size == 0 or np.any(lambdas <= 0):
        raise ValueError("grid must be non-empty with positive lambdas")
    losses = np.array([problem.loss_value(l) for l in lambdas])
    return float(lambdas[int(np.argmin(losses))]), losses


def log_grid(lo, hi, n):
    """n logarithmically spaced points in [lo, hi]."""
    if lo <= 0 or hi <= lo or n < 2:
        raise ValueError("need 0 < lo < hi and n >= 2")
    return np.exp(np.linspace(math.log(lo), math.log(hi), n))
