"""Projections, proximity operators and the scalar ramp/step maps.

The two projections (non-negative orthant, per-pixel 2-balls) are the only
non-linear pieces of the denoising iterations; both are nonexpansive and
idempotent.
"""

import numpy as np

from . import backend
from .linops import as_dual, as_image


def proj_nonneg(u):
    """Componentwise projection onto u >= 0."""
    return backend.proj_nonneg(as_image(u))


def proj_l2ball(w, radius):
    """Project each pixel's 2-vector onto the ball of the given radius.

    Per pixel: w / max(1, |w|_2 / radius).  The max factor is >= 1, so no
    division by a vanishing norm can occur.
    """
    if radius <= 0:
        raise ValueError(f"ball radius must be positive, got {radius}")
    return backend.proj_l2ball(as_dual(w), float(radius))


def ramp(x):
    """max(0, x), elementwise."""
    return np.maximum(x, 0.0)


def heaviside(x, at_zero=1.0):
    """Unit step, 0 for x < 0 and 1 for x > 0; ``at_zero`` fixes H(0).

    Forward definitions use at_zero=1; backward formulas use at_zero=0 (the
    subgradient convention for the kink of the ramp).
    """
    return np.heaviside(x, at_zero)


def prox_sql2(u, v, tau):
    """Prox of tau * 0.5*||. - v||^2, i.e. (u + tau*v) / (1 + tau)."""
    if tau < 0:
        raise ValueError(f"tau must be non-negative, got {tau}")
    return (u + tau * v) / (1.0 + tau)


def check_positive(name, value):
    """Validate a strictly positive scalar parameter (e.g. lambda, mu)."""
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {value}")
    return float(value)
