"""Synthetic ground-truth images and the Gaussian noise model.

All generators are deterministic in their seed and produce piecewise-constant
non-negative images with values in [0, 1], the regime the non-negativity
constrained TV model assumes.
"""

from dataclasses import dataclass

import numpy as np

from . import backend
from .linops import as_image

PHANTOM_KINDS = ("disk", "blocks", "shepp_logan")

# Modified Shepp-Logan ellipses: (added value, a, b, x0, y0, angle_deg) in
# the [-1, 1]^2 unit square. Summed intensities stay within [0, 1].
_SHEPP_LOGAN = [
    (1.00, 0.6900, 0.9200, 0.00, 0.0000, 0.0),
    (-0.80, 0.6624, 0.8740, 0.00, -0.0184, 0.0),
    (-0.20, 0.1100, 0.3100, 0.22, 0.0000, -18.0),
    (-0.20, 0.1600, 0.4100, -0.22, 0.0000, 18.0),
    (0.10, 0.2100, 0.2500, 0.00, 0.3500, 0.0),
    (0.10, 0.0460, 0.0460, 0.00, 0.1000, 0.0),
    (0.10, 0.0460, 0.0460, 0.00, -0.1000, 0.0),
    (0.10, 0.0460, 0.0230, -0.08, -0.6050, 0.0),
    (0.10, 0.0230, 0.0230, 0.00, -0.6060, 0.0),
    (0.10, 0.0230, 0.0460, 0.06, -0.6050, 0.0),
]


@dataclass
class PhantomSpec:
    kind: str = "blocks"
    size: tuple = (64, 64)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in PHANTOM_KINDS:
            raise ValueError(f"unknown phantom kind {self.kind!r}; "
                             f"choose from {PHANTOM_KINDS}")
        h, w = self.size
        if h < 8 or w < 8:
            raise ValueError(f"phantom size must be at least 8x8, got {self.size}")


@dataclass
class NoiseSpec:
    sigma: float = 0.0
    seed: int = 0
    model: str = "gaussian"

    def __post_init__(self):
        if self.model != "gaussian":
            raise ValueError(f"unknown noise model {self.model!r}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")


def make_phantom(spec):
    """Generate the phantom described by ``spec``; values in [0, 1]."""
    h, w = spec.size
    if spec.kind == "disk":
        return _disk(h, w)
    if spec.kind == "blocks":
        return _blocks(h, w, spec.seed)
    return _shepp_logan(h, w)


def _disk(h, w):
    yy, xx = np.mgrid[0:h, 0:w]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    r = 0.35 * min(h, w)
    out = ((yy - cy) ** 2 + (xx - cx) ** 2 <= r * r).astype(np.float64)
    return out


def _blocks(h, w, seed):
    rng = np.random.default_rng(seed)
    out = np.zeros((h, w), dtype=np.float64)
    n_rects = 6
    for _ in range(n_rects):
        rh = int(rng.integers(h // 6, max(h // 2, h // 6 + 1)))
        rw = int(rng.integers(w // 6, max(w // 2, w // 6 + 1)))
        i0 = int(rng.integers(0, h - rh))
        j0 = int(rng.integers(0, w - rw))
        val = float(rng.uniform(0.2, 1.0))
        out[i0:i0 + rh, j0:j0 + rw] = val
    return out


def _shepp_logan(h, w):
    ys = np.linspace(-1.0, 1.0, h)
    xs = np.linspace(-1.0, 1.0, w)
    xg, yg = np.meshgrid(xs, -ys)
    out = np.zeros((h, w), dtype=np.float64)
    for val, a, b, x0, y0, ang in _SHEPP_LOGAN:
        th = np.deg2rad(ang)
        xr = (xg - x0) * np.cos(th) + (yg - y0) * np.sin(th)
        yr = -(xg - x0) * np.sin(th) + (yg - y0) * np.cos(th)
        out[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += val
    return np.clip(out, 0.0, 1.0)


def add_noise(x, spec):
    """Add sigma * N(0, 1) noise drawn from the spec's seeded stream."""
    rng = np.random.default_rng(spec.seed)
    return x + spec.sigma * rng.standard_normal(np.shape(x))


def tv_value(u):
    """Isotropic total variation of an image (fused backend kernel)."""
    return backend.tv_value(as_image(u))
