"""Kernel backend selection: compiled core when available, numpy otherwise.

The environment variable ``TVBILEVEL_KERNELS`` (``python`` | ``cython``)
forces a backend at import; :func:`set_backend` switches at runtime (used by
the benchmark and the cross-backend tests).  Both backends satisfy the same
contract; within one backend every kernel is deterministic.
"""

import os

from . import _kernels_py

_IMPLS = {"python": _kernels_py}

try:
    from . import _core
    _IMPLS["cython"] = _core
except ImportError:
    _core = None


def _default_name():
    forced = os.environ.get("TVBILEVEL_KERNELS", "").strip().lower()
    if forced:
        if forced not in _IMPLS:
            raise ImportError(
                f"TVBILEVEL_KERNELS={forced!r} requested but that backend is "
                f"not available (have: {sorted(_IMPLS)})")
        return forced
    return "cython" if "cython" in _IMPLS else "python"


_active_name = _default_name()
_active = _IMPLS[_active_name]


def available_backends():
    return sorted(_IMPLS)


def active_backend():
    return _active_name


def set_backend(name):
    """Switch kernel backend; returns the previously active name."""
    global _active, _active_name
    if name not in _IMPLS:
        raise ValueError(f"unknown backend {name!r}; have {sorted(_IMPLS)}")
    prev = _active_name
    _active_name = name
    _active = _IMPLS[name]
    return prev


def grad2d(u):
    return _active.grad2d(u)


def div2d(w):
    return _active.div2d(w)


def proj_nonneg(u):
    return _active.proj_nonneg(u)


def pixel_norm(w):
    return _active.pixel_norm(w)


def proj_l2ball(w, radius):
    return _active.proj_l2ball(w, radius)


def tv_value(u):
    return _active.tv_value(u)


def radon2d(u, cos_t, sin_t, n_det):
    return _active.radon2d(u, cos_t, sin_t, n_det)


def backproject2d(s, cos_t, sin_t, h, w):
    return _active.backproject2d(s, cos_t, sin_t, h, w)
