"""Cross-backend consistency: compiled kernels vs the numpy reference."""

import numpy as np
import pytest

from tvbilevel import backend
from tvbilevel import _kernels_py as ref

core = pytest.importorskip("tvbilevel._core")

RNG = np.random.default_rng(42)
U = RNG.standard_normal((37, 29))
W = 2.0 * RNG.standard_normal((2, 37, 29))
COS = np.cos(np.linspace(0, np.pi, 15, endpoint=False))
SIN = np.sin(np.linspace(0, np.pi, 15, endpoint=False))


def test_stencils_bitwise_equal():
    assert np.array_equal(core.grad2d(U), ref.grad2d(U))
    assert np.array_equal(core.div2d(W), ref.div2d(W))
    assert np.array_equal(core.proj_nonneg(U), ref.proj_nonneg(U))
    assert np.array_equal(core.pixel_norm(W), ref.pixel_norm(W))


def test_ball_projection_bitwise_equal():
    for radius in (0.3, 1.0, 4.0):
        assert np.array_equal(core.proj_l2ball(W, radius),
                              ref.proj_l2ball(W, radius))


def test_tv_close():
    a, b = core.tv_value(U), ref.tv_value(U)
    assert abs(a - b) <= 1e-12 * abs(b)


def test_radon_pair_close():
    n_det = 52
    s_c = core.radon2d(U, COS, SIN, n_det)
    s_p = ref.radon2d(U, COS, SIN, n_det)
    assert np.abs(s_c - s_p).max() <= 1e-12 * np.abs(s_p).max()
    b_c = core.backproject2d(s_p, COS, SIN, 37, 29)
    b_p = ref.backproject2d(s_p, COS, SIN, 37, 29)
    assert np.abs(b_c - b_p).max() <= 1e-12 * np.abs(b_p).max()


def test_solver_run_agrees_across_backends():
    from tvbilevel import DenoiseProblem, StepMode, cv_denoise

    v = np.abs(U[:16, :16])
    p = DenoiseProblem(v, 0.3)
    prev = backend.set_backend("python")
    try:
        u_py, _ = cv_denoise(p, 200, StepMode.CV)
    finally:
        backend.set_backend(prev)
    u_cy, _ = cv_denoise(p, 200, StepMode.CV)
    assert np.abs(u_cy - u_py).max() <= 1e-12 * max(1.0, np.abs(u_py).max())


def test_backend_switching_api():
    assert set(backend.available_backends()) == {"cython", "python"}
    prev = backend.set_backend("python")
    assert backend.active_backend() == "python"
    backend.set_backend(prev)
    with pytest.raises(ValueError):
        backend.set_backend("fortran")
