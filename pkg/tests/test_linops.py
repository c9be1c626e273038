import numpy as np
import pytest

from tvbilevel import (GRAD_NORM_SQ, DiagonalMap, Grad2D, IdentityMap,
                       MatrixMap, Sinogram, TomoProjector, backproject2d,
                       div2d, grad2d, make_phantom, max_adjoint_residual,
                       power_method, radon2d)
from tvbilevel.phantoms import PhantomSpec


def test_grad2d_hand_example():
    u = np.array([[0.0, 1.0], [2.0, 3.0]])
    g = grad2d(u)
    assert np.array_equal(g[0], [[1.0, 0.0], [1.0, 0.0]])
    assert np.array_equal(g[1], [[2.0, 2.0], [0.0, 0.0]])


def test_grad2d_constant_is_zero():
    assert not np.any(grad2d(np.full((9, 7), 3.5)))


def test_grad2d_neumann_boundary():
    rng = np.random.default_rng(0)
    g = grad2d(rng.standard_normal((12, 15)))
    assert not np.any(g[0][:, -1])
    assert not np.any(g[1][-1, :])


def test_div_is_negative_adjoint_of_grad():
    rng = np.random.default_rng(1)
    u = rng.standard_normal((16, 16))
    w = rng.standard_normal((2, 16, 16))
    lhs = np.vdot(grad2d(u), w)
    rhs = -np.vdot(u, div2d(w))
    assert abs(lhs - rhs) <= 1e-12 * abs(lhs)


def test_div_adjoint_over_2x2_basis():
    # check <grad e_ij, w> = -<e_ij, div w> for every basis image
    rng = np.random.default_rng(2)
    w = rng.standard_normal((2, 2, 2))
    d = div2d(w)
    for i in range(2):
        for j in range(2):
            e = np.zeros((2, 2))
            e[i, j] = 1.0
            assert np.vdot(grad2d(e), w) == pytest.approx(-d[i, j], abs=1e-13)


def test_div_impulse_stencil():
    w = np.zeros((2, 4, 4))
    w[0, 1, 1] = 1.0
    d = div2d(w)
    assert d[1, 1] == 1.0 and d[1, 2] == -1.0
    assert np.count_nonzero(d) == 2


def test_linearity():
    rng = np.random.default_rng(3)
    u, z = rng.standard_normal((2, 10, 11))
    a, b = 1.7, -0.3
    lhs = grad2d(a * u + b * z)
    rhs = a * grad2d(u) + b * grad2d(z)
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(rhs)


@pytest.mark.parametrize("op", [
    Grad2D(13, 9),
    IdentityMap((8, 8)),
    TomoProjector(12, 12, np.linspace(0, np.pi, 10, endpoint=False)),
])
def test_adjoint_property_random(op):
    assert max_adjoint_residual(op, trials=100, seed=0) <= 1e-10


def test_power_method_identity():
    assert power_method(IdentityMap((8, 8))) == pytest.approx(1.0, abs=1e-8)


def test_power_method_grad_bound():
    est = power_method(Grad2D(64, 64))
    assert 7.5 <= est <= GRAD_NORM_SQ + 1e-9


def test_power_method_explicit_matrix():
    op = MatrixMap(np.diag([3.0, 2.0, 1.0]))
    assert power_method(op) == pytest.approx(9.0, abs=1e-8)


def test_power_method_monotone():
    op = MatrixMap(np.diag([3.0, 2.9, 1.0]))
    ests = [power_method(op, iters=k, seed=4, tol=0.0) for k in range(1, 12)]
    for a, b in zip(ests, ests[1:]):
        assert b >= a - 1e-12 * abs(a)


def test_power_method_deterministic():
    op = Grad2D(16, 16)
    assert power_method(op, seed=5) == power_method(op, seed=5)


def test_radon_zero_image():
    angles = np.linspace(0, np.pi, 8, endpoint=False)
    s = radon2d(np.zeros((16, 16)), angles)
    assert not np.any(s.data)


def test_radon_disk_rotation_invariance():
    # single bins alias at the binary disk edge; compare profiles at the
    # splat-footprint scale (5-bin moving average)
    disk = make_phantom(PhantomSpec("disk", (32, 32)))
    s = radon2d(disk, np.linspace(0, np.pi, 24, endpoint=False)).data
    kernel = np.ones(5) / 5
    smooth = np.apply_along_axis(lambda r: np.convolve(r, kernel, "same"), 1, s)
    assert np.abs(smooth - smooth[0]).max() <= 0.02 * s.max()
    # total mass per angle is conserved exactly by the splat weights
    sums = s.sum(axis=1)
    assert np.abs(sums - sums[0]).max() <= 1e-10 * abs(sums[0])


def test_radon_requires_angles():
    with pytest.raises(ValueError):
        TomoProjector(8, 8, np.array([]))
    with pytest.raises(ValueError):
        TomoProjector(8, 8, np.array([0.0, 0.0]))  # not strictly increasing
    with pytest.raises(ValueError):
        TomoProjector(8, 8, np.array([0.0, np.pi]))  # out of range


def test_radon_detector_too_small():
    with pytest.raises(ValueError):
        TomoProjector(16, 16, np.linspace(0, np.pi, 4, endpoint=False), n_det=10)


def test_backproject_matches_operator_adjoint():
    rng = np.random.default_rng(6)
    angles = np.linspace(0, np.pi, 11, endpoint=False)
    u = rng.standard_normal((14, 14))
    sino = radon2d(u, angles)
    op = TomoProjector(14, 14, angles, sino.n_det)
    assert np.array_equal(backproject2d(sino, 14, 14), op.adjoint(sino.data))


def test_sinogram_validation():
    with pytest.raises(ValueError):
        Sinogram(np.zeros((3, 5)), np.array([0.0, 0.1]))  # count mismatch
    with pytest.raises(ValueError):
        Sinogram(np.zeros((2, 5)), np.array([0.2, 0.1]))  # not increasing


def test_diagonal_map_is_self_adjoint():
    rng = np.random.default_rng(7)
    op = DiagonalMap(rng.random((6, 6)) + 0.5)
    assert max_adjoint_residual(op, trials=20, seed=1) <= 1e-14
