import math

import numpy as np
import pytest

from tvbilevel import (DenoiseProblem, DiagonalMap, IdentityMap, NoiseSpec,
                       PhantomSpec, ReconProblem, Sinogram, StepMode,
                       TomoProjector, add_noise, cv_denoise,
                       denoise_objective, fgp_denoise, fista_cv_reconstruct,
                       fista_t_update, gp_denoise, make_phantom, power_method,
                       proj_nonneg, recon_objective)


@pytest.fixture(scope="module")
def denoise_fixture():
    gt = make_phantom(PhantomSpec("blocks", (16, 16), seed=3))
    v = add_noise(gt, NoiseSpec(0.02, seed=3))
    return gt, v


def test_fista_t_examples():
    assert fista_t_update(1.0) == pytest.approx((1 + math.sqrt(5)) / 2,
                                                abs=1e-12)
    # closed-form oracle at the golden ratio
    t = 1.6180339887
    assert fista_t_update(t) == pytest.approx(
        0.5 * (1 + math.sqrt(1 + 4 * t * t)), abs=1e-14)
    assert fista_t_update(t) == pytest.approx(2.1935270853, abs=1e-9)
    assert abs(fista_t_update(1e6) - 1e6 - 0.5) <= 1e-6


def test_fista_t_monotone_and_guard():
    t = 1.0
    for _ in range(50):
        t_next = fista_t_update(t)
        assert t_next > t >= 1.0
        t = t_next
    with pytest.raises(ValueError):
        fista_t_update(0.99)


def test_problem_validation():
    with pytest.raises(ValueError):
        DenoiseProblem(np.zeros((8, 8)), 0.0)
    with pytest.raises(ValueError):
        DenoiseProblem(np.zeros((8, 8)), -1.0)
    with pytest.raises(ValueError):
        ReconProblem(IdentityMap((4, 4)), np.zeros((4, 4)), -0.1, 1.0)
    with pytest.raises(ValueError):
        ReconProblem(IdentityMap((4, 4)), np.zeros((4, 4)), 1.0, 0.0)


def test_gp_vanishing_weight(denoise_fixture):
    _, v = denoise_fixture
    u, _ = gp_denoise(DenoiseProblem(v, 1e-8), 50)
    assert np.abs(u - proj_nonneg(v)).max() <= 1e-6


def test_gp_constant_input_one_iteration():
    v = np.full((10, 10), 0.7)
    u, _ = gp_denoise(DenoiseProblem(v, 0.3), 1)
    assert np.array_equal(u, v)


def test_gp_rejects_bad_inputs(denoise_fixture):
    _, v = denoise_fixture
    p = DenoiseProblem(v, 0.2)
    with pytest.raises(ValueError):
        gp_denoise(p, 0)
    bad_w = np.full((2, 16, 16), 2.0)
    with pytest.raises(ValueError):
        gp_denoise(p, 10, w0=bad_w)


def test_gp_equals_cv_gp_mode(denoise_fixture):
    # the dual-instance equivalence, iterate by iterate
    _, v = denoise_fixture
    p = DenoiseProblem(v, 0.2)
    gp_iters, cv_iters = [], []
    gp_denoise(p, 200, callback=lambda k, u, w: gp_iters.append(u))
    cv_denoise(p, 200, StepMode.GP, callback=lambda k, u, w: cv_iters.append(u))
    worst = max(np.linalg.norm(a - b) / np.linalg.norm(a)
                for a, b in zip(gp_iters, cv_iters))
    assert worst <= 1e-12
    assert all(np.array_equal(a, b) for a, b in zip(gp_iters, cv_iters))


def test_cv_modes_reach_same_solution(denoise_fixture):
    _, v = denoise_fixture
    p = DenoiseProblem(v, 0.2)
    u_gp, _ = gp_denoise(p, 3000)
    u_cv, _ = cv_denoise(p, 3000, StepMode.CV)
    f_gp = denoise_objective(u_gp, p)
    f_cv = denoise_objective(u_cv, p)
    assert abs(f_gp - f_cv) <= 1e-9 * abs(f_gp)


def test_cv_vanishing_weight(denoise_fixture):
    _, v = denoise_fixture
    u, _ = cv_denoise(DenoiseProblem(v, 1e-8), 50, StepMode.CV)
    assert np.abs(u - proj_nonneg(v)).max() <= 1e-6


def test_fgp_same_fixed_point_and_faster(denoise_fixture):
    _, v = denoise_fixture
    p = DenoiseProblem(v, 0.2)
    u_f, _ = fgp_denoise(p, 2000)
    u_g, _ = gp_denoise(p, 20000)
    f_f, f_g = denoise_objective(u_f, p), denoise_objective(u_g, p)
    assert abs(f_f - f_g) <= 1e-5 * abs(f_g)
    u100g, _ = gp_denoise(p, 100)
    u100f, _ = fgp_denoise(p, 100)
    assert denoise_objective(u100f, p) <= denoise_objective(u100g, p)
    u_fl, _ = fgp_denoise(DenoiseProblem(v, 1e-8), 50)
    assert np.abs(u_fl - proj_nonneg(v)).max() <= 1e-6


def test_dual_feasibility_every_iterate(denoise_fixture):
    _, v = denoise_fixture
    p = DenoiseProblem(v, 0.2)

    def check(radius):
        def cb(k, u, w):
            norms = np.sqrt(w[0] ** 2 + w[1] ** 2)
            assert norms.max() <= radius * (1 + 1e-12)
        return cb

    gp_denoise(p, 50, callback=check(1.0))
    fgp_denoise(p, 50, callback=check(1.0))
    cv_denoise(p, 50, StepMode.GP, callback=check(1.0))
    cv_denoise(p, 50, StepMode.CV, callback=check(p.lam))


def test_fista_identity_vanishing_weight(denoise_fixture):
    _, v = denoise_fixture
    p = ReconProblem(IdentityMap(v.shape), v, 1e-8, 1.0)
    u = fista_cv_reconstruct(p, 30, 5)
    assert np.abs(u - proj_nonneg(v)).max() <= 1e-6


def test_fista_disk_reconstruction():
    gt = make_phantom(PhantomSpec("disk", (32, 32)))
    angles = np.linspace(0, np.pi, 60, endpoint=False)
    a = TomoProjector(32, 32, angles)
    sino = Sinogram(a.apply(gt), angles)
    beta = power_method(a, seed=0)
    u = fista_cv_reconstruct(ReconProblem(a, sino, 1e-3, beta), 300, 10)
    assert np.linalg.norm(u - gt) / np.linalg.norm(gt) <= 0.05


def test_fista_objective_decreases_long_run():
    gt = make_phantom(PhantomSpec("blocks", (24, 24), seed=1))
    angles = np.linspace(0, np.pi, 20, endpoint=False)
    a = TomoProjector(24, 24, angles)
    sino = Sinogram(add_noise(a.apply(gt), NoiseSpec(0.05, seed=2)), angles)
    p = ReconProblem(a, sino, 1e-2, power_method(a, seed=0))
    hist = []
    fista_cv_reconstruct(p, 200, 5,
                         callback=lambda k, u: hist.append(recon_objective(u, p)))
    assert np.isfinite(hist).all()
    assert hist[199] <= hist[49]


def test_fista_rate_on_diagonal_quadratic():
    rng = np.random.default_rng(11)
    d = np.linspace(0.5, 2.0, 12 * 12).reshape(12, 12)
    op = DiagonalMap(d)
    u_star = 0.2 + 0.6 * rng.random((12, 12))
    v = op.apply(u_star)
    beta = float((d * d).max())
    p = ReconProblem(op, v, 0.0, beta)
    u0 = np.zeros((12, 12))
    values = []
    fista_cv_reconstruct(p, 200, 1, u0=u0,
                         callback=lambda k, u: values.append(recon_objective(u, p)))
    r2 = float(np.vdot(u0 - u_star, u0 - u_star))
    for k, fk in enumerate(values, start=1):
        assert fk <= 2.0 * beta * r2 / (k + 1) ** 2 + 1e-12


def test_warm_start_toggle_changes_inner_path(denoise_fixture):
    gt, v = denoise_fixture
    angles = np.linspace(0, np.pi, 12, endpoint=False)
    a = TomoProjector(16, 16, angles)
    sino = Sinogram(a.apply(gt), angles)
    p = ReconProblem(a, sino, 0.5, power_method(a, seed=0))
    u_warm = fista_cv_reconstruct(p, 10, 2, warm_start=True)
    u_cold = fista_cv_reconstruct(p, 10, 2, warm_start=False)
    assert not np.array_equal(u_warm, u_cold)
    assert np.array_equal(u_warm, fista_cv_reconstruct(p, 10, 2, warm_start=True))
