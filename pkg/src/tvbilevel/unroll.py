"""Differentiation of the unrolled solvers with respect to the weight lam.

Four interchangeable strategies compute d/dlam of the tracking loss
0.5*||u_lam - u_gt||^2 through a fixed solver budget:

* ``GP_TAPE``   records the gradient-projection graph; lam scales both the
  primal divergence step and the dual step size, so two nodes per iteration
  retain lam-dependent buffers on top of the projection's own sub-ops.
* ``CV_TAPE``   records the lam-free-step Condat-Vu graph; lam appears only
  inside the dual ball projection, which is taped as elementary sub-ops
  (norm, scale, clamp, divide), each saving its input.
* ``ACV``       same graph, but the projection is one assisted node whose
  backward is the closed-form :func:`proj_l2ball_vjp`; it saves only the
  pre-projection dual field plus the radius scalar.
* ``FORWARD``   propagates the scalar tangent dlam = 1 alongside the solver
  (no tape at all), giving an independent oracle with O(1) extra memory.

All four agree to float64 round-off because they differentiate the same
fixed-budget map.
"""

import enum
from dataclasses import dataclass

import numpy as np

from .linops import GRAD_NORM_SQ, as_dual, as_image, div2d, grad2d
from .prox import proj_l2ball, proj_nonneg
from .solvers import default_recon_init, fista_t_update
from .tape import Tape
from .tape import memory_report  # re-exported; part of this module's API

__all__ = [
    "Strategy", "LambdaGradient", "proj_l2ball_jvp", "proj_l2ball_vjp",
    "record_denoise", "record_recon", "grad_lambda_denoise",
    "grad_lambda_recon", "memory_report",
]


class Strategy(enum.Enum):
    GP_TAPE = "gp-tape"
    CV_TAPE = "cv-tape"
    ACV = "assisted"
    FORWARD = "forward"


@dataclass
class LambdaGradient:
    """Loss value, its lam derivative, and the tape bytes that bought it."""

    value: float
    grad: float
    saved_bytes: int
    strategy: Strategy

    def __post_init__(self):
        if not np.isfinite(self.grad):
            raise ValueError(f"non-finite lambda gradient: {self.grad}")


# ---------------------------------------------------------------------------
# Ball projection derivatives.
#
# P(w, r) is per pixel w / max(1, |w|/r).  Strictly inside the ball the map
# is the identity (zero radius sensitivity); strictly outside it is r*w/|w|.
# On the boundary |w| = r the clamp's kink gets subgradient 0, so the
# interior branch applies there too.

def _ball_masks(w, radius):
    if radius <= 0:
        raise ValueError(f"ball radius must be positive, got {radius}")
    n = np.sqrt(w[0] * w[0] + w[1] * w[1])
    ext = n > radius
    inv_n = np.where(ext, 1.0 / np.where(ext, n, 1.0), 0.0)
    return n, ext, inv_n


def proj_l2ball_jvp(w, radius, w_dot, radius_dot):
    """Tangent push through the ball projection at (w, radius)."""
    w = as_dual(w)
    w_dot = as_dual(w_dot)
    n, ext, inv_n = _ball_masks(w, radius)
    dot = w[0] * w_dot[0] + w[1] * w_dot[1]
    radial = radius * inv_n * (w_dot - w * (dot * inv_n * inv_n))
    out = np.where(ext, radial + w * (inv_n * radius_dot), w_dot)
    return out


def proj_l2ball_vjp(w_saved, radius, cotangent):
    """Cotangent pull through the ball projection.

    ``w_saved`` is the pre-projection input; everything else (norms, masks)
    is recomputed here, which is what keeps the forward-pass storage at one
    dual field.  The per-pixel Jacobian is symmetric, so the w pull is the
    same formula as the push; the radius pull is the cotangent's inner
    product with w/|w| over strictly exterior pixels.
    """
    w = np.asarray(w_saved, dtype=np.float64)
    cot = as_dual(np.asarray(cotangent, dtype=np.float64))
    n, ext, inv_n = _ball_masks(w, radius)
    dot = w[0] * cot[0] + w[1] * cot[1]
    radial = radius * inv_n * (cot - w * (dot * inv_n * inv_n))
    w_bar = np.where(ext, radial, cot)
    radius_bar = float((dot * inv_n)[ext].sum())
    return w_bar, radius_bar


# ---------------------------------------------------------------------------
# Node backward formulas (pure functions of (node, output cotangent)).

def _bw_div(node, ob):
    return (-grad2d(ob),)


def _bw_grad(node, ob):
    return (-div2d(ob),)


def _bw_add_const(node, ob):
    # out = const + x
    return (ob,)


def _bw_add(node, ob):
    # out = x + y
    return (ob, ob)


def _bw_relu(node, ob):
    (x,) = node.saved
    return (ob * (x > 0),)


def _bw_axpy_const(node, ob):
    # out = x + sigma * y, sigma a fixed constant
    return (ob, node.attrs["sigma"] * ob)


def _bw_add_scaled(node, ob):
    # out = base + s * x with scalar variable s; saved (x, s_value).
    # inputs are (base?, s, x); base is present only when it is a variable.
    x, s = node.saved
    x = np.asarray(x, dtype=np.float64)
    s_bar = float(np.vdot(ob, x))
    x_bar = s * ob
    if len(node.inputs) == 3:
        return (ob, s_bar, x_bar)
    return (s_bar, x_bar)


def _bw_recip_scale(node, ob):
    # out = 1 / (lam * c); saved (lam,), attrs c
    (lam,) = node.saved
    c = node.attrs["c"]
    return (-ob / (lam * lam * c),)


def _bw_scale(node, ob):
    # out = gamma * lam
    return (node.attrs["gamma"] * ob,)


def _bw_pixel_norm(node, ob):
    (w,) = node.saved
    w = np.asarray(w, dtype=np.float64)
    n = np.sqrt(w[0] * w[0] + w[1] * w[1])
    safe = np.where(n > 0, 1.0 / np.where(n > 0, n, 1.0), 0.0)
    return (w * (ob * safe),)


def _bw_div_by_scalar(node, ob):
    # out = n / rho
    n, rho = node.saved
    n = np.asarray(n, dtype=np.float64)
    n_bar = ob / rho
    rho_bar = -float(np.vdot(ob, n)) / (rho * rho)
    return (n_bar, rho_bar)


def _bw_max1(node, ob):
    # out = ramp(r - 1) + 1 = max(1, r); subgradient 0 at the kink
    (r,) = node.saved
    return (ob * (r > 1.0),)


def _bw_bcast_div(node, ob):
    # out = c2 / m, m broadcast over the two channels
    c2, m = node.saved
    c2 = np.asarray(c2, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    c2_bar = ob / m
    m_bar = -(ob * c2).sum(axis=0) / (m * m)
    return (c2_bar, m_bar)


def _bw_ball_assisted(node, ob):
    c2, rho = node.saved
    return proj_l2ball_vjp(c2, rho, ob)


def _bw_data_step(node, ob):
    # out = u - gamma * A^T (A u - v); Jacobian I - gamma A^T A (symmetric)
    a = node.attrs["A"]
    gamma = node.attrs["gamma"]
    return (ob - gamma * a.adjoint(a.apply(ob)),)


def _bw_extrapolate(node, ob):
    c = node.attrs["c"]
    return ((1.0 + c) * ob, -c * ob)


# ---------------------------------------------------------------------------
# Recording.  The forward expressions below are kept textually identical to
# the solver loops so recorded values match un-recorded runs bit for bit.

def _record_ball_elementary(tape, c2_id, c2, rho_id, rho, unit_radius):
    """Tape the ball projection as elementary sub-operations."""
    n = np.sqrt(c2[0] * c2[0] + c2[1] * c2[1])
    n_id = tape.add_node("pixel_norm", (c2_id,), n.shape, (c2,), _bw_pixel_norm)
    if unit_radius:
        r, r_id = n, n_id
    else:
        r = n / rho
        r_id = tape.add_node("radius_scale", (n_id, rho_id), r.shape,
                             (n, rho), _bw_div_by_scalar)
    m = np.maximum(r - 1.0, 0.0) + 1.0
    m_id = tape.add_node("clamp_below_one", (r_id,), m.shape, (r,), _bw_max1)
    out = c2 / m
    out_id = tape.add_node("pixel_divide", (c2_id, m_id), out.shape,
                           (c2, m), _bw_bcast_div)
    return out, out_id


def _record_cv_iteration(tape, v, v_id, w, w_id, sigma, rho, rho_id, assisted):
    """One lam-free-step Condat-Vu iteration; lam enters via rho only."""
    d = div2d(w)
    d_id = tape.add_node("divergence", (w_id,), d.shape, (), _bw_div)
    if v_id is None:
        c1 = v + d
        c1_id = tape.add_node("add_data", (d_id,), c1.shape, (), _bw_add_const)
    else:
        c1 = v + d
        c1_id = tape.add_node("add", (v_id, d_id), c1.shape, (), _bw_add)
    u = proj_nonneg(c1)
    u_id = tape.add_node("clip_nonneg", (c1_id,), u.shape, (c1,), _bw_relu)
    t = grad2d(u)
    t_id = tape.add_node("gradient", (u_id,), t.shape, (), _bw_grad)
    c2 = w + sigma * t
    c2_id = tape.add_node("dual_step", (w_id, t_id), c2.shape, (),
                          _bw_axpy_const, {"sigma": sigma})
    if assisted:
        w_next = proj_l2ball(c2, rho)
        w_next_id = tape.add_node("ball_proj_assisted", (c2_id, rho_id),
                                  w_next.shape, (c2, rho), _bw_ball_assisted)
    else:
        w_next, w_next_id = _record_ball_elementary(tape, c2_id, c2, rho_id,
                                                    rho, unit_radius=False)
    return u, u_id, w_next, w_next_id


def _record_gp_iteration(tape, v, v_id, lam, lam_id, w, w_id, s, s_id):
    """One gradient-projection iteration; lam scales both half-steps."""
    d = div2d(w)
    d_id = tape.add_node("divergence", (w_id,), d.shape, (), _bw_div)
    g1 = v + lam * d
    if v_id is None:
        g1_id = tape.add_node("scaled_divergence_step", (lam_id, d_id),
                              g1.shape, (d, lam), _bw_add_scaled)
    else:
        g1_id = tape.add_node("scaled_divergence_step", (v_id, lam_id, d_id),
                              g1.shape, (d, lam), _bw_add_scaled)
    u = proj_nonneg(g1)
    u_id = tape.add_node("clip_nonneg", (g1_id,), u.shape, (g1,), _bw_relu)
    t = grad2d(u)
    t_id = tape.add_node("gradient", (u_id,), t.shape, (), _bw_grad)
    g2 = w + s * t
    g2_id = tape.add_node("scaled_dual_step", (w_id, s_id, t_id), g2.shape,
                          (t, s), _bw_add_scaled)
    w_next, w_next_id = _record_ball_elementary(tape, g2_id, g2, None, None,
                                                unit_radius=True)
    return u, u_id, w_next, w_next_id


_SIGMA_CV = 1.0 / GRAD_NORM_SQ


def record_denoise(p, iters, strategy, w0=None, save_dtype=np.float64):
    """Run the denoising solver while recording; returns (u, tape).

    GP_TAPE records the GP graph, CV_TAPE and ACV record the lam-free-step
    Condat-Vu graph (taped vs. assisted projection).  The tape's
    ``lambda_id`` / ``output_id`` mark the weight leaf and the primal output.
    """
    strategy = Strategy(strategy)
    if strategy not in (Strategy.GP_TAPE, Strategy.CV_TAPE, Strategy.ACV):
        raise ValueError(f"strategy {strategy} does not record a tape")
    if iters < 1:
        raise ValueError(f"iteration count must be >= 1, got {iters}")
    tape = Tape(save_dtype)
    lam = p.lam
    lam_id = tape.leaf(())
    tape.lambda_id = lam_id
    shape = p.v.shape
    w = np.zeros((2,) + shape) if w0 is None else np.array(w0, dtype=np.float64)
    w_id = tape.leaf(w.shape)

    if strategy is Strategy.GP_TAPE:
        s = 1.0 / (lam * GRAD_NORM_SQ)
        s_id = tape.add_node("dual_step_size", (lam_id,), (), (lam,),
                             _bw_recip_scale, {"c": GRAD_NORM_SQ})
        u = None
        for _ in range(iters):
            tape.begin_iteration()
            u, u_id, w, w_id = _record_gp_iteration(
                tape, p.v, None, lam, lam_id, w, w_id, s, s_id)
    else:
        assisted = strategy is Strategy.ACV
        u = None
        for _ in range(iters):
            tape.begin_iteration()
            u, u_id, w, w_id = _record_cv_iteration(
                tape, p.v, None, w, w_id, _SIGMA_CV, lam, lam_id, assisted)
    tape.output_id = u_id
    return u, tape


def record_recon(p, outer_iters, inner_iters, strategy, warm_start=True,
                 u0=None, save_dtype=np.float64):
    """Record the full FISTA + inner Condat-Vu reconstruction.

    The FISTA gradient step and extrapolation are lam-independent linear
    nodes (they save nothing); lam reaches the graph only through the inner
    dual-ball radius gamma*lam, whose chain-rule node scales the radius
    cotangent by gamma on the way back.
    """
    strategy = Strategy(strategy)
    if strategy not in (Strategy.GP_TAPE, Strategy.CV_TAPE, Strategy.ACV):
        raise ValueError(f"strategy {strategy} does not record a tape")
    if outer_iters < 1 or inner_iters < 1:
        raise ValueError("iteration counts must be >= 1")
    if p.lam <= 0:
        raise ValueError("recording requires lambda > 0")
    tape = Tape(save_dtype)
    lam_id = tape.leaf(())
    tape.lambda_id = lam_id
    v = p.data
    gamma = 1.0 / p.beta
    mu = gamma * p.lam
    mu_id = tape.add_node("ball_radius", (lam_id,), (), (), _bw_scale,
                          {"gamma": gamma})
    gp = strategy is Strategy.GP_TAPE
    if gp:
        s = 1.0 / (mu * GRAD_NORM_SQ)
        s_id = tape.add_node("dual_step_size", (mu_id,), (), (mu,),
                             _bw_recip_scale, {"c": GRAD_NORM_SQ})
    h, w_ = p.A.domain_shape
    u = default_recon_init(p) if u0 is None else as_image(u0).copy()
    u_id = tape.leaf(u.shape)
    u_hat, u_hat_id = u, u_id
    w = np.zeros((2, h, w_))
    w_id = tape.leaf(w.shape)
    t = 1.0
    for k in range(outer_iters):
        tape.begin_iteration()
        z = u_hat - gamma * p.A.adjoint(p.A.apply(u_hat) - v)
        z_id = tape.add_node("fidelity_step", (u_hat_id,), z.shape, (),
                             _bw_data_step, {"A": p.A, "gamma": gamma})
        if not warm_start:
            w = np.zeros((2, h, w_))
            w_id = tape.leaf(w.shape)
        for _ in range(inner_iters):
            if gp:
                u_next, u_next_id, w, w_id = _record_gp_iteration(
                    tape, z, z_id, mu, mu_id, w, w_id, s, s_id)
            else:
                u_next, u_next_id, w, w_id = _record_cv_iteration(
                    tape, z, z_id, w, w_id, _SIGMA_CV, mu, mu_id,
                    assisted=strategy is Strategy.ACV)
        t_next = fista_t_update(t)
        if k < outer_iters - 1:
            c = (t - 1.0) / t_next
            u_hat = u_next + c * (u_next - u)
            u_hat_id = tape.add_node("extrapolate", (u_next_id, u_id),
                                     u_hat.shape, (), _bw_extrapolate, {"c": c})
        u, u_id, t = u_next, u_next_id, t_next
    tape.output_id = u_id
    return u, tape


# ---------------------------------------------------------------------------
# Forward-mode (tangent propagation) oracle: O(1) extra memory.

def _tangent_cv_iteration(v_pair, w, w_dot, sigma, rho, rho_dot):
    v, v_dot = v_pair
    d = div2d(w)
    c1 = v + d
    u = proj_nonneg(c1)
    c1_dot = div2d(w_dot) if v_dot is None else v_dot + div2d(w_dot)
    u_dot = c1_dot * (c1 > 0)
    c2 = w + sigma * grad2d(u)
    c2_dot = w_dot + sigma * grad2d(u_dot)
    w_next = proj_l2ball(c2, rho)
    w_next_dot = proj_l2ball_jvp(c2, rho, c2_dot, rho_dot)
    return u, u_dot, w_next, w_next_dot


def _forward_denoise(p, iters, w0=None):
    shape = p.v.shape
    w = np.zeros((2,) + shape) if w0 is None else np.array(w0, dtype=np.float64)
    w_dot = np.zeros_like(w)
    u = u_dot = None
    for _ in range(iters):
        u, u_dot, w, w_dot = _tangent_cv_iteration(
            (p.v, None), w, w_dot, _SIGMA_CV, p.lam, 1.0)
    return u, u_dot


def _forward_recon(p, outer_iters, inner_iters, warm_start=True, u0=None):
    if p.lam <= 0:
        raise ValueError("tangent propagation requires lambda > 0")
    v = p.data
    gamma = 1.0 / p.beta
    mu = gamma * p.lam
    h, w_ = p.A.domain_shape
    u = default_recon_init(p) if u0 is None else as_image(u0).copy()
    u_dot = np.zeros_like(u)
    u_hat, u_hat_dot = u, u_dot
    w = np.zeros((2, h, w_))
    w_dot = np.zeros_like(w)
    t = 1.0
    for k in range(outer_iters):
        z = u_hat - gamma * p.A.adjoint(p.A.apply(u_hat) - v)
        z_dot = u_hat_dot - gamma * p.A.adjoint(p.A.apply(u_hat_dot))
        if not warm_start:
            w = np.zeros((2, h, w_))
            w_dot = np.zeros_like(w)
        for _ in range(inner_iters):
            u_next, u_next_dot, w, w_dot = _tangent_cv_iteration(
                (z, z_dot), w, w_dot, _SIGMA_CV, mu, gamma)
        t_next = fista_t_update(t)
        if k < outer_iters - 1:
            c = (t - 1.0) / t_next
            u_hat = u_next + c * (u_next - u)
            u_hat_dot = u_next_dot + c * (u_next_dot - u_dot)
        u, u_dot, t = u_next, u_next_dot, t_next
    return u, u_dot


# ---------------------------------------------------------------------------
# Loss gradients.

def _finish_reverse(u, tape, u_gt, strategy):
    value = 0.5 * float(np.vdot(u - u_gt, u - u_gt))
    bars = tape.backward({tape.output_id: u - u_gt})
    grad = float(bars.get(tape.lambda_id, 0.0))
    return LambdaGradient(value, grad, tape.total_saved_bytes, strategy)


def grad_lambda_denoise(p, u_gt, iters, strategy, w0=None,
                        save_dtype=np.float64):
    """d/dlam of 0.5*||u_lam - u_gt||^2 through ``iters`` unrolled steps."""
    strategy = Strategy(strategy)
    u_gt = as_image(u_gt)
    if u_gt.shape != p.v.shape:
        raise ValueError(f"shape mismatch: {u_gt.shape} vs {p.v.shape}")
    if strategy is Strategy.FORWARD:
        u, u_dot = _forward_denoise(p, iters, w0)
        value = 0.5 * float(np.vdot(u - u_gt, u - u_gt))
        grad = float(np.vdot(u - u_gt, u_dot))
        return LambdaGradient(value, grad, 0, strategy)
    u, tape = record_denoise(p, iters, strategy, w0, save_dtype)
    return _finish_reverse(u, tape, u_gt, strategy)


def grad_lambda_recon(p, u_gt, outer_iters, inner_iters, strategy,
                      warm_start=True, u0=None, save_dtype=np.float64):
    """Same loss derivative through the unrolled FISTA reconstruction."""
    strategy = Strategy(strategy)
    u_gt = as_image(u_gt)
    if u_gt.shape != tuple(p.A.domain_shape):
        raise ValueError(
            f"shape mismatch: {u_gt.shape} vs {tuple(p.A.domain_shape)}")
    if strategy is Strategy.FORWARD:
        u, u_dot = _forward_recon(p, outer_iters, inner_iters, warm_start, u0)
        value = 0.5 * float(np.vdot(u - u_gt, u - u_gt))
        grad = float(np.vdot(u - u_gt, u_dot))
        return LambdaGradient(value, grad, 0, strategy)
    u, tape = record_recon(p, outer_iters, inner_iters, strategy, warm_start,
                           u0, save_dtype)
    return _finish_reverse(u, tape, u_gt, strategy)
