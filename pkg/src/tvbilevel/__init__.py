"""Bilevel learning of the TV regularization weight, desk-scale 2D.

Solvers (GP / FGP / Condat-Vu / FISTA-CV), unrolled reverse- and
forward-mode differentiation of the weight with byte-exact tape accounting,
and a Nesterov/Armijo outer loop, over exact-adjoint linear operators.
"""

from .backend import active_backend, available_backends, set_backend
from .bilevel import (ARMIJO_C1, ArmijoResult, BilevelProblem, BilevelTrace,
                      LineSearchError, TraceRow, armijo_search, grid_search,
                      log_grid, loss, ngd_learn)
from .linops import (GRAD_NORM_SQ, DiagonalMap, Grad2D, IdentityMap,
                     LinearMap, MatrixMap, Sinogram, TomoProjector,
                     adjoint_residual, backproject2d, div2d, grad2d,
                     max_adjoint_residual, power_method, radon2d)
from .phantoms import NoiseSpec, PhantomSpec, add_noise, make_phantom, tv_value
from .prox import heaviside, proj_l2ball, proj_nonneg, prox_sql2, ramp
from .solvers import (DenoiseProblem, ReconProblem, StepMode, cv_denoise,
                      default_recon_init, denoise_objective, fgp_denoise,
                      fista_cv_reconstruct, fista_t_update, gp_denoise,
                      recon_objective)
from .tape import MemoryReport, Tape, TapeNode
from .unroll import (LambdaGradient, Strategy, grad_lambda_denoise,
                     grad_lambda_recon, memory_report, proj_l2ball_jvp,
                     proj_l2ball_vjp, record_denoise, record_recon)

__version__ = "0.1.0"
