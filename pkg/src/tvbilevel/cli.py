"""Command-line driver for the phantom/sinogram/denoise/reconstruct/learn
pipeline plus the gradient, memory, and adjoint check reports.

Every command is deterministic given its full flag set.  Exit codes: 0 on
success, 1 when a checked tolerance is violated, 2 on validation or I/O
errors.  An optional ``--config FILE`` supplies ``key = value`` lines
(``#`` comments allowed); explicit flags override file values.
"""

import argparse
import math
import os
import sys

import numpy as np

from . import io as tvio
from .bilevel import BilevelProblem, grid_search, log_grid, ngd_learn
from .linops import (Grad2D, IdentityMap, Sinogram, TomoProjector,
                     max_adjoint_residual, power_method, radon2d)
from .phantoms import PHANTOM_KINDS, NoiseSpec, PhantomSpec, add_noise, make_phantom
from .solvers import (DenoiseProblem, ReconProblem, StepMode, cv_denoise,
                      denoise_objective, fgp_denoise, fista_cv_reconstruct,
                      gp_denoise, recon_objective)
from .unroll import Strategy, grad_lambda_denoise, grad_lambda_recon, \
    memory_report, record_denoise

PROG = "tvbilevel"


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _opt(name, typ, default, help_, choices=None):
    return (name, typ, default, help_, choices)


def _bool_from_str(s):
    if isinstance(s, bool):
        return s
    val = s.strip().lower()
    if val in ("1", "true", "yes", "on"):
        return True
    if val in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


_COMMANDS = {}


def _command(name, help_, opts):
    def deco(fn):
        _COMMANDS[name] = (fn, help_, opts)
        return fn
    return deco


def _build_parser():
    parser = argparse.ArgumentParser(
        prog=PROG, description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (fn, help_, opts) in _COMMANDS.items():
        p = sub.add_parser(name, help=help_, description=help_)
        p.add_argument("--config", type=str, default=argparse.SUPPRESS,
                       help="key = value config file; flags override it "
                            "(type: str, default: none)")
        for oname, typ, default, ohelp, choices in opts:
            tname = {str: "str", int: "int", float: "float",
                     _bool_from_str: "bool"}[typ]
            kwargs = dict(type=typ, default=argparse.SUPPRESS,
                          help=f"{ohelp} (type: {tname}, default: {default})")
            if choices:
                kwargs["choices"] = choices
            if typ is _bool_from_str:
                kwargs.update(nargs="?", const=True)
            p.add_argument("--" + oname, dest=oname.replace("-", "_"), **kwargs)
        p.set_defaults(_fn=fn, _opts=opts)
    return parser


def _read_config(path):
    if not os.path.exists(path):
        raise CliError(2, f"config file not found: {path}")
    values = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CliError(2, f"{path}:{lineno}: expected 'key = value'")
            key, val = (tok.strip() for tok in line.split("=", 1))
            values[key.replace("-", "_")] = val
    return values


def _merge(ns):
    """defaults < config file < explicit flags."""
    opts = ns._opts
    merged = {o[0].replace("-", "_"): o[2] for o in opts}
    types = {o[0].replace("-", "_"): o[1] for o in opts}
    given = vars(ns)
    if "config" in given:
        for key, raw in _read_config(given["config"]).items():
            if key not in merged:
                raise CliError(2, f"unknown config key: {key}")
            try:
                merged[key] = types[key](raw)
            except ValueError as exc:
                raise CliError(2, f"bad config value for {key}: {exc}")
    for key, val in given.items():
        if key in merged:
            merged[key] = val
    return merged


def _require(cfg, *names):
    for n in names:
        if cfg[n] is None:
            raise CliError(2, f"missing required flag --{n.replace('_', '-')}")


def _read_image(path):
    if not os.path.exists(path):
        raise CliError(2, f"input image not found: {path}")
    try:
        return tvio.read_image_f64(path)
    except tvio.FileFormatError as exc:
        raise CliError(2, str(exc))


def _read_sino(path):
    if not os.path.exists(path):
        raise CliError(2, f"input sinogram not found: {path}")
    try:
        return tvio.read_sinogram_f64(path)
    except tvio.FileFormatError as exc:
        raise CliError(2, str(exc))


def _positive_lambda(value):
    if value is None or value <= 0:
        raise CliError(2, f"lambda must be positive, got {value}")
    return value


def _angles(n):
    if n < 1:
        raise CliError(2, f"need at least one angle, got {n}")
    return np.linspace(0.0, math.pi, n, endpoint=False)


@_command("phantom", "generate a phantom image", [
    _opt("kind", str, "blocks", f"phantom kind, one of {PHANTOM_KINDS}",
         choices=list(PHANTOM_KINDS)),
    _opt("size", int, 64, "image side length"),
    _opt("seed", int, 0, "generator seed"),
    _opt("out", str, None, "output raw-float64 image path"),
    _opt("png", str, None, "optional 8-bit grayscale export path"),
])
def _cmd_phantom(cfg):
    _require(cfg, "out")
    try:
        spec = PhantomSpec(cfg["kind"], (cfg["size"], cfg["size"]), cfg["seed"])
    except ValueError as exc:
        raise CliError(2, str(exc))
    u = make_phantom(spec)
    tvio.write_image_f64(cfg["out"], u)
    if cfg["png"]:
        tvio.write_png8(cfg["png"], u)
    print(f"phantom {cfg['kind']} {cfg['size']}x{cfg['size']} -> {cfg['out']}")
    return 0


@_command("sinogram", "project a phantom into a (noisy) sinogram", [
    _opt("in", str, None, "input raw-float64 image path"),
    _opt("angles", int, 60, "number of uniform angles in [0, pi)"),
    _opt("n-det", int, 0, "detector bins (0 = image diagonal + 1)"),
    _opt("sigma", float, 0.0, "Gaussian noise level"),
    _opt("seed", int, 0, "noise seed"),
    _opt("out", str, None, "output sinogram path"),
])
def _cmd_sinogram(cfg):
    _require(cfg, "in", "out")
    u = _read_image(cfg["in"])
    try:
        sino = radon2d(u, _angles(cfg["angles"]),
                       cfg["n_det"] if cfg["n_det"] > 0 else None)
    except ValueError as exc:
        raise CliError(2, str(exc))
    if cfg["sigma"] > 0:
        sino = Sinogram(add_noise(sino.data,
                                  NoiseSpec(cfg["sigma"], cfg["seed"])),
                        sino.angles)
    tvio.write_sinogram_f64(cfg["out"], sino)
    print(f"sinogram {sino.n_angles}x{sino.n_det} -> {cfg['out']}")
    return 0


@_command("denoise", "TV-denoise an image with a fixed weight", [
    _opt("in", str, None, "input raw-float64 image path"),
    _opt("lambda", float, None, "regularization weight (> 0)"),
    _opt("iters", int, 500, "solver iterations"),
    _opt("solver", str, "gp", "solver", choices=["gp", "fgp", "cv"]),
    _opt("step-mode", str, "cv", "cv solver step-size mode",
         choices=["gp", "cv"]),
    _opt("out", str, None, "output image path"),
    _opt("csv", str, None, "optional per-iteration objective CSV"),
    _opt("png", str, None, "optional 8-bit export path"),
])
def _cmd_denoise(cfg):
    _require(cfg, "in", "out")
    v = _read_image(cfg["in"])
    lam = _positive_lambda(cfg["lambda"])
    p = DenoiseProblem(v, lam)
    history = []
    cb = (lambda k, u, w: history.append(denoise_objective(u, p))) \
        if cfg["csv"] else None
    if cfg["solver"] == "gp":
        u, _ = gp_denoise(p, cfg["iters"], callback=cb)
    elif cfg["solver"] == "fgp":
        u, _ = fgp_denoise(p, cfg["iters"], callback=cb)
    else:
        u, _ = cv_denoise(p, cfg["iters"], StepMode(cfg["step_mode"]),
                          callback=cb)
    tvio.write_image_f64(cfg["out"], u)
    if cfg["csv"]:
        tvio.write_objective_csv(cfg["csv"], history)
    if cfg["png"]:
        tvio.write_png8(cfg["png"], u)
    print(f"denoise solver={cfg['solver']} lambda={lam} -> {cfg['out']}")
    return 0


@_command("reconstruct", "few-view reconstruction with FISTA-CV", [
    _opt("sino", str, None, "input sinogram path"),
    _opt("size", int, 64, "reconstruction side length"),
    _opt("lambda", float, None, "regularization weight (> 0)"),
    _opt("outer", int, 140, "FISTA iterations"),
    _opt("inner", int, 5, "inner Condat-Vu iterations per FISTA step"),
    _opt("warm", _bool_from_str, True, "warm-start the inner dual variable"),
    _opt("beta", float, 0.0, "||A||^2 override (0 = power method)"),
    _opt("seed", int, 0, "power method seed"),
    _opt("out", str, None, "output image path"),
    _opt("csv", str, None, "optional per-iteration objective CSV"),
    _opt("png", str, None, "optional 8-bit export path"),
])
def _cmd_reconstruct(cfg):
    _require(cfg, "sino", "out")
    sino = _read_sino(cfg["sino"])
    lam = _positive_lambda(cfg["lambda"])
    n = cfg["size"]
    try:
        a = TomoProjector(n, n, sino.angles, sino.n_det)
    except ValueError as exc:
        raise CliError(2, str(exc))
    beta = cfg["beta"] if cfg["beta"] > 0 else power_method(a, seed=cfg["seed"])
    p = ReconProblem(a, sino, lam, beta)
    history = []
    cb = (lambda k, u: history.append(recon_objective(u, p))) if cfg["csv"] else None
    u = fista_cv_reconstruct(p, cfg["outer"], cfg["inner"],
                             warm_start=cfg["warm"], callback=cb)
    tvio.write_image_f64(cfg["out"], u)
    if cfg["csv"]:
        tvio.write_objective_csv(cfg["csv"], history)
    if cfg["png"]:
        tvio.write_png8(cfg["png"], u)
    print(f"reconstruct lambda={lam} beta={beta!r} -> {cfg['out']}")
    return 0


@_command("learn", "learn the weight by NGD (or a grid oracle)", [
    _opt("task", str, "denoise", "inner problem", choices=["denoise", "recon"]),
    _opt("in", str, None, "noisy image path (denoise task)"),
    _opt("sino", str, None, "sinogram path (recon task)"),
    _opt("gt", str, None, "ground-truth image path"),
    _opt("size", int, 64, "image side length (recon task)"),
    _opt("iters", int, 200, "inner solver iterations (denoise task)"),
    _opt("outer", int, 100, "FISTA iterations (recon task)"),
    _opt("inner", int, 5, "inner Condat-Vu iterations (recon task)"),
    _opt("lambda0", float, 1.0, "initial weight"),
    _opt("strategy", str, "assisted", "gradient strategy",
         choices=[s.value for s in Strategy]),
    _opt("outer-ngd", int, 60, "max NGD iterations"),
    _opt("seed", int, 0, "power method seed (recon task)"),
    _opt("grid", int, 0, "if > 0, run a log-grid brute force instead of NGD"),
    _opt("grid-lo", float, 1e-3, "grid lower bound"),
    _opt("grid-hi", float, 1e1, "grid upper bound"),
    _opt("grid-csv", str, None, "grid losses CSV path"),
    _opt("trace", str, None, "NGD trace CSV path"),
    _opt("out-lambda", str, None, "write the learned weight to this file"),
    _opt("out", str, None, "write the solution at the learned weight here"),
])
def _cmd_learn(cfg):
    _require(cfg, "gt")
    gt = _read_image(cfg["gt"])
    if cfg["task"] == "denoise":
        _require(cfg, "in")
        v = _read_image(cfg["in"])
        if v.shape != gt.shape:
            raise CliError(2, f"shape mismatch: {v.shape} vs {gt.shape}")
        problem = BilevelProblem.denoising(v, gt, cfg["iters"],
                                           Strategy(cfg["strategy"]))

        def solve(lam):
            u, _ = cv_denoise(DenoiseProblem(v, lam), cfg["iters"], StepMode.CV)
            return u
    else:
        _require(cfg, "sino")
        sino = _read_sino(cfg["sino"])
        n = cfg["size"]
        try:
            a = TomoProjector(n, n, sino.angles, sino.n_det)
        except ValueError as exc:
            raise CliError(2, str(exc))
        beta = power_method(a, seed=cfg["seed"])
        problem = BilevelProblem.reconstruction(
            a, sino, beta, gt, cfg["outer"], cfg["inner"],
            Strategy(cfg["strategy"]))

        def solve(lam):
            return fista_cv_reconstruct(ReconProblem(a, sino, lam, beta),
                                        cfg["outer"], cfg["inner"])

    if cfg["grid"] > 0:
        lambdas = log_grid(cfg["grid_lo"], cfg["grid_hi"], cfg["grid"])
        lam_star, losses = grid_search(problem, lambdas)
        if cfg["grid_csv"]:
            with open(cfg["grid_csv"], "w", encoding="ascii") as f:
                f.write("lambda,loss\n")
                for lam, lo in zip(lambdas, losses):
                    f.write(f"{lam!r},{lo!r}\n")
        print(f"grid minimum: lambda={lam_star!r}")
    else:
        if cfg["lambda0"] <= 0:
            raise CliError(2, f"lambda0 must be positive, got {cfg['lambda0']}")
        lam_star, trace = ngd_learn(problem, cfg["lambda0"],
                                    outer_iters=cfg["outer_ngd"])
        if cfg["trace"]:
            tvio.write_trace_csv(cfg["trace"], trace)
        print(f"learned lambda={lam_star!r} in {len(trace.rows)} iterations")
    if cfg["out_lambda"]:
        with open(cfg["out_lambda"], "w", encoding="ascii") as f:
            f.write(f"{lam_star!r}\n")
    if cfg["out"]:
        tvio.write_image_f64(cfg["out"], solve(lam_star))
    return 0


@_command("gradcheck", "compare the gradient strategies and an FD oracle", [
    _opt("task", str, "denoise", "problem", choices=["denoise", "recon"]),
    _opt("size", int, 32, "image side length"),
    _opt("iters", int, 50, "unrolled iterations (denoise task)"),
    _opt("outer", int, 20, "FISTA iterations (recon task)"),
    _opt("inner", int, 3, "inner Condat-Vu iterations (recon task)"),
    _opt("lambda", float, 0.2, "weight at which to differentiate"),
    _opt("sigma", float, 0.1, "noise level of the synthetic fixture"),
    _opt("seed", int, 0, "fixture seed"),
    _opt("tol-pair", float, 1e-10, "max pairwise strategy disagreement"),
    _opt("tol-fd", float, 1e-4, "max relative error vs central differences"),
])
def _cmd_gradcheck(cfg):
    lam = _positive_lambda(cfg["lambda"])
    n = cfg["size"]
    gt = make_phantom(PhantomSpec("blocks", (n, n), cfg["seed"]))
    if cfg["task"] == "denoise":
        v = add_noise(gt, NoiseSpec(cfg["sigma"], cfg["seed"]))
        grads = {s: grad_lambda_denoise(DenoiseProblem(v, lam), gt,
                                        cfg["iters"], s).grad
                 for s in Strategy}

        def value(la):
            u, _ = cv_denoise(DenoiseProblem(v, la), cfg["iters"], StepMode.CV)
            return 0.5 * float(np.vdot(u - gt, u - gt))
    else:
        angles = _angles(max(2 * n // 3, 8))
        a = TomoProjector(n, n, angles)
        data = add_noise(a.apply(gt), NoiseSpec(cfg["sigma"], cfg["seed"]))
        sino = Sinogram(data, angles)
        beta = power_method(a, seed=cfg["seed"])
        p = ReconProblem(a, sino, lam, beta)
        grads = {s: grad_lambda_recon(p, gt, cfg["outer"], cfg["inner"], s).grad
                 for s in Strategy}

        def value(la):
            u = fista_cv_reconstruct(ReconProblem(a, sino, la, beta),
                                     cfg["outer"], cfg["inner"])
            return 0.5 * float(np.vdot(u - gt, u - gt))

    ref = grads[Strategy.ACV]
    scale = max(abs(g) for g in grads.values())
    worst_pair = max(abs(g1 - g2) for g1 in grads.values()
                     for g2 in grads.values()) / scale
    h = 1e-5 * lam
    fd = (value(lam + h) - value(lam - h)) / (2 * h)
    fd_err = abs(fd - ref) / abs(fd)
    for s, g in grads.items():
        print(f"  {s.value:<9s} grad = {g!r}")
    print(f"max pairwise relative disagreement: {worst_pair:.3e} "
          f"(tol {cfg['tol_pair']:g})")
    print(f"relative error vs central FD:       {fd_err:.3e} "
          f"(tol {cfg['tol_fd']:g})")
    if worst_pair > cfg["tol_pair"] or fd_err > cfg["tol_fd"]:
        raise CliError(1, "gradient check tolerance violated")
    return 0


@_command("memreport", "per-iteration tape bytes for each strategy", [
    _opt("size", int, 64, "image side length"),
    _opt("iters", int, 5, "recorded iterations"),
    _opt("lambda", float, 0.2, "weight"),
    _opt("sigma", float, 0.1, "noise level of the synthetic fixture"),
    _opt("seed", int, 0, "fixture seed"),
])
def _cmd_memreport(cfg):
    lam = _positive_lambda(cfg["lambda"])
    n = cfg["size"]
    gt = make_phantom(PhantomSpec("blocks", (n, n), cfg["seed"]))
    v = add_noise(gt, NoiseSpec(cfg["sigma"], cfg["seed"]))
    p = DenoiseProblem(v, lam)
    per = {}
    for s in (Strategy.GP_TAPE, Strategy.CV_TAPE, Strategy.ACV):
        _, tape = record_denoise(p, cfg["iters"], s)
        rep = memory_report(tape)
        per[s] = rep.per_iteration_bytes[0]
        print(f"{s.value}: {per[s]} bytes/iteration, "
              f"{rep.total_bytes} total")
        for kind in sorted(rep.by_kind):
            print(f"    {kind:<24s} {rep.by_kind[kind]:>12d}")
    r_cv = per[Strategy.CV_TAPE] / per[Strategy.GP_TAPE]
    r_acv = per[Strategy.ACV] / per[Strategy.GP_TAPE]
    print(f"ratio cv-tape/gp-tape:  {r_cv:.3f} (reference report: 82/153 = 0.536)")
    print(f"ratio assisted/gp-tape: {r_acv:.3f} (reference report: 49/153 = 0.320)")
    if not per[Strategy.ACV] < per[Strategy.CV_TAPE] < per[Strategy.GP_TAPE]:
        raise CliError(1, "memory ordering assisted < cv-tape < gp-tape violated")
    return 0


@_command("adjointcheck", "randomized adjoint identities for all operators", [
    _opt("size", int, 32, "image side length"),
    _opt("angles", int, 30, "projection angles"),
    _opt("trials", int, 100, "random trials per operator"),
    _opt("seed", int, 0, "trial seed"),
    _opt("tol", float, 1e-10, "max normalized residual"),
])
def _cmd_adjointcheck(cfg):
    n = cfg["size"]
    ops = {
        "grad/div": Grad2D(n, n),
        "radon/backproject": TomoProjector(n, n, _angles(cfg["angles"])),
        "identity": IdentityMap((n, n)),
    }
    worst = 0.0
    for name, op in ops.items():
        resid = max_adjoint_residual(op, cfg["trials"], cfg["seed"])
        worst = max(worst, resid)
        print(f"{name:<18s} max residual {resid:.3e} over {cfg['trials']} trials")
    if worst > cfg["tol"]:
        raise CliError(1, f"adjoint residual {worst:.3e} exceeds {cfg['tol']:g}")
    return 0


def main(argv=None):
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
        cfg = _merge(ns)
        return ns._fn(cfg)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
