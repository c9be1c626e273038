"""File formats: raw float64 images/sinograms, 8-bit exports, trace CSV.

Float payloads are little-endian float64 behind a plain-text header line, so
write-then-read round trips are bit-exact.  The trace CSV header is a fixed
contract: ``k,lambda,lambda_hat,loss,grad,step,backtracks,tape_bytes``.
"""

import math

import numpy as np

from .bilevel import BilevelTrace, TraceRow
from .linops import Sinogram, as_image

TRACE_CSV_HEADER = "k,lambda,lambda_hat,loss,grad,step,backtracks,tape_bytes"


class FileFormatError(ValueError):
    """Malformed header or truncated payload."""


def _read_payload(f, count, path):
    data = np.frombuffer(f.read(count * 8), dtype="<f8")
    if data.size != count:
        raise FileFormatError(
            f"{path}: expected {count * 8} payload bytes, got {data.size * 8}")
    extra = f.read(1)
    if extra:
        raise FileFormatError(f"{path}: trailing bytes after payload")
    return data


def write_image_f64(path, u):
    u = as_image(u)
    with open(path, "wb") as f:
        f.write(f"{u.shape[0]} {u.shape[1]}\n".encode("ascii"))
        f.write(u.astype("<f8").tobytes())


def read_image_f64(path):
    with open(path, "rb") as f:
        header = f.readline().decode("ascii", errors="replace").split()
        try:
            h, w = (int(tok) for tok in header)
            if h <= 0 or w <= 0:
                raise ValueError
        except ValueError:
            raise FileFormatError(
                f"{path}: malformed image header {header!r}, expected 'rows cols'")
        data = _read_payload(f, h * w, path)
    return data.reshape(h, w).astype(np.float64)


def write_sinogram_f64(path, sino):
    with open(path, "wb") as f:
        f.write(f"{sino.n_angles} {sino.n_det}\n".encode("ascii"))
        f.write((" ".join(repr(float(a)) for a in sino.angles) + "\n").encode("ascii"))
        f.write(sino.data.astype("<f8").tobytes())


def read_sinogram_f64(path):
    with open(path, "rb") as f:
        header = f.readline().decode("ascii", errors="replace").split()
        try:
            na, nd = (int(tok) for tok in header)
            if na <= 0 or nd <= 0:
                raise ValueError
        except ValueError:
            raise FileFormatError(
                f"{path}: malformed sinogram header {header!r}")
        try:
            angles = np.array([float(tok) for tok in f.readline().split()])
        except ValueError:
            raise FileFormatError(f"{path}: malformed angle list")
        if angles.size != na:
            raise FileFormatError(
                f"{path}: header promises {na} angles, found {angles.size}")
        data = _read_payload(f, na * nd, path)
    return Sinogram(data.reshape(na, nd).astype(np.float64), angles)


def write_png8(path, u):
    """8-bit grayscale export, linear rescale of the value range to [0, 255]."""
    from PIL import Image as PILImage

    u = as_image(u)
    lo, hi = float(u.min()), float(u.max())
    if hi > lo:
        scaled = np.round((u - lo) / (hi - lo) * 255.0)
    else:
        scaled = np.zeros_like(u)
    PILImage.fromarray(scaled.astype(np.uint8), mode="L").save(path)


def write_trace_csv(path, trace):
    with open(path, "w", encoding="ascii") as f:
        f.write(TRACE_CSV_HEADER + "\n")
        for r in trace.rows:
            f.write(f"{r.k},{r.lam!r},{r.lam_hat!r},{r.loss!r},{r.grad!r},"
                    f"{r.step!r},{r.backtracks},{r.tape_bytes}\n")


def read_trace_csv(path):
    with open(path, "r", encoding="ascii") as f:
        header = f.readline().rstrip("\n")
        if header != TRACE_CSV_HEADER:
            raise FileFormatError(f"{path}: unexpected CSV header {header!r}")
        trace = BilevelTrace()
        for line in f:
            tok = line.rstrip("\n").split(",")
            if len(tok) != 8:
                raise FileFormatError(f"{path}: malformed CSV row {line!r}")
            trace.rows.append(TraceRow(
                k=int(tok[0]), lam=float(tok[1]), lam_hat=float(tok[2]),
                loss=float(tok[3]), grad=float(tok[4]), step=float(tok[5]),
                backtracks=int(tok[6]), tape_bytes=int(tok[7]),
                accepted_loss=math.nan))
    return trace


def write_objective_csv(path, values):
    """Per-iteration objective log: header 'k,objective', one row per step."""
    with open(path, "w", encoding="ascii") as f:
        f.write("k,objective\n")
        for k, val in enumerate(values):
            f.write(f"{k},{val!r}\n")
