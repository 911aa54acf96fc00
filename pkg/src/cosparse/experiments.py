"""Desk-scale experiment harness: problem generation, phase-transition
sweeps over (sampling rate, cosparsity ratio), and partial-Fourier phantom
recovery with radial line sampling.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass

import numpy as np

from .operators import cosparsity, make_2d_dif
from .projections import project
from .solvers import (MeasurementProblem, RELAXED_VARIANTS, solve,
                      targeted_cosparsity)

SUCCESS_TOL = 1e-6
PSNR_SENTINEL = 999.0

_DIF_KINDS = ("dif-1d", "dif-2d", "fused-lasso")


@dataclass
class PhaseGrid:
    """Recovery rates over a grid of sampling rates (columns) and
    cosparsity-to-measurement ratios (rows)."""

    delta_values: list
    rho_values: list
    trials: int
    seed: int
    recovery_rate: np.ndarray

    def __post_init__(self):
        rate = np.asarray(self.recovery_rate, dtype=float)
        if rate.shape != (len(self.rho_values), len(self.delta_values)):
            raise ValueError("recovery_rate shape %s does not match the "
                             "value lists" % (rate.shape,))
        if np.any(rate < 0) or np.any(rate > 1):
            raise ValueError("recovery rates must lie in [0, 1]")
        self.recovery_rate = rate


def default_grid_values(n=20):
    """n evenly spaced values in (0, 1], the standard sweep axes."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return [(i + 1) / n for i in range(n)]


def gen_cosparse_problem(omega, l, m, noise_sigma=0.0, seed=None,
                         max_resample=64):
    """Random recovery problem: a unit-norm signal annihilated by l operator
    rows, a Gaussian measurement matrix with entry variance 1/m, and white
    Gaussian noise with per-entry deviation noise_sigma.

    The cosupport is drawn uniformly among size-l row subsets and resampled
    while it pins the signal space to zero.
    """
    if not 0 <= l <= omega.p:
        raise ValueError("l must lie in [0, %d], got %d" % (omega.p, l))
    if not 1 <= m <= omega.d:
        raise ValueError("m must lie in [1, %d], got %d" % (omega.d, m))
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be nonnegative")
    rng = np.random.default_rng(seed)
    x = None
    for _ in range(max_resample):
        cosupport = np.sort(rng.permutation(omega.p)[:l])
        g = rng.standard_normal(omega.d)
        cand = project(omega, cosupport, g)
        norm = float(np.linalg.norm(cand))
        if norm > 1e-12 * float(np.linalg.norm(g)):
            x = cand / norm
            break
    if x is None:
        raise ValueError(
            "every sampled size-%d cosupport pinned the signal to zero; "
            "the target cosparsity is too large for this operator" % l)
    M = rng.standard_normal((m, omega.d)) / math.sqrt(m)
    noise = noise_sigma * rng.standard_normal(m) if noise_sigma > 0 else np.zeros(m)
    y = M @ x + noise
    return MeasurementProblem(M=M, y=y, x_true=x, noise=noise)


def solver_cosparsity(omega, variant, m, l):
    """Cosparsity to hand the solver for an l-cosparse target.

    The hard-thresholding pair always works at the identifiability target;
    the pursuit pair uses the true cosparsity unless the operator has
    dependent rows (the difference family), where the tighter rule applies.
    """
    rule = "dif" if omega.kind in _DIF_KINDS else "general-position"
    base = variant[1:] if variant in RELAXED_VARIANTS else variant
    if base in ("aiht", "ahtp"):
        return targeted_cosparsity(rule, omega.d, m, l)
    if rule == "dif":
        return targeted_cosparsity(rule, omega.d, m, l)
    return l


def _phase_cell(task):
    (omega, cfg, seed, i, j, delta, rho, trials, tol, noise_sigma) = task
    d = omega.d
    m = int(round(delta * d))
    if not 1 <= m <= d:
        return i, j, 0.0
    l = d - int(round(rho * m))
    if not 1 <= l <= omega.p:
        return i, j, 0.0
    try:
        l_solve = solver_cosparsity(omega, cfg.variant, m, l)
    except ValueError:
        return i, j, 0.0
    wins = 0
    for t in range(trials):
        try:
            problem = gen_cosparse_problem(omega, l, m, noise_sigma,
                                           seed=[seed, i, j, t])
            result = solve(problem, omega, l_solve, cfg)
            err = float(np.linalg.norm(problem.x_true - result.x_hat))
            if err < tol * float(np.linalg.norm(problem.x_true)):
                wins += 1
        except Exception:
            # a failed trial is a non-recovery, never a sweep abort
            pass
    return i, j, (wins / trials) if trials else 0.0


def phase_diagram(omega, cfg, delta_values, rho_values, trials, seed,
                  workers=1, success_tol=SUCCESS_TOL, noise_sigma=0.0,
                  progress=None):
    """Recovery-rate grid for one solver configuration.

    Each cell maps (delta, rho) to m = round(delta*d), l = d - round(rho*m)
    and runs `trials` independent problems; success is relative error below
    success_tol. Cell trials are seeded from (seed, row, column, trial), so
    results do not depend on the worker count. ``progress``, if given, is
    called with (row, column, rate) as cells complete.
    """
    cfg.validate()
    if cfg.variant is None:
        raise ValueError("cfg.variant must be set for a phase sweep")
    if trials < 1:
        raise ValueError("trials must be at least 1")
    tasks = [(omega, cfg, seed, i, j, float(dv), float(rv), trials,
              success_tol, noise_sigma)
             for i, rv in enumerate(rho_values)
             for j, dv in enumerate(delta_values)]
    rate = np.zeros((len(rho_values), len(delta_values)))
    workers = max(1, int(workers))
    if workers == 1:
        for task in tasks:
            i, j, r = _phase_cell(task)
            rate[i, j] = r
            if progress is not None:
                progress(i, j, r)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_phase_cell, task) for task in tasks]
            for fut in as_completed(futures):
                i, j, r = fut.result()
                rate[i, j] = r
                if progress is not None:
                    progress(i, j, r)
    return PhaseGrid(delta_values=list(delta_values),
                     rho_values=list(rho_values), trials=trials, seed=seed,
                     recovery_rate=rate)


def save_phase_csv(grid, path, partial_cells=None):
    """Write a grid as CSV: one header row of sampling rates, one leading
    column of ratio values. ``partial_cells`` marks an interrupted sweep;
    cells absent from it are written as empty fields."""
    with open(path, "w") as fh:
        fh.write("# trials=%d seed=%s\n" % (grid.trials, grid.seed))
        if partial_cells is not None:
            fh.write("# partial: %d of %d cells completed\n"
                     % (len(partial_cells),
                        len(grid.rho_values) * len(grid.delta_values)))
        fh.write("rho/delta," +
                 ",".join("%.17g" % v for v in grid.delta_values) + "\n")
        for i, rv in enumerate(grid.rho_values):
            cells = []
            for j in range(len(grid.delta_values)):
                if partial_cells is not None and (i, j) not in partial_cells:
                    cells.append("")
                else:
                    cells.append("%.17g" % grid.recovery_rate[i, j])
            fh.write("%.17g," % rv + ",".join(cells) + "\n")


def load_phase_csv(path):
    """Read a grid written by save_phase_csv. Empty cells (from an
    interrupted sweep) load as 0."""
    trials, seed = 0, None
    rows = []
    header = None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for token in line[1:].split():
                    if token.startswith("trials="):
                        trials = int(token[7:])
                    elif token.startswith("seed="):
                        val = token[5:]
                        seed = None if val == "None" else int(val)
                continue
            parts = line.split(",")
            if header is None:
                header = [float(v) for v in parts[1:]]
                continue
            rows.append((float(parts[0]),
                         [float(v) if v else 0.0 for v in parts[1:]]))
    if header is None or not rows:
        raise ValueError("no grid data in %s" % path)
    rho_values = [r[0] for r in rows]
    rate = np.array([r[1] for r in rows], dtype=float)
    return PhaseGrid(delta_values=header, rho_values=rho_values,
                     trials=trials, seed=seed, recovery_rate=rate)


# ---------------------------------------------------------------------------
# phantom recovery from partial Fourier measurements

_ELLIPSES = (
    # (added value, semi-axis x, semi-axis y, center x, center y, angle deg)
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0),
    (-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0),
    (-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0),
    (0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, 0.10, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, -0.10, 0.0),
    (0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0),
    (0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0),
    (0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0),
)


def shepp_logan(h, w):
    """Piecewise-constant head phantom on an h x w grid, values in [0, 1].

    The standard ten-ellipse parameterization with soft-tissue contrast;
    overlapping ellipse values are summed.
    """
    if h < 16 or w < 16:
        raise ValueError("phantom dimensions must be at least 16")
    ys = np.linspace(1.0, -1.0, h)[:, None]
    xs = np.linspace(-1.0, 1.0, w)[None, :]
    img = np.zeros((h, w))
    for val, a, b, x0, y0, ang in _ELLIPSES:
        th = math.radians(ang)
        xr = (xs - x0) * math.cos(th) + (ys - y0) * math.sin(th)
        yr = -(xs - x0) * math.sin(th) + (ys - y0) * math.cos(th)
        img[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += val
    return np.clip(img, 0.0, 1.0)


class RadialFourierOperator:
    """Masked orthonormal 2-D Fourier measurements along radial lines,
    realized as a real operator by stacking real and imaginary parts.

    The mask is `lines` equiangular lines through the centered grid,
    symmetrized under frequency negation so real images produce
    conjugate-symmetric measurements and a real adjoint. The geometry is
    deterministic; ``seed`` is accepted only so generators share a calling
    convention.
    """

    def __init__(self, h, w, lines, seed=None):
        if lines < 1:
            raise ValueError("need at least one radial line")
        if h < 2 or w < 2:
            raise ValueError("grid must be at least 2 x 2")
        shifted = np.zeros((h, w), dtype=bool)
        cy, cx = h // 2, w // 2
        radius = int(math.ceil(math.hypot(h, w) / 2.0)) + 1
        for k in range(lines):
            theta = math.pi * k / lines
            s, c = math.sin(theta), math.cos(theta)
            for r in range(-radius, radius + 1):
                u = int(round(cy + r * s))
                v = int(round(cx + r * c))
                if 0 <= u < h and 0 <= v < w:
                    shifted[u, v] = True
        mask = np.fft.ifftshift(shifted)
        neg_rows = (-np.arange(h)) % h
        neg_cols = (-np.arange(w)) % w
        mask = mask | mask[np.ix_(neg_rows, neg_cols)]
        self.h, self.w, self.lines = h, w, lines
        self.mask = mask
        self.m_complex = int(mask.sum())
        self.shape = (2 * self.m_complex, h * w)

    @property
    def mask_fraction(self):
        """Selected frequency cells as a fraction of the image dimension."""
        return self.m_complex / (self.h * self.w)

    def matvec(self, x):
        img = np.asarray(x, dtype=float).reshape(self.h, self.w)
        spectrum = np.fft.fft2(img, norm="ortho")
        vals = spectrum[self.mask]
        return np.concatenate([vals.real, vals.imag])

    def rmatvec(self, y):
        y = np.asarray(y, dtype=float)
        if y.shape[0] != self.shape[0]:
            raise ValueError("expected %d stacked measurements, got %d"
                             % (self.shape[0], y.shape[0]))
        spectrum = np.zeros((self.h, self.w), dtype=complex)
        spectrum[self.mask] = y[:self.m_complex] + 1j * y[self.m_complex:]
        img = np.fft.ifft2(spectrum, norm="ortho")
        return img.real.ravel()


def radial_fourier_operator(h, w, lines, seed=None):
    """Build the radial-line partial Fourier measurement operator."""
    return RadialFourierOperator(h, w, lines, seed=seed)


def psnr(reference, estimate):
    """Peak signal-to-noise ratio in dB against peak value 1.0. Identical
    images return the finite sentinel 999."""
    ref = np.asarray(reference, dtype=float)
    est = np.asarray(estimate, dtype=float)
    if ref.shape != est.shape:
        raise ValueError("image shapes differ: %s vs %s"
                         % (ref.shape, est.shape))
    mse = float(np.mean((ref - est) ** 2))
    if mse == 0.0:
        return PSNR_SENTINEL
    return 10.0 * math.log10(1.0 / mse)


PHANTOM_VARIANTS = ("rasp", "racosamp", "aiht", "rahtp")


def phantom_experiment(h, w, lines, cfg, snr_db=None, seed=0, l=None):
    """Recover the phantom from radial Fourier measurements.

    Measures the phantom, optionally adds white noise scaled to the given
    SNR in dB, runs the configured solver against the 2-D difference
    operator, and post-processes by clipping to [0, 1]. Returns a report
    dict and the images (truth, zero-fill baseline, reconstruction).
    """
    cfg.validate()
    if cfg.variant not in PHANTOM_VARIANTS:
        raise ValueError("phantom recovery supports variants %s, got %r"
                         % (", ".join(PHANTOM_VARIANTS), cfg.variant))
    truth = shepp_logan(h, w)
    x = truth.ravel()
    omega = make_2d_dif(h, w)
    op = radial_fourier_operator(h, w, lines)
    y_clean = op.matvec(x)
    if snr_db is None:
        noise = np.zeros_like(y_clean)
    else:
        rng = np.random.default_rng(seed)
        raw = rng.standard_normal(y_clean.shape[0])
        scale = float(np.linalg.norm(y_clean)) / (
            float(np.linalg.norm(raw)) * 10.0 ** (snr_db / 20.0))
        noise = scale * raw
    y = y_clean + noise
    l_true = cosparsity(omega, x)
    l_target = l if l is not None else targeted_cosparsity(
        "dif", omega.d, op.m_complex, l_true)
    problem = MeasurementProblem(M=op, y=y, x_true=x, noise=noise)
    result = solve(problem, omega, l_target, cfg)
    recon = np.clip(result.x_hat, 0.0, 1.0).reshape(h, w)
    zero_fill = np.clip(op.rmatvec(y), 0.0, 1.0).reshape(h, w)
    x_norm = float(np.linalg.norm(x))
    report = {
        "height": h,
        "width": w,
        "lines": lines,
        "mask_cells": op.m_complex,
        "mask_fraction": op.mask_fraction,
        "stacked_measurements": op.shape[0],
        "cosparsity_true": int(l_true),
        "cosparsity_target": int(l_target),
        "variant": cfg.variant,
        "snr_db": snr_db,
        "seed": seed,
        "iterations": result.iterations,
        "converged": bool(result.converged),
        "relative_error": float(np.linalg.norm(x - recon.ravel()) / x_norm),
        "psnr": psnr(truth, recon),
        "psnr_zero_fill": psnr(truth, zero_fill),
        "warnings": list(result.warnings),
    }
    images = {"truth": truth, "zero_fill": zero_fill,
              "reconstruction": recon}
    return report, images


# ---------------------------------------------------------------------------
# file output helpers

def save_pgm(image, path):
    """Write a [0, 1] grayscale image as binary PGM (maxval 255)."""
    img = np.asarray(image, dtype=float)
    if img.ndim != 2:
        raise ValueError("image must be 2-D")
    quantized = np.clip(np.rint(np.clip(img, 0.0, 1.0) * 255.0),
                        0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (img.shape[1], img.shape[0]))
        fh.write(quantized.tobytes())


def save_image_csv(image, path):
    """Write an image as raw CSV, one row per line."""
    img = np.asarray(image, dtype=float)
    if img.ndim != 2:
        raise ValueError("image must be 2-D")
    with open(path, "w") as fh:
        for row in img:
            fh.write(",".join("%.17g" % v for v in row) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError("cannot serialize %r" % type(obj))


def save_report_json(report, path):
    """Write an experiment report as indented JSON with sorted keys."""
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
