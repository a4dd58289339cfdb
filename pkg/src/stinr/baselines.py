"""Reference low-rank reconstructors and spectral diagnostics: ridge ALS
matrix factorization, singular value soft-thresholding completion, a
direct single-sided DFT, and per-snapshot rank tracking.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import GridField
from .errors import ConfigError, DataError
from .linalg import effective_rank, nuclear_norm, svd
from .rng import Rng

_ALS_INIT_SEED = 0x5EED  # fixed: mf_als is deterministic by construction


@dataclass
class MfConfig:
    rank: int
    ridge: float = 1e-3
    max_iters: int = 200
    tol: float = 1e-6

    def __post_init__(self):
        if self.rank < 1:
            raise ConfigError("rank must be at least 1")
        if self.tol <= 0:
            raise ConfigError("tolerance must be positive")
        if self.ridge < 0:
            raise ConfigError("ridge must be nonnegative")


@dataclass
class MfResult:
    completed: np.ndarray
    objective_history: list[float]
    converged: bool
    iterations: int


def _solve_factor(target: np.ndarray, mask: np.ndarray, other: np.ndarray,
                  ridge: float) -> np.ndarray:
    """Ridge least squares rows: row i fits target[i, mask_i] with other rows."""
    r = other.shape[1]
    out = np.zeros((target.shape[0], r))
    eye = ridge * np.eye(r)
    for i in range(target.shape[0]):
        keep = mask[i]
        a = other[keep]
        out[i] = np.linalg.solve(a.T @ a + eye, a.T @ target[i, keep])
    return out


def mf_als(field: GridField, cfg: MfConfig) -> MfResult:
    """Alternating ridge least squares on the observed cells of a 2-D field.

    Requires every row and column to carry at least one observation.
    Iterates until the relative objective change drops below cfg.tol;
    non-convergence is reported with the final residual but still returns
    the completion.
    """
    if field.values.ndim != 2:
        raise DataError("matrix factorization needs a 2-D field")
    mask = field.observed_mask()
    if not mask.any():
        raise DataError("no observed cells")
    if np.any(~mask.any(axis=1)):
        raise DataError("a row has no observations")
    if np.any(~mask.any(axis=0)):
        raise DataError("a column has no observations")
    x = field.values
    n, t = x.shape
    rng = Rng(_ALS_INIT_SEED)
    u = rng.normal_matrix(n, cfg.rank)
    v = rng.normal_matrix(t, cfg.rank)

    def objective() -> float:
        resid = (x - u @ v.T)[mask]
        return float(np.sum(resid**2) + cfg.ridge * (np.sum(u**2) + np.sum(v**2)))

    history = [objective()]
    converged = False
    iterations = 0
    for iterations in range(1, cfg.max_iters + 1):
        u = _solve_factor(x, mask, v, cfg.ridge)
        history.append(objective())
        v = _solve_factor(x.T, mask.T, u, cfg.ridge)
        history.append(objective())
        prev, cur = history[-3], history[-1]
        if abs(prev - cur) <= cfg.tol * max(prev, 1e-300):
            converged = True
            break
    if not converged:
        resid = float(np.sqrt(np.mean(((x - u @ v.T)[mask]) ** 2)))
        warnings.warn(
            f"ALS did not converge in {cfg.max_iters} iterations "
            f"(observed RMSE {resid:.6g})",
            stacklevel=2,
        )
    return MfResult(
        completed=u @ v.T,
        objective_history=history,
        converged=converged,
        iterations=iterations,
    )


@dataclass
class SvtConfig:
    threshold: float
    step: float = 1.0
    max_iters: int = 200
    tol: float = 1e-6

    def __post_init__(self):
        if self.threshold <= 0:
            raise ConfigError("threshold must be positive")
        if self.step <= 0:
            raise ConfigError("step must be positive")


@dataclass
class SvtResult:
    completed: np.ndarray
    nuclear_norm: float
    converged: bool
    iterations: int


def svt_complete(field: GridField, cfg: SvtConfig) -> SvtResult:
    """Iterative singular value soft-thresholding with observed projection.

    Each iteration shrinks the singular values by the threshold, then
    resets the observed entries, so they are preserved exactly on exit.
    """
    if field.values.ndim != 2:
        raise DataError("SVT completion needs a 2-D field")
    mask = field.observed_mask()
    if not mask.any():
        raise DataError("no observed cells")
    x = np.where(mask, field.values, 0.0)
    nuc = 0.0
    converged = False
    iterations = 0
    for iterations in range(1, cfg.max_iters + 1):
        dec = svd(x)
        shrunk = np.maximum(dec.s - cfg.step * cfg.threshold, 0.0)
        nuc = float(np.sum(shrunk))
        new = (dec.u * shrunk) @ dec.v.T
        new[mask] = field.values[mask]
        delta = float(np.linalg.norm(new - x)) / max(float(np.linalg.norm(x)), 1e-300)
        x = new
        if delta <= cfg.tol:
            converged = True
            break
    if not converged:
        warnings.warn(
            f"SVT did not converge in {cfg.max_iters} iterations",
            stacklevel=2,
        )
    return SvtResult(
        completed=x,
        nuclear_norm=nuc,
        converged=converged,
        iterations=iterations,
    )


# ---------------------------------------------------------------------------
# Spectral diagnostics
# ---------------------------------------------------------------------------


def dft_direct(series: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two-sided DFT by direct summation, returned as (real, imag) parts.

    O(n^2) with O(n) memory; series lengths in scope stay below ~1e4.
    """
    x = np.asarray(series, dtype=np.float64).reshape(-1)
    n = x.size
    re = np.empty(n)
    im = np.empty(n)
    base = 2.0 * np.pi * np.arange(n) / n
    for j in range(n):
        angle = base * j
        re[j] = float(np.dot(x, np.cos(angle)))
        im[j] = -float(np.dot(x, np.sin(angle)))
    return re, im


def fourier_spectrum(series: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Single-sided amplitude spectrum of a real series.

    Returns (frequencies in cycles per sample, amplitudes) over bins
    0..floor(n/2). Amplitudes are |X|/n with interior bins doubled to fold
    in the negative frequencies; bin 0 and, for even n, the Nyquist bin
    appear once in the two-sided transform and are not doubled.
    """
    x = np.asarray(series, dtype=np.float64).reshape(-1)
    n = x.size
    if n < 2:
        raise DataError("spectrum needs a series of length at least 2")
    re, im = dft_direct(x)
    half = n // 2
    mags = np.sqrt(re[: half + 1] ** 2 + im[: half + 1] ** 2) / n
    last_doubled = half + 1 if n % 2 == 1 else half
    mags[1:last_doubled] *= 2.0
    freqs = np.arange(half + 1, dtype=np.float64) / n
    return freqs, mags


@dataclass
class LowRankPoint:
    step: int
    nuclear_norm: float
    effective_rank: float  # nan when undefined (zero snapshot)


def lowrank_track(snapshots, steps=None) -> list[LowRankPoint]:
    """Nuclear norm and effective rank per 2-D snapshot.

    Zero snapshots get a nan effective rank and a warning instead of an
    abort, so tracking a run that starts at zero still works.
    """
    out = []
    for i, snap in enumerate(snapshots):
        mat = snap.values if isinstance(snap, GridField) else np.asarray(snap, dtype=np.float64)
        if mat.ndim != 2:
            raise DataError("low-rank tracking needs 2-D snapshots")
        step = int(steps[i]) if steps is not None else i
        nuc = nuclear_norm(mat)
        if nuc == 0.0:
            warnings.warn(f"snapshot {step} is zero: effective rank undefined",
                          stacklevel=2)
            out.append(LowRankPoint(step=step, nuclear_norm=0.0,
                                    effective_rank=float("nan")))
        else:
            out.append(LowRankPoint(step=step, nuclear_norm=nuc,
                                    effective_rank=effective_rank(mat)))
    return out


def lowrank_track_csv(points: list[LowRankPoint], path) -> None:
    with open(path, "w") as fh:
        fh.write("step,nuclear_norm,effective_rank\n")
        for p in points:
            fh.write(f"{p.step},{p.nuclear_norm:.17g},{p.effective_rank:.17g}\n")


def spectrum_csv(freqs: np.ndarray, mags: np.ndarray, path) -> None:
    with open(path, "w") as fh:
        fh.write("bin,frequency,magnitude\n")
        for i, (f, m) in enumerate(zip(freqs, mags)):
            fh.write(f"{i},{f:.17g},{m:.17g}\n")
