"""Dense linear algebra kernels: matmul, symmetric eigendecomposition via
cyclic Jacobi rotations, Gram-matrix SVD, rank diagnostics, and the mode-n
tensor product.

All storage is 64-bit float. Results are deterministic: fixed sweep order,
fixed summation order, and a fixed eigenvector sign convention (the
largest-magnitude component of each vector is nonnegative, ties broken by
lowest index).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError

_MAX_SWEEPS = 100


def _as_matrix(a, name: str = "matrix") -> np.ndarray:
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def _as_tensor(t, name: str = "tensor") -> np.ndarray:
    a = np.asarray(t, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


@dataclass
class SymEig:
    """Eigendecomposition of a symmetric matrix.

    eigenvalues are ascending; eigenvectors[:, j] pairs with eigenvalues[j].
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


@dataclass
class Svd:
    """Compact SVD A = u @ diag(s) @ v.T with s nonincreasing and nonnegative."""

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray


def matmul(a, b) -> np.ndarray:
    a = _as_matrix(a, "a")
    b = _as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} x {b.shape}")
    return a @ b


def fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is nonnegative.

    np.argmax takes the lowest index on ties, which is the documented
    tie-break.
    """
    out = vectors.copy()
    for j in range(out.shape[1]):
        i = int(np.argmax(np.abs(out[:, j])))
        if out[i, j] < 0.0:
            out[:, j] = -out[:, j]
    return out


def _off_diagonal_norm(a: np.ndarray) -> float:
    total = float(np.sum(a * a)) - float(np.sum(np.diag(a) ** 2))
    return float(np.sqrt(max(total, 0.0)))


def sym_eig(a, tol: float = 1e-12) -> SymEig:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps stop once the off-diagonal Frobenius norm drops below
    tol * ||a||_F, capped at 100 sweeps. Raises ConvergenceError if the cap
    is reached first and ValueError for non-square or non-symmetric input.
    """
    a = _as_matrix(a, "a")
    n, m = a.shape
    if n != m:
        raise ValueError(f"matrix must be square, got {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a))) if a.size else 0.0)
    asym = float(np.max(np.abs(a - a.T))) if n > 1 else 0.0
    if asym > 1e-10 * scale:
        raise ValueError(f"matrix not symmetric: max |a - a.T| = {asym:.3e}")

    work = 0.5 * (a + a.T)
    q = np.eye(n)
    fro = float(np.linalg.norm(work))
    threshold = tol * fro
    converged = _off_diagonal_norm(work) <= threshold
    for _ in range(_MAX_SWEEPS):
        if converged:
            break
        for p in range(n - 1):
            for r in range(p + 1, n):
                apr = work[p, r]
                if apr == 0.0:
                    continue
                tau = (work[r, r] - work[p, p]) / (2.0 * apr)
                if tau == 0.0:
                    t = 1.0
                else:
                    t = np.sign(tau) / (abs(tau) + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                col_p = work[:, p].copy()
                col_r = work[:, r].copy()
                work[:, p] = c * col_p - s * col_r
                work[:, r] = s * col_p + c * col_r
                row_p = work[p, :].copy()
                row_r = work[r, :].copy()
                work[p, :] = c * row_p - s * row_r
                work[r, :] = s * row_p + c * row_r
                work[p, r] = 0.0
                work[r, p] = 0.0
                q_p = q[:, p].copy()
                q_r = q[:, r].copy()
                q[:, p] = c * q_p - s * q_r
                q[:, r] = s * q_p + c * q_r
        converged = _off_diagonal_norm(work) <= threshold
    if not converged:
        raise ConvergenceError(
            f"Jacobi sweeps did not converge within {_MAX_SWEEPS} sweeps "
            f"(off-diagonal norm {_off_diagonal_norm(work):.3e}, "
            f"threshold {threshold:.3e})"
        )

    eigenvalues = np.diag(work).copy()
    order = np.argsort(eigenvalues, kind="stable")
    return SymEig(
        eigenvalues=eigenvalues[order],
        eigenvectors=fix_signs(q[:, order]),
    )


def _orthonormal_completion(u: np.ndarray, start: int) -> None:
    """Fill columns start.. of u with vectors orthonormal to the earlier ones."""
    m = u.shape[0]
    col = start
    candidate = 0
    while col < u.shape[1]:
        if candidate >= m:
            raise ConvergenceError("could not complete orthonormal basis")
        vec = np.zeros(m)
        vec[candidate] = 1.0
        candidate += 1
        for j in range(col):
            vec -= np.dot(u[:, j], vec) * u[:, j]
        norm = float(np.linalg.norm(vec))
        if norm > 0.5:
            u[:, col] = vec / norm
            col += 1


def svd(a) -> Svd:
    """Compact SVD through the Jacobi eigendecomposition of the Gram matrix.

    Works on A.T A when cols <= rows and on the transpose otherwise.
    Singular values below 1e-7 * s_max are numerically indistinguishable
    from zero on this route and are snapped to exactly zero; the matching
    left vectors come from an orthonormal completion.
    """
    a = _as_matrix(a, "a")
    m, n = a.shape
    if n > m:
        flipped = svd(a.T)
        return Svd(u=flipped.v, s=flipped.s, v=flipped.u)

    gram = a.T @ a
    eig = sym_eig(0.5 * (gram + gram.T), tol=1e-15)
    order = np.argsort(eig.eigenvalues, kind="stable")[::-1]
    lam = np.maximum(eig.eigenvalues[order], 0.0)
    v = eig.eigenvectors[:, order]
    s = np.sqrt(lam)
    if s[0] > 0.0:
        s[s <= 1e-7 * s[0]] = 0.0

    u = np.zeros((m, n))
    rank = int(np.sum(s > 0.0))
    for j in range(rank):
        u[:, j] = a @ v[:, j] / s[j]
        # polish orthogonality; matters only for clustered small singular values
        for i in range(j):
            u[:, j] -= np.dot(u[:, i], u[:, j]) * u[:, i]
        norm = float(np.linalg.norm(u[:, j]))
        if norm > 0.5:
            u[:, j] /= norm
        else:
            s[j] = 0.0
            rank = j
            break
    _orthonormal_completion(u, rank)
    return Svd(u=u, s=s, v=v)


def nuclear_norm(a) -> float:
    """Sum of singular values."""
    return float(np.sum(svd(a).s))


def effective_rank(a) -> float:
    """exp of the Shannon entropy of the normalized singular value spectrum.

    Always lies in [1, min(rows, cols)]; raises ValueError on an all-zero
    matrix, where the spectrum is undefined.
    """
    s = svd(a).s
    total = float(np.sum(s))
    if total <= 0.0:
        raise ValueError("effective rank is undefined for the zero matrix")
    p = s[s > 0.0] / total
    return float(np.exp(-np.sum(p * np.log(p))))


def mode_n_product(t, m, mode: int) -> np.ndarray:
    """Contract tensor mode `mode` of t with the columns of matrix m.

    Output shape equals t.shape with shape[mode] replaced by m.shape[0].
    """
    t = _as_tensor(t, "t")
    m = _as_matrix(m, "m")
    if not 0 <= mode < t.ndim:
        raise ValueError(f"mode {mode} out of range for tensor of ndim {t.ndim}")
    if m.shape[1] != t.shape[mode]:
        raise ValueError(
            f"dimension mismatch: matrix cols {m.shape[1]} vs tensor mode "
            f"{mode} of size {t.shape[mode]}"
        )
    out = np.tensordot(m, t, axes=([1], [mode]))
    return np.moveaxis(out, 0, mode)
