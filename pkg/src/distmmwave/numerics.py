"""Dense complex linear-algebra kernels.

The SVD is a one-sided (Hestenes) Jacobi iteration run on the triangular
factor of a column-pivoted QR decomposition. Pivoted QR exposes numerical
rank cheaply, so the tall, low-rank channel matrices that dominate this
package reduce to a handful of columns before any rotation is applied.
Jacobi keeps small singular values accurate to working precision, which the
Gram-matrix route cannot do (it squares the condition number).
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
import scipy.linalg

__all__ = [
    "NumericalError",
    "SvdConvergenceError",
    "RankDeficientError",
    "SvdResult",
    "as_matrix",
    "svd",
    "log_det_capacity",
    "pseudo_inverse",
]

_EPS = np.finfo(float).eps

#: relative singular-value cutoff used by :func:`pseudo_inverse`
RANK_TOL = 1e-10


class NumericalError(ArithmeticError):
    """Base class for numerical failures raised by this package."""


class SvdConvergenceError(NumericalError):
    """Jacobi sweeps hit the iteration cap before the columns were orthogonal.

    Attributes
    ----------
    residual : float
        Largest normalized column inner product ``|b_p^H b_q| / (|b_p| |b_q|)``
        left after the last sweep.
    sweeps : int
        Number of sweeps performed.
    """

    def __init__(self, residual: float, sweeps: int):
        super().__init__(
            f"Jacobi SVD did not converge after {sweeps} sweeps "
            f"(residual {residual:.3e})"
        )
        self.residual = residual
        self.sweeps = sweeps


class RankDeficientError(NumericalError):
    """A matrix that must have full rank is numerically rank deficient."""


class SvdResult(NamedTuple):
    """Thin SVD ``a = u @ diag(s) @ v.conj().T``.

    ``s`` is non-increasing and has ``min(rows, cols)`` entries; ``u`` and
    ``v`` have orthonormal columns.
    """

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a finite, non-empty 2-D complex128 array."""
    arr = np.asarray(a, dtype=complex)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf entries")
    return arr


def _complete_basis(q: np.ndarray, n: int) -> np.ndarray:
    """Extend the orthonormal columns of ``q`` (n x k) to an n x n unitary."""
    k = q.shape[1]
    if k == n:
        return q
    if k == 0:
        return np.eye(n, dtype=complex)
    full, _ = np.linalg.qr(q, mode="complete")
    return np.hstack([q, full[:, k:]])


def _jacobi(b: np.ndarray, max_sweeps: int, tol: float):
    """Orthogonalize the columns of ``b`` by plane rotations.

    Returns ``(b_rot, v)`` with ``b @ v == b_rot`` and mutually orthogonal
    columns in ``b_rot``; ``v`` is unitary.
    """
    b = b.copy()
    n = b.shape[1]
    v = np.eye(n, dtype=complex)
    residual = 0.0
    for sweep in range(max_sweeps):
        rotated = False
        residual = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                bp, bq = b[:, p], b[:, q]
                alpha = np.vdot(bp, bp).real
                beta = np.vdot(bq, bq).real
                gamma = np.vdot(bp, bq)
                mag = abs(gamma)
                if mag == 0.0:
                    continue
                scale = np.sqrt(alpha * beta)
                residual = max(residual, mag / scale)
                if mag <= tol * scale:
                    continue
                rotated = True
                # strip the phase so the 2x2 Gram block is real symmetric
                phase = gamma / mag
                zeta = (beta - alpha) / (2.0 * mag)
                t = np.copysign(1.0, zeta) / (abs(zeta) + np.hypot(1.0, zeta))
                c = 1.0 / np.hypot(1.0, t)
                s = c * t
                bq_aligned = bq / phase
                b[:, p], b[:, q] = c * bp - s * bq_aligned, s * bp + c * bq_aligned
                vq_aligned = v[:, q] / phase
                v[:, p], v[:, q] = c * v[:, p] - s * vq_aligned, s * v[:, p] + c * vq_aligned
        if not rotated:
            return b, v
    raise SvdConvergenceError(residual, max_sweeps)


def svd(a) -> SvdResult:
    """Thin singular value decomposition of a complex matrix.

    Parameters
    ----------
    a : array_like, shape (m, n)
        Finite, non-empty matrix.

    Returns
    -------
    SvdResult
        ``u`` (m x k), ``s`` (k,), ``v`` (n x k) with ``k = min(m, n)``.

    Raises
    ------
    SvdConvergenceError
        If the Jacobi sweeps exceed ``100 * min(m, n)``.
    """
    a = as_matrix(a)
    m, n = a.shape
    if m < n:
        res = svd(a.conj().T)
        return SvdResult(res.v, res.s, res.u)

    max_sweeps = 100 * n
    q, r, piv = scipy.linalg.qr(a, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    cutoff = max(m, n) * _EPS * diag[0]
    k = int(np.count_nonzero(diag > cutoff)) if diag[0] > 0 else 0
    if k == 0:
        return SvdResult(q, np.zeros(n), np.eye(n, dtype=complex))

    # a ~= q[:, :k] @ c with the pivoting undone
    c = np.empty((k, n), dtype=complex)
    c[:, piv] = r[:k]
    q2, r2 = np.linalg.qr(c.conj().T)
    # r2 @ w = b with orthogonal columns  ->  r2 = u2 diag(sig) w^H
    b, w = _jacobi(r2, max_sweeps, tol=n * _EPS)
    sig = np.linalg.norm(b, axis=0)
    order = np.argsort(-sig, kind="stable")
    sig, b, w = sig[order], b[:, order], w[:, order]
    nonzero = sig > 0
    u2 = np.zeros_like(b)
    u2[:, nonzero] = b[:, nonzero] / sig[nonzero]
    u2 = _complete_basis(u2[:, nonzero], k)

    # c^H = q2 r2 = q2 u2 diag(sig) w^H  ->  c = w diag(sig) (q2 u2)^H
    u = np.hstack([q[:, :k] @ w, q[:, k:]])
    v = _complete_basis(q2 @ u2, n)
    s = np.concatenate([sig, np.zeros(n - k)])
    return SvdResult(u, s, v)


def log_det_capacity(h, symbol_energy: float, noise_var: float) -> float:
    """``log2 det(I + (E/sigma^2) H H^H)`` in bits/s/Hz.

    Evaluated by a Cholesky factorization of the smaller Gram matrix, so the
    cost is set by ``min(rows, cols)``.
    """
    if noise_var <= 0:
        raise ValueError("noise_var must be positive")
    if symbol_energy < 0:
        raise ValueError("symbol_energy must be non-negative")
    h = as_matrix(h, "h")
    gram = h @ h.conj().T if h.shape[0] <= h.shape[1] else h.conj().T @ h
    mat = np.eye(gram.shape[0]) + (symbol_energy / noise_var) * gram
    chol = np.linalg.cholesky(mat)
    return float(2.0 * np.sum(np.log2(np.diag(chol).real)))


def pseudo_inverse(a) -> np.ndarray:
    """Moore-Penrose inverse; singular values below ``1e-10 * s[0]`` are dropped."""
    a = as_matrix(a)
    u, s, v = svd(a)
    keep = s > RANK_TOL * s[0] if s[0] > 0 else np.zeros_like(s, dtype=bool)
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    return (v * inv) @ u.conj().T
