"""Sparse symmetric systems and a Jacobi-preconditioned conjugate gradient solver.

Matrices are stored in compressed sparse row form, assembled from COO
triplets with duplicate entries summed. Storage is delegated to
:mod:`scipy.sparse`; the CG iteration itself is written out explicitly so
that the stopping rule, the preconditioner, and the per-iteration residual
history are fully under our control and visible to diagnostics.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = ["CsrMatrix", "SolveReport", "SolverError", "csr_from_triplets", "cg_solve"]

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Raised when a linear system cannot be set up or solved."""


@dataclass(frozen=True)
class CsrMatrix:
    """Square sparse matrix in compressed sparse row format.

    Fields mirror the classic three-array CSR layout: ``row_offsets`` has
    length ``n + 1``, ``column_indices`` and ``values`` have one entry per
    stored nonzero, and the columns within each row are sorted.
    """

    n: int
    row_offsets: np.ndarray
    column_indices: np.ndarray
    values: np.ndarray
    _scipy: sp.csr_matrix = field(repr=False, compare=False)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Return the matrix-vector product ``A @ x``."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise SolverError(f"matvec expects shape ({self.n},), got {x.shape}")
        return self._scipy @ x

    def diagonal(self) -> np.ndarray:
        return self._scipy.diagonal()

    def toarray(self) -> np.ndarray:
        return self._scipy.toarray()

    def __add__(self, other: "CsrMatrix") -> "CsrMatrix":
        if not isinstance(other, CsrMatrix):
            return NotImplemented
        if other.n != self.n:
            raise SolverError(f"size mismatch: {self.n} vs {other.n}")
        return _wrap(self._scipy + other._scipy)

    def scaled(self, alpha: float) -> "CsrMatrix":
        return _wrap(self._scipy * float(alpha))


def _wrap(mat: sp.csr_matrix) -> CsrMatrix:
    mat = sp.csr_matrix(mat)
    mat.sum_duplicates()
    mat.sort_indices()
    return CsrMatrix(
        n=mat.shape[0],
        row_offsets=mat.indptr,
        column_indices=mat.indices,
        values=mat.data,
        _scipy=mat,
    )


def csr_from_triplets(
    n: int,
    rows: np.ndarray,
    cols: np.ndarray,
    vals: np.ndarray,
) -> CsrMatrix:
    """Assemble an ``n`` by ``n`` CSR matrix from COO triplets.

    Duplicate ``(row, col)`` entries are summed, which is exactly the
    behaviour element-by-element finite element assembly relies on.

    Parameters
    ----------
    n : int
        Matrix dimension.
    rows, cols : array_like of int
        Row and column index of each triplet; must lie in ``[0, n)``.
    vals : array_like of float
        Value of each triplet.
    """
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    vals = np.asarray(vals, dtype=np.float64).ravel()
    if not (rows.shape == cols.shape == vals.shape):
        raise SolverError("triplet arrays must have identical lengths")
    if n <= 0:
        raise SolverError(f"matrix dimension must be positive, got {n}")
    if rows.size and (rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= n):
        raise SolverError("triplet indices out of range")
    coo = sp.coo_matrix((vals, (rows, cols)), shape=(n, n))
    return _wrap(coo.tocsr())


@dataclass(frozen=True)
class SolveReport:
    """Outcome of an iterative solve."""

    iterations: int
    final_residual_norm: float
    converged: bool


def cg_solve(
    matrix: CsrMatrix,
    rhs: np.ndarray,
    x0: np.ndarray | None = None,
    tol: float = 1e-10,
    max_iter: int | None = None,
) -> tuple[np.ndarray, SolveReport]:
    """Solve ``A x = b`` for symmetric positive definite ``A``.

    Conjugate gradients with Jacobi (diagonal) preconditioning. Iteration
    stops once the preconditioned residual norm drops to ``tol`` times the
    norm of ``b``, or when ``max_iter`` iterations (default ``10 n``) have
    run, whichever comes first.

    Returns
    -------
    (x, report) : tuple of ndarray and SolveReport
        The solution estimate and a report with the iteration count, final
        residual norm, and a convergence flag.

    Raises
    ------
    SolverError
        If the matrix has a zero diagonal entry, which makes the Jacobi
        preconditioner undefined.
    """
    n = matrix.n
    b = np.asarray(rhs, dtype=np.float64)
    if b.shape != (n,):
        raise SolverError(f"rhs must have shape ({n},), got {b.shape}")
    diag = matrix.diagonal()
    if np.any(diag == 0.0):
        raise SolverError("zero diagonal entry; Jacobi preconditioner undefined")
    inv_diag = 1.0 / diag
    if max_iter is None:
        max_iter = 10 * n

    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return np.zeros(n), SolveReport(iterations=0, final_residual_norm=0.0, converged=True)
    threshold = tol * b_norm

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    r = b - matrix.matvec(x)
    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    res_norm = float(np.sqrt(max(rz, 0.0)))
    history = [res_norm]

    iterations = 0
    while res_norm > threshold and iterations < max_iter:
        ap = matrix.matvec(p)
        pap = float(p @ ap)
        if pap <= 0.0:
            # matrix not positive definite along p; stop with what we have
            break
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        z = inv_diag * r
        rz_next = float(r @ z)
        res_norm = float(np.sqrt(max(rz_next, 0.0)))
        history.append(res_norm)
        beta = rz_next / rz
        rz = rz_next
        p = z + beta * p
        iterations += 1

    converged = res_norm <= threshold
    if log.isEnabledFor(logging.DEBUG):
        log.debug(
            "cg: n=%d iters=%d residual=%.3e converged=%s history=%s",
            n, iterations, res_norm, converged,
            ["%.3e" % v for v in history],
        )
    if not converged:
        log.warning("cg did not converge: n=%d iters=%d residual=%.3e", n, iterations, res_norm)
    return x, SolveReport(iterations=iterations, final_residual_norm=res_norm, converged=converged)
