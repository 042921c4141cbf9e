"""Compressed sparse row matrices and a Jacobi-preconditioned BiCGStab solver.

Assembly produces (row, col, value) triplets with duplicates; `SparseMatrix.
from_triplets` sums and compresses them.  The solver handles the nonsymmetric
systems coming from the advection part of the generator; matrix-vector
products go through the active kernel backend.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels

__all__ = ["SparseMatrix", "SolveReport", "spmv", "solve"]


class SparseMatrix:
    """Square CSR matrix with sorted, unique column indices per row."""

    def __init__(self, n, indptr, indices, data):
        self.n = int(n)
        self.indptr = indptr
        self.indices = indices
        self.data = data

    @classmethod
    def from_triplets(cls, n, rows, cols, values):
        """Build from coordinate triplets, summing duplicate positions.

        Entries that sum to exactly zero are not stored.
        """
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if not (rows.shape == cols.shape == values.shape):
            raise ValueError("rows, cols and values must have equal length")
        if rows.size and (
            rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= n
        ):
            raise ValueError("triplet index out of range")

        order = np.lexsort((cols, rows))
        r = rows[order]
        c = cols[order]
        v = values[order]
        if r.size:
            boundary = np.empty(r.size, dtype=bool)
            boundary[0] = True
            boundary[1:] = (r[1:] != r[:-1]) | (c[1:] != c[:-1])
            starts = np.flatnonzero(boundary)
            summed = np.add.reduceat(v, starts)
            r = r[starts]
            c = c[starts]
            keep = summed != 0.0
            r, c, summed = r[keep], c[keep], summed[keep]
        else:
            summed = v

        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(r, minlength=n), out=indptr[1:])
        return cls(n, indptr, c.astype(np.int64), summed)

    @property
    def nnz(self):
        return self.data.size

    def matvec(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise ValueError(f"vector length {x.shape} does not match n={self.n}")
        return _kernels.csr_matvec(self.data, self.indices, self.indptr, x)

    def diagonal(self):
        d = np.zeros(self.n, dtype=np.float64)
        row_ids = np.repeat(np.arange(self.n), np.diff(self.indptr))
        hit = self.indices == row_ids
        d[row_ids[hit]] = self.data[hit]
        return d

    def with_identity_rows(self, mask, value=1.0):
        """Copy with every masked row replaced by `value` on the diagonal."""
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (self.n,):
            raise ValueError("mask length must equal the matrix dimension")
        row_ids = np.repeat(np.arange(self.n), np.diff(self.indptr))
        keep = ~mask[row_ids]
        replaced = np.flatnonzero(mask)
        rows = np.concatenate([row_ids[keep], replaced])
        cols = np.concatenate([self.indices[keep], replaced])
        vals = np.concatenate([self.data[keep], np.full(replaced.size, value)])
        return SparseMatrix.from_triplets(self.n, rows, cols, vals)

    def add_scaled(self, other, factor):
        """self + factor * other (both n x n)."""
        if other.n != self.n:
            raise ValueError("dimension mismatch")
        row_self = np.repeat(np.arange(self.n), np.diff(self.indptr))
        row_other = np.repeat(np.arange(self.n), np.diff(other.indptr))
        rows = np.concatenate([row_self, row_other])
        cols = np.concatenate([self.indices, other.indices])
        vals = np.concatenate([self.data, factor * other.data])
        return SparseMatrix.from_triplets(self.n, rows, cols, vals)

    def scaled(self, factor):
        return SparseMatrix(self.n, self.indptr, self.indices, factor * self.data)

    def todense(self):
        out = np.zeros((self.n, self.n), dtype=np.float64)
        row_ids = np.repeat(np.arange(self.n), np.diff(self.indptr))
        out[row_ids, self.indices] = self.data
        return out


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    residual: float
    converged: bool


def spmv(a, x):
    """y = A x."""
    return a.matvec(x)


def solve(a, b, x0=None, tol=1e-10, max_iter=None):
    """Solve A x = b with BiCGStab and diagonal preconditioning.

    Parameters
    ----------
    a : SparseMatrix
    b : ndarray
    x0 : ndarray, optional
        Initial guess (zero if omitted).
    tol : float
        Stopping threshold on the true relative residual ||b - Ax|| / ||b||.
    max_iter : int, optional
        Defaults to 10 n.

    Returns
    -------
    (x, SolveReport)
        On breakdown or iteration exhaustion the report has
        ``converged=False`` and x is the best iterate reached.
    """
    b = np.asarray(b, dtype=np.float64)
    n = a.n
    if b.shape != (n,):
        raise ValueError("right-hand side length must equal the matrix dimension")
    if max_iter is None:
        max_iter = 10 * n

    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(n), SolveReport(iterations=0, residual=0.0, converged=True)

    inv_diag = a.diagonal()
    inv_diag = np.where(inv_diag != 0.0, inv_diag, 1.0)
    inv_diag = 1.0 / inv_diag

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    r = b - a.matvec(x)
    rhat = r.copy()
    rho_old = 1.0
    alpha = 1.0
    omega = 1.0
    v = np.zeros(n)
    p = np.zeros(n)

    def true_residual(xc):
        return float(np.linalg.norm(b - a.matvec(xc))) / bnorm

    res = float(np.linalg.norm(r)) / bnorm
    if res <= tol:
        return x, SolveReport(iterations=0, residual=res, converged=True)

    for it in range(1, max_iter + 1):
        rho = float(rhat @ r)
        if rho == 0.0:
            return x, SolveReport(iterations=it, residual=true_residual(x), converged=False)
        if it == 1:
            p = r.copy()
        else:
            beta = (rho / rho_old) * (alpha / omega)
            p = r + beta * (p - omega * v)
        phat = inv_diag * p
        v = a.matvec(phat)
        denom = float(rhat @ v)
        if denom == 0.0:
            return x, SolveReport(iterations=it, residual=true_residual(x), converged=False)
        alpha = rho / denom
        s = r - alpha * v
        x = x + alpha * phat
        if float(np.linalg.norm(s)) / bnorm <= tol:
            res = true_residual(x)
            if res <= tol:
                return x, SolveReport(iterations=it, residual=res, converged=True)
        shat = inv_diag * s
        t = a.matvec(shat)
        tt = float(t @ t)
        if tt == 0.0:
            return x, SolveReport(iterations=it, residual=true_residual(x), converged=False)
        omega = float(t @ s) / tt
        x = x + omega * shat
        r = s - omega * t
        if float(np.linalg.norm(r)) / bnorm <= tol:
            res = true_residual(x)
            if res <= tol:
                return x, SolveReport(iterations=it, residual=res, converged=True)
        if omega == 0.0:
            return x, SolveReport(iterations=it, residual=true_residual(x), converged=False)
        rho_old = rho

    return x, SolveReport(iterations=max_iter, residual=true_residual(x), converged=False)
