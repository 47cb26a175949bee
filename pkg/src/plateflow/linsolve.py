"""Sparse symmetric saddle-point solves for the per-step flow systems.

The KKT matrix [[A, B^T], [B, 0]] is factorized directly (SuperLU with COLAMD
ordering, the scipy analogue of the UMFPACK solver commonly used for these
systems); a single step of iterative refinement keeps the residual at the
contract level.  Factorizations are deterministic: identical inputs yield
bit-identical solutions.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

RESIDUAL_RTOL = 1e-9


class SaddleSolveError(RuntimeError):
    """The factorization failed or the residual contract could not be met."""


def _as_csc(matrix):
    return matrix.tocsc() if sp.issparse(matrix) else sp.csc_matrix(matrix)


class SaddleSystem:
    """One saddle-point system [[A, B^T], [B, 0]] with its factorization.

    A must be symmetric positive semidefinite and positive definite on the
    kernel of B; B (m x n, m = 0 allowed) must have independent rows.  The
    matrix is assembled and factorized lazily on the first solve; the handle
    is reused for further right-hand sides of the same system.
    """

    def __init__(self, A, B=None):
        self.A = _as_csc(A)
        self.n = self.A.shape[0]
        if B is not None and B.shape[0] > 0:
            self.B = _as_csc(B)
            self.m = self.B.shape[0]
            self.kkt = sp.bmat([[self.A, self.B.T], [self.B, None]], format="csc")
        else:
            self.B = None
            self.m = 0
            self.kkt = self.A
        self._lu = None

    def factorize(self):
        if self._lu is None:
            try:
                self._lu = spla.splu(self.kkt, permc_spec="COLAMD")
            except (RuntimeError, ValueError) as exc:
                raise SaddleSolveError(f"sparse factorization failed: {exc}") from exc
        return self._lu

    def solve(self, rhs):
        """Return (d, lam) with the residual bounded by 1e-9 * ||rhs||_inf."""
        rhs = np.asarray(rhs, dtype=np.float64).reshape(-1)
        if rhs.size != self.n + self.m:
            raise ValueError(f"rhs has length {rhs.size}, expected {self.n + self.m}")
        lu = self.factorize()
        x = lu.solve(rhs)
        if not np.isfinite(x).all():
            raise SaddleSolveError("factorization produced non-finite values")
        scale = max(float(np.abs(rhs).max()), 1e-300)
        resid = rhs - self.kkt @ x
        if np.abs(resid).max() > RESIDUAL_RTOL * scale:
            x = x + lu.solve(resid)  # one refinement step
            resid = rhs - self.kkt @ x
            if np.abs(resid).max() > RESIDUAL_RTOL * scale:
                raise SaddleSolveError(
                    f"saddle solve residual {np.abs(resid).max():.3e} exceeds "
                    f"{RESIDUAL_RTOL:.1e} * ||rhs||_inf")
        return x[:self.n], x[self.n:]


def factor_and_solve(A, B, rhs):
    """One-shot solve of [[A, B^T], [B, 0]] (d, lam) = rhs.

    Raises SaddleSolveError on a numerically singular factorization or an
    unmet residual bound (never silent garbage).
    """
    return SaddleSystem(A, B).solve(rhs)
