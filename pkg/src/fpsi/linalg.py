"""Direct sparse solves and discrete inf-sup estimates."""
from dataclasses import dataclass
import time

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class LinearSolveError(RuntimeError):
    pass


@dataclass
class LinearSolveReport:
    residual_norm: float
    relative_residual: float
    factor_time: float
    solve_time: float
    pivot_growth: float
    refinement_steps: int = 0
    refactored: bool = True


def equilibrate(A):
    """Row then column max-norm scaling factors ``r, c`` with ``diag(r) A diag(c)``."""
    A = sp.csr_matrix(A)
    rmax = np.asarray(abs(A).max(axis=1).todense()).ravel()
    r = np.where(rmax > 0, 1.0 / np.where(rmax > 0, rmax, 1.0), 1.0)
    A1 = sp.diags(r) @ A
    cmax = np.asarray(abs(A1).max(axis=0).todense()).ravel()
    c = np.where(cmax > 0, 1.0 / np.where(cmax > 0, cmax, 1.0), 1.0)
    return r, c


class Factorization:
    """Sparse LU factors of a square matrix, reusable for several right-hand sides.

    With ``scale=True`` the factored matrix is ``diag(r) A diag(c)`` from
    :func:`equilibrate`; solutions and residuals always refer to ``A``.
    """

    def __init__(self, A, scale=False):
        A = sp.csc_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise LinearSolveError(f"matrix must be square, got {A.shape}")
        self.A = A
        n = A.shape[0]
        self.r, self.c = equilibrate(A) if scale else (np.ones(n), np.ones(n))
        t0 = time.perf_counter()
        As = sp.csc_matrix(sp.diags(self.r) @ A @ sp.diags(self.c)) if scale else A
        try:
            self.lu = spla.splu(As, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise LinearSolveError(f"sparse LU failed: {exc}") from exc
        self.factor_time = time.perf_counter() - t0
        amax = abs(As).max() if As.nnz else 0.0
        umax = abs(self.lu.U).max() if self.lu.U.nnz else 0.0
        self.pivot_growth = float(umax / amax) if amax > 0 else 0.0

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        t0 = time.perf_counter()
        x = self.c * self.lu.solve(self.r * b)
        solve_time = time.perf_counter() - t0
        if not np.all(np.isfinite(x)):
            raise LinearSolveError("non-finite solution; the matrix is numerically singular")
        r = float(np.linalg.norm(self.A @ x - b))
        nb = float(np.linalg.norm(b))
        return x, LinearSolveReport(r, r / nb if nb > 0 else r, self.factor_time,
                                    solve_time, self.pivot_growth)


class ReusingSolver:
    """Direct solver that keeps its LU factors while the matrix drifts slowly.

    Each call refines the solution of ``A x = b`` with the stored factors
    (``x += LU^{-1} (b - A x)``) until the true relative residual is below
    ``tol``.  When that takes more than ``max_refine`` sweeps or stalls, ``A``
    is factored afresh.  Time steppers whose matrix changes only through a
    lagged convection term converge in one or two sweeps.
    """

    def __init__(self, tol=1e-12, max_refine=6, scale=True):
        self.tol = tol
        self.max_refine = max_refine
        self.scale = scale
        self.factors = None

    def _refine(self, A, b, x, nb):
        f = self.factors
        res = float(np.linalg.norm(A @ x - b))
        k = 0
        while res > self.tol * nb and k < self.max_refine:
            prev = res
            x = x + f.c * f.lu.solve(f.r * (b - A @ x))
            res = float(np.linalg.norm(A @ x - b))
            k += 1
            if res > 0.5 * prev:
                break
        return x, res, k

    def solve(self, A, b):
        A = sp.csc_matrix(A)
        b = np.asarray(b, dtype=float)
        nb = float(np.linalg.norm(b)) or 1.0
        if self.factors is not None and self.factors.A.shape == A.shape:
            t0 = time.perf_counter()
            f = self.factors
            x, res, k = self._refine(A, b, f.c * f.lu.solve(f.r * b), nb)
            if res <= self.tol * nb and np.all(np.isfinite(x)):
                return x, LinearSolveReport(res, res / nb, 0.0, time.perf_counter() - t0,
                                            f.pivot_growth, k, False)
        self.factors = Factorization(A, self.scale)
        t0 = time.perf_counter()
        x, rep = self.factors.solve(b)
        x, res, k = self._refine(A, b, x, nb)
        rep.residual_norm, rep.relative_residual = res, res / nb
        rep.refinement_steps = k
        rep.solve_time += time.perf_counter() - t0
        return x, rep


def lu_solve(A, b, scale=False):
    """Solve ``A x = b`` by sparse LU with COLAMD ordering.

    ``scale`` equilibrates rows and columns before factoring, which helps
    when blocks differ by many orders of magnitude.

    Returns
    -------
    x : ndarray
    report : LinearSolveReport
    """
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=float)
    if b.shape != (A.shape[0],):
        raise LinearSolveError(f"rhs has shape {b.shape}, expected ({A.shape[0]},)")
    return Factorization(A, scale).solve(b)


def smallest_singular_estimate(B, M_v=None, M_w=None, deflate=None):
    """Smallest generalized singular value of ``B`` (rows = constraint space).

    Computes ``min sigma`` with ``B M_v^{-1} B^T w = sigma^2 M_w w`` densely,
    which equals ``inf_w sup_v (B v, w) / (|v|_{M_v} |w|_{M_w})``.

    Parameters
    ----------
    B : (m, n) matrix
    M_v, M_w : SPD Gram matrices of the norms (identity when omitted)
    deflate : (m, k) array, optional
        Columns spanning a subspace of constraint vectors to exclude, for
        example constant pressures under all-Dirichlet velocity conditions.
    """
    B = B.toarray() if sp.issparse(B) else np.asarray(B, dtype=float)
    m, n = B.shape
    Mv = np.eye(n) if M_v is None else (M_v.toarray() if sp.issparse(M_v) else np.asarray(M_v))
    Mw = np.eye(m) if M_w is None else (M_w.toarray() if sp.issparse(M_w) else np.asarray(M_w))
    if Mv.shape != (n, n) or Mw.shape != (m, m):
        raise ValueError("norm matrices do not match the shape of B")
    if m == 0 or not np.any(B):
        return 0.0
    S = B @ sla.cho_solve(sla.cho_factor(Mv), B.T)
    S = 0.5 * (S + S.T)
    if deflate is not None:
        # restrict to the Mw-orthogonal complement of the deflated span
        Z = np.asarray(deflate, dtype=float).reshape(m, -1)
        Q, _ = np.linalg.qr(Mw @ Z)
        P = sla.null_space(Q.T)
        S = P.T @ S @ P
        Mw = P.T @ Mw @ P
    ev = sla.eigh(S, Mw, eigvals_only=True)
    return float(np.sqrt(max(ev[0], 0.0)))
