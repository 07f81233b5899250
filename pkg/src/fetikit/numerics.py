"""Linear-algebra substrate for the coupling solver stack.

Dense solves are LAPACK-backed with an explicit pivot check, singular
symmetric systems are handled through a bordered (kernel-augmented)
factorization, and the Krylov layer is a hand-rolled PCG that records its
coefficients so extremal eigenvalues of the preconditioned operator can be
recovered from the associated Lanczos tridiagonal matrix.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

# Central tolerance table. Solver code and tests read the same constants so
# the two cannot drift apart.
PIVOT_RTOL = 1e-14          # dense pivot threshold, relative to max |entry|
KERNEL_VERIFY_RTOL = 1e-8   # bound on ||A @ N|| for a claimed kernel basis N
RESIDUAL_RTOL = 1e-10       # relative residual required from direct solves
BORDER_RANK_RTOL = 1e-10    # relative singular-value floor for border columns
DENSE_COARSE_LIMIT = 2000   # largest coarse system factorized densely


class SingularMatrix(Exception):
    """A dense factorization met a pivot below the relative threshold."""


class SingularBorderedSystem(Exception):
    """The kernel-augmented system is singular (bad or incomplete kernel basis)."""


class IndefiniteOperator(Exception):
    """CG detected a non-positive curvature or preconditioner direction."""

    def __init__(self, message: str, iteration: int = 0, history=None):
        super().__init__(message)
        self.iteration = iteration
        self.history = history or []


class MaxIterations(Exception):
    """CG exhausted its iteration budget before reaching the tolerance."""

    def __init__(self, message: str, x=None, history=None, residual=np.inf):
        super().__init__(message)
        self.x = x
        self.history = history or []
        self.residual = residual


class InsufficientHistory(Exception):
    """Not enough recorded CG coefficients to build a Lanczos estimate."""


class DimensionMismatch(ValueError):
    """Vector or matrix block dimensions do not line up."""


def solve_dense(matrix, rhs):
    """Solve a dense nonsingular system by LU with partial pivoting.

    Raises SingularMatrix when any pivot falls below PIVOT_RTOL relative to
    the largest entry of the matrix.
    """
    a = np.asarray(matrix, dtype=float)
    b = np.asarray(rhs, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"matrix must be square, got {a.shape}")
    if b.shape[0] != a.shape[0]:
        raise DimensionMismatch(f"rhs length {b.shape[0]} != {a.shape[0]}")
    if a.size == 0:
        return np.zeros_like(b)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        lu, piv = sla.lu_factor(a, check_finite=True)
    scale = np.abs(a).max()
    pivots = np.abs(np.diag(lu))
    if scale == 0.0 or pivots.min() <= PIVOT_RTOL * scale:
        raise SingularMatrix(
            f"pivot {pivots.min():.3e} below {PIVOT_RTOL:.0e} * max|entry| = "
            f"{PIVOT_RTOL * scale:.3e}"
        )
    return sla.lu_solve((lu, piv), b)


@dataclass(frozen=True)
class BorderedSystem:
    """A possibly singular symmetric core together with its kernel basis.

    The border columns span ker(core); solving the augmented system
    [[core, border], [border^T, 0]] yields the kernel-orthogonal solution.
    An empty border (0 columns) degenerates to a plain solve.
    """

    core: sp.spmatrix
    border: np.ndarray


class BorderedSolver:
    """Factorized bordered solve, reusable across many right-hand sides."""

    def __init__(self, system: BorderedSystem, verify_kernel: bool = True):
        core = sp.csr_matrix(system.core)
        border = np.asarray(system.border, dtype=float)
        if border.ndim == 1:
            border = border.reshape(-1, 1)
        n = core.shape[0]
        if core.shape[0] != core.shape[1]:
            raise DimensionMismatch(f"core must be square, got {core.shape}")
        if border.shape[0] != n:
            raise DimensionMismatch(
                f"border has {border.shape[0]} rows, core is {n}x{n}"
            )
        core_scale = spla.norm(core) if core.nnz else 0.0
        asym = spla.norm(core - core.T) if core.nnz else 0.0
        if asym > 1e-12 * max(core_scale, 1e-300):
            raise ValueError(
                f"core is not symmetric: ||A - A^T|| = {asym:.3e} "
                f"(relative {asym / core_scale:.3e})"
            )
        p = border.shape[1]
        if p > 0:
            svals = sla.svdvals(border)
            if svals.min() <= BORDER_RANK_RTOL * svals.max():
                raise SingularBorderedSystem(
                    "border columns are linearly dependent "
                    f"(sigma_min/sigma_max = {svals.min() / svals.max():.3e})"
                )
            if verify_kernel:
                defect = np.linalg.norm(core @ border)
                bound = KERNEL_VERIFY_RTOL * max(core_scale, 1e-300) * np.linalg.norm(border)
                if defect > bound:
                    raise SingularBorderedSystem(
                        f"border does not span ker(core): ||A N|| = {defect:.3e} "
                        f"exceeds {bound:.3e}"
                    )
        self.n = n
        self.p = p
        if p > 0:
            augmented = sp.bmat(
                [[core, sp.csc_matrix(border)], [sp.csc_matrix(border.T), None]],
                format="csc",
            )
        else:
            augmented = sp.csc_matrix(core)
        self._augmented = augmented
        self._scale = max(core_scale, np.abs(border).max() if border.size else 0.0)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                self._lu = spla.splu(augmented)
        except RuntimeError as exc:
            raise SingularBorderedSystem(f"augmented factorization failed: {exc}") from exc

    def solve(self, rhs):
        """Return (x, multipliers) with core @ x + border @ mu = rhs, border^T x = 0."""
        b = np.asarray(rhs, dtype=float)
        if b.shape[0] != self.n:
            raise DimensionMismatch(f"rhs length {b.shape[0]} != {self.n}")
        full = np.concatenate([b, np.zeros(self.p)])
        y = self._lu.solve(full)
        residual = np.abs(self._augmented @ y - full).max()
        bound = RESIDUAL_RTOL * (
            self._scale * max(np.abs(y).max(), 1.0) + np.abs(b).max() + 1.0
        )
        if not np.all(np.isfinite(y)) or residual > bound:
            raise SingularBorderedSystem(
                f"bordered solve residual {residual:.3e} exceeds {bound:.3e}; "
                "kernel basis is likely wrong or incomplete"
            )
        return y[: self.n], y[self.n :]


def solve_bordered(system: BorderedSystem, rhs):
    """One-shot bordered solve; factorize once via BorderedSolver for reuse."""
    return BorderedSolver(system).solve(rhs)


class CgResult(NamedTuple):
    x: np.ndarray
    iterations: int
    history: list  # (alpha_k, beta_k) pairs, one per completed iteration


def cg_solve(
    op: Callable[[np.ndarray], np.ndarray],
    precond: Callable[[np.ndarray], np.ndarray] | None,
    rhs,
    tol: float = RESIDUAL_RTOL,
    max_iter: int | None = None,
    atol: float = 0.0,
) -> CgResult:
    """Preconditioned conjugate gradients with coefficient recording.

    Stops when the preconditioned residual norm sqrt(r^T M^-1 r) drops below
    max(tol * initial norm, atol); atol lets callers whose right-hand side is
    already near the solution scale accept immediately. The (alpha, beta)
    history feeds lanczos_condition_estimate. Raises IndefiniteOperator when
    a search direction has non-positive curvature, MaxIterations when the
    budget runs out; the exception carries the partial iterate and history.
    """
    b = np.asarray(rhs, dtype=float)
    n = b.shape[0]
    if max_iter is None:
        max_iter = max(10 * n, 10)
    apply_m = precond if precond is not None else lambda v: v

    x = np.zeros(n)
    r = b.copy()
    z = apply_m(r)
    rz = float(r @ z)
    if rz < 0.0:
        raise IndefiniteOperator(f"preconditioner produced r^T z = {rz:.3e} < 0")
    norm0 = np.sqrt(rz)
    history: list[tuple[float, float]] = []
    target = max(tol * norm0, atol)
    if norm0 <= target or norm0 == 0.0:
        return CgResult(x, 0, history)
    p = z.copy()
    for k in range(1, max_iter + 1):
        q = op(p)
        pq = float(p @ q)
        if pq <= 0.0:
            raise IndefiniteOperator(
                f"p^T (op p) = {pq:.3e} <= 0 at iteration {k}; the operator is "
                "not positive definite on the iteration subspace",
                iteration=k,
                history=history,
            )
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        z = apply_m(r)
        rz_new = float(r @ z)
        if rz_new < 0.0:
            raise IndefiniteOperator(
                f"r^T z = {rz_new:.3e} < 0 at iteration {k}",
                iteration=k,
                history=history,
            )
        beta = rz_new / rz
        history.append((alpha, beta))
        if np.sqrt(rz_new) <= target:
            return CgResult(x, k, history)
        p = z + beta * p
        rz = rz_new
    raise MaxIterations(
        f"no convergence in {max_iter} iterations "
        f"(relative residual {np.sqrt(rz) / norm0:.3e})",
        x=x,
        history=history,
        residual=np.sqrt(rz) / norm0,
    )


def lanczos_condition_estimate(history):
    """Extremal eigenvalue estimates from recorded CG coefficients.

    Builds the Lanczos tridiagonal matrix associated with the CG run and
    returns (lambda_min, lambda_max, kappa) of the preconditioned operator
    as seen on the Krylov subspace. Ritz values bracket the true spectrum,
    so kappa is a lower estimate that grows monotonically with iterations.
    """
    m = len(history)
    if m < 1:
        raise InsufficientHistory("need at least one CG iteration")
    alphas = np.array([h[0] for h in history], dtype=float)
    betas = np.array([h[1] for h in history], dtype=float)
    diag = np.empty(m)
    diag[0] = 1.0 / alphas[0]
    for k in range(1, m):
        diag[k] = 1.0 / alphas[k] + betas[k - 1] / alphas[k - 1]
    if m == 1:
        eigs = diag.copy()
    else:
        off = np.sqrt(np.maximum(betas[: m - 1], 0.0)) / alphas[: m - 1]
        eigs = sla.eigvalsh_tridiagonal(diag, off)
    lam_min = float(eigs.min())
    lam_max = float(eigs.max())
    if lam_min <= 0.0:
        raise IndefiniteOperator(
            f"Lanczos matrix has non-positive Ritz value {lam_min:.3e}"
        )
    return lam_min, lam_max, lam_max / lam_min
