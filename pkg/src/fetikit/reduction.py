"""Reduced interface solve: deflation, particular multiplier, PCG, recovery.

The coupled system is reduced to the multiplier space. A sigma-orthogonal
projector confines the Krylov iteration to the subspace compatible with the
local kernels, a particular multiplier absorbs the kernel compatibility
constraint, and the preconditioner transports local stiffness information to
the interface through a pseudo-inverse of the coupling map.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .coupling import CoupledProblem, apply_schur, assemble_schur_rhs, kernel_compatibility_rhs
from .numerics import (
    DENSE_COARSE_LIMIT,
    CgResult,
    DimensionMismatch,
    IndefiniteOperator,
    InsufficientHistory,
    MaxIterations,
    cg_solve,
    lanczos_condition_estimate,
)


class CoarseSingular(Exception):
    """The coarse constraint system G^T Sigma^-1 G is not SPD."""


@dataclass
class MultiplierSpace:
    """Discrete multiplier space with its Riesz map and kernel constraint.

    sigma_diag is the (diagonal) SPD matrix realizing the multiplier scalar
    product; constraint holds one column per kernel basis vector. The
    deflation subspace is the null space of constraint^T.
    """

    dim: int
    sigma_diag: np.ndarray
    constraint: np.ndarray
    _coarse_cho: tuple = field(init=False, repr=False)

    def __post_init__(self):
        self.sigma_diag = np.asarray(self.sigma_diag, dtype=float)
        self.constraint = np.asarray(self.constraint, dtype=float)
        if self.constraint.ndim == 1:
            self.constraint = self.constraint.reshape(-1, 1)
        if self.sigma_diag.shape != (self.dim,):
            raise DimensionMismatch(
                f"sigma diagonal has shape {self.sigma_diag.shape}, dim = {self.dim}"
            )
        if self.constraint.shape[0] != self.dim:
            raise DimensionMismatch(
                f"constraint has {self.constraint.shape[0]} rows, dim = {self.dim}"
            )
        if np.any(self.sigma_diag <= 0.0) or not np.all(np.isfinite(self.sigma_diag)):
            raise ValueError("sigma must be SPD: diagonal entries must be positive")
        if self.dim_z > 0:
            coarse = self.constraint.T @ (self.constraint / self.sigma_diag[:, None])
            try:
                self._coarse_cho = sla.cho_factor(coarse)
            except sla.LinAlgError as exc:
                raise CoarseSingular(
                    f"G^T Sigma^-1 G is singular ({exc}); the kernel constraint "
                    "columns do not independently reach the multiplier space"
                ) from exc
        else:
            self._coarse_cho = ()

    @property
    def dim_z(self) -> int:
        return self.constraint.shape[1]

    @property
    def deflated_dim(self) -> int:
        return self.dim - self.dim_z

    def sigma_solve(self, vec: np.ndarray) -> np.ndarray:
        return np.asarray(vec, dtype=float) / self.sigma_diag

    def coarse_solve(self, vec: np.ndarray) -> np.ndarray:
        if self.dim_z == 0:
            return np.zeros(0)
        return sla.cho_solve(self._coarse_cho, np.asarray(vec, dtype=float))

    def project(self, lam: np.ndarray) -> np.ndarray:
        """Sigma-orthogonal projection onto the deflation subspace.

        The result satisfies constraint^T result = 0 and differs from lam by
        an element of Sigma^-1 Range(constraint).
        """
        lam = np.asarray(lam, dtype=float)
        if self.dim_z == 0:
            return lam.copy()
        c = self.coarse_solve(self.constraint.T @ lam)
        return lam - (self.constraint @ c) / self.sigma_diag

    def project_dual(self, phi: np.ndarray) -> np.ndarray:
        """Transpose projector: the minimal-norm dual representative.

        Maps a multiplier dual vector to the canonical representative of its
        equivalence class over the deflation subspace; the representative
        pairs identically with every deflated multiplier and is annihilated
        by pairing with Sigma^-1 Range(constraint).
        """
        phi = np.asarray(phi, dtype=float)
        if self.dim_z == 0:
            return phi.copy()
        c = self.coarse_solve(self.constraint.T @ (phi / self.sigma_diag))
        return phi - self.constraint @ c

    def particular_multiplier(self, f_z: np.ndarray) -> np.ndarray:
        """Particular multiplier lambda0 = -Sigma^-1 G (G^T Sigma^-1 G)^-1 f_z.

        Solves constraint^T lambda0 = -f_z; lambda0 is sigma-orthogonal to
        the deflation subspace. With f_z the restriction of the load to the
        kernel space, the full multiplier lambda0 + (deflated part) meets the
        kernel compatibility constraint.
        """
        f_z = np.asarray(f_z, dtype=float)
        if self.dim_z == 0:
            return np.zeros(self.dim)
        if f_z.shape[0] != self.dim_z:
            raise DimensionMismatch(f"expected {self.dim_z} entries, got {f_z.shape[0]}")
        c = self.coarse_solve(f_z)
        return -(self.constraint @ c) / self.sigma_diag


class RieszPreconditioner:
    """Projected Riesz map: the 'no preconditioner' deflated iteration.

    Applies Pi_sigma Sigma^-1 Pi_sigma^T, which is SPD on the deflation
    subspace and keeps iterates inside it. An alternative diagonal (for
    example the mesh-weighted surrogate product used to measure coercivity)
    may replace sigma.
    """

    def __init__(self, space: MultiplierSpace, diag: np.ndarray | None = None):
        self.space = space
        self._diag = space.sigma_diag if diag is None else np.asarray(diag, dtype=float)
        if np.any(self._diag <= 0.0):
            raise ValueError("Riesz diagonal must be positive")

    def apply(self, phi: np.ndarray) -> np.ndarray:
        s = self.space
        return s.project(s.project_dual(phi) / self._diag)


class SchurPreconditioner:
    """Projected coupling preconditioner Pi (B+)^T A Pi^T built from
    a pseudo-inverse of the coupling map.

    B+ = D^-1 B^T (B D^-1 B^T)^-1 lifts a multiplier dual to the block primal
    space d-orthogonally to ker B; local stiffness is applied there and the
    result restricted back. D is a diagonal SPD scalar product on the block
    space, supplied per subdomain.
    """

    def __init__(self, problem: CoupledProblem, space: MultiplierSpace, d_blocks):
        self.space = space
        self._maps = problem.coupling.maps
        self._stiffness = [sub.stiffness for sub in problem.subproblems]
        d_blocks = [np.asarray(d, dtype=float) for d in d_blocks]
        for sub, d in zip(problem.subproblems, d_blocks):
            if d.shape != (sub.dof_count,):
                raise DimensionMismatch(
                    f"subdomain {sub.index}: D block of shape {d.shape}"
                )
            if np.any(d <= 0.0):
                raise ValueError(f"subdomain {sub.index}: D must be positive")
        self._dinv = [1.0 / d for d in d_blocks]
        dim = space.dim
        if dim > DENSE_COARSE_LIMIT:
            raise ValueError(
                f"coupling Gram matrix of dimension {dim} exceeds the dense "
                f"factorization limit {DENSE_COARSE_LIMIT}"
            )
        gram = np.zeros((dim, dim))
        for bmat, dinv in zip(self._maps, self._dinv):
            scaled = bmat.multiply(dinv[None, :])
            gram += (scaled @ bmat.T).toarray()
        try:
            self._gram_cho = sla.cho_factor(gram)
        except sla.LinAlgError as exc:
            raise ValueError(
                "B D^-1 B^T is not SPD; the coupling map does not reach the "
                f"whole multiplier space ({exc})"
            ) from exc

    def lift(self, phi: np.ndarray) -> list:
        """Pseudo-inverse action B+ phi: block primal vector with B(B+ phi) = phi."""
        w = sla.cho_solve(self._gram_cho, np.asarray(phi, dtype=float))
        return [dinv * (bmat.T @ w) for bmat, dinv in zip(self._maps, self._dinv)]

    def lift_transpose(self, blocks) -> np.ndarray:
        """(B+)^T y for a block primal vector y."""
        acc = np.zeros(self.space.dim)
        for bmat, dinv, y in zip(self._maps, self._dinv, blocks):
            acc += bmat @ (dinv * np.asarray(y, dtype=float))
        return sla.cho_solve(self._gram_cho, acc)

    def apply_raw(self, phi: np.ndarray) -> np.ndarray:
        """Unprojected preconditioner (B+)^T A B+ applied to a dual vector."""
        lifted = self.lift(phi)
        stressed = [a @ v for a, v in zip(self._stiffness, lifted)]
        return self.lift_transpose(stressed)

    def apply(self, phi: np.ndarray) -> np.ndarray:
        """Full projected preconditioner Pi (B+)^T A B+ Pi^T."""
        s = self.space
        return s.project(self.apply_raw(s.project_dual(phi)))


@dataclass(frozen=True)
class SolverOptions:
    """Iteration controls for the reduced solve."""

    tol: float = 1e-10
    max_iter: int | None = None  # default: 10 * deflated dimension


@dataclass
class ReducedSolution:
    """Converged reduced solve: multiplier, kernel coefficients, primal blocks."""

    multiplier: np.ndarray
    z_star: np.ndarray
    u_blocks: list
    iterations: int
    condition_estimate: float
    residual_history: list
    cg_history: list
    constraint_residuals: dict


def _solve_deflated(problem, space, preconditioner, options):
    """Run the projected PCG and return (x, iters, history, rel_residuals, defl_defect)."""
    g = assemble_schur_rhs(problem)
    f_z = -kernel_compatibility_rhs(problem)  # restriction of the load to the kernel
    lam0 = space.particular_multiplier(f_z)
    rhs = g - apply_schur(problem, lam0) if space.dim_z > 0 else g

    precond = preconditioner if preconditioner is not None else RieszPreconditioner(space)
    max_iter = options.max_iter
    if max_iter is None:
        max_iter = max(10 * space.deflated_dim, 10)

    deflation_defect = [0.0]

    def op(p):
        return apply_schur(problem, p)

    def apply_m(r):
        z = precond.apply(r)
        if space.dim_z > 0:
            # every iterate is a combination of preconditioned residuals, so
            # tracking their constraint defect bounds the iterate defect
            defect = np.abs(space.constraint.T @ z).max()
            scale = max(np.abs(z).max(), 1e-300)
            deflation_defect[0] = max(deflation_defect[0], defect / scale)
        return z

    # the iteration only sees the equivalence class of the right-hand side
    # over the deflation subspace; work with its minimal representative so
    # residual norms measure the solvable part. When the particular
    # multiplier already balances the system that part is negligible
    # relative to the problem data and the deflated component is zero.
    rhs_hat = space.project_dual(rhs)
    scale = np.linalg.norm(g) + np.linalg.norm(rhs - g)
    if np.linalg.norm(rhs_hat) <= options.tol * max(scale, 1e-300):
        result = CgResult(np.zeros(space.dim), 0, [])
    else:
        result = cg_solve(op, apply_m, rhs_hat, tol=options.tol, max_iter=max_iter)
    return lam0, result, g, deflation_defect[0]


def solve_reduced(
    problem: CoupledProblem,
    options: SolverOptions | None = None,
    preconditioner=None,
) -> ReducedSolution:
    """Solve the reduced coupled problem by deflated PCG and reconstruct u.

    The multiplier is split into a particular part absorbing the kernel
    compatibility constraint and a deflated part found by PCG; kernel
    coefficients are recovered by a sigma-weighted least squares against the
    residual of the first reduced equation, and the primal solution is
    reconstructed through the black-box solvers.

    Raises IndefiniteOperator when the reduced operator loses positivity on
    the deflation subspace (the mesh-ratio stability condition failed) and
    MaxIterations on stagnation; both carry partial iteration history.
    """
    space = problem.multipliers
    if space is None:
        raise ValueError("problem has no multiplier space attached")
    options = options or SolverOptions()

    lam0, cg, g, deflation_defect = _solve_deflated(
        problem, space, preconditioner, options
    )
    lam = lam0 + cg.x

    residual = g - apply_schur(problem, lam)
    if space.dim_z > 0:
        z_star = space.coarse_solve(space.constraint.T @ space.sigma_solve(residual))
    else:
        z_star = np.zeros(0)

    correction = problem.coupling.apply_transpose(lam)
    u_blocks = []
    for sub, corr, zblk in zip(
        problem.subproblems, correction, problem.kernel.blocks
    ):
        u = sub.solver.apply(sub.load + corr)
        if space.dim_z > 0:
            u = u + zblk @ z_star
        u_blocks.append(u)

    coupling_residual = np.linalg.norm(problem.coupling.apply(u_blocks))
    kernel_res = 0.0
    if space.dim_z > 0:
        target = kernel_compatibility_rhs(problem)
        kernel_res = np.abs(space.constraint.T @ lam - target).max()
        kernel_res /= max(np.abs(lam).max(), 1.0)

    try:
        _, _, kappa = lanczos_condition_estimate(cg.history)
    except InsufficientHistory:
        kappa = float("nan")

    g_norm = np.linalg.norm(g)
    return ReducedSolution(
        multiplier=lam,
        z_star=z_star,
        u_blocks=u_blocks,
        iterations=cg.iterations,
        condition_estimate=kappa,
        residual_history=[],
        cg_history=cg.history,
        constraint_residuals={
            "kernel_constraint": kernel_res,
            "coupling_residual": coupling_residual,
            "coupling_residual_rel": coupling_residual / max(g_norm, 1e-300),
            "deflation_defect": deflation_defect,
        },
    )


def estimate_condition(solution: ReducedSolution) -> float:
    """Lanczos condition estimate of the preconditioned reduced operator."""
    if not solution.cg_history:
        raise InsufficientHistory("the reduced solve recorded no CG iterations")
    _, _, kappa = lanczos_condition_estimate(solution.cg_history)
    return kappa


@dataclass(frozen=True)
class ProbeResult:
    lambda_min: float
    lambda_max: float
    kappa: float
    iterations: int
    indefinite: bool


def probe_spectrum(
    problem: CoupledProblem,
    preconditioner=None,
    seed: int = 0,
    max_iter: int | None = None,
    tol: float = 1e-13,
) -> ProbeResult:
    """Measure extremal Ritz values of the preconditioned reduced operator.

    Drives the deflated PCG with a random dual load (independent of the
    physical right-hand side) so the Lanczos process explores the spectrum,
    including near-kernel modes that a physical load may never excite.
    """
    space = problem.multipliers
    rng = np.random.default_rng(seed)
    rhs = space.project_dual(rng.standard_normal(space.dim))
    precond = preconditioner if preconditioner is not None else RieszPreconditioner(space)
    if max_iter is None:
        max_iter = space.deflated_dim + 5

    history: list = []
    indefinite = False
    try:
        result = cg_solve(
            lambda p: apply_schur(problem, p),
            precond.apply,
            rhs,
            tol=tol,
            max_iter=max_iter,
        )
        history = result.history
        iterations = result.iterations
    except MaxIterations as exc:
        history = exc.history
        iterations = len(history)
    except IndefiniteOperator as exc:
        history = exc.history
        iterations = len(history)
        indefinite = True

    if not history:
        return ProbeResult(float("nan"), float("nan"), float("nan"), 0, indefinite)
    try:
        lam_min, lam_max, kappa = lanczos_condition_estimate(history)
    except IndefiniteOperator:
        return ProbeResult(0.0, float("nan"), float("inf"), iterations, True)
    return ProbeResult(lam_min, lam_max, kappa, iterations, indefinite)
