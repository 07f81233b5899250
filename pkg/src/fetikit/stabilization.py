"""Coarse-projection stabilization of over-rich multiplier spaces.

When the multiplier mesh is too fine relative to the local discretizations,
the reduced operator loses coercivity on the deflation subspace. Penalizing
the component of the multiplier outside a coarser auxiliary space restores
stability; the penalty vanishes on coarse-representable multipliers so the
consistency order is preserved.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .coupling import (
    CoupledProblem,
    assemble_schur_dense,
    assemble_schur_rhs,
    kernel_compatibility_rhs,
)
from .numerics import DENSE_COARSE_LIMIT, DimensionMismatch, SingularMatrix, solve_dense
from .reduction import ReducedSolution


class SingularStabilizedSystem(Exception):
    """The stabilized block system is singular; gamma cannot rescue it."""


@dataclass
class CoarseMultiplierSpace:
    """Auxiliary coarse multiplier space embedded by a prolongation matrix."""

    prolongation: sp.csr_matrix
    delta_tilde: float

    def __post_init__(self):
        self.prolongation = sp.csr_matrix(self.prolongation)
        if self.delta_tilde <= 0.0:
            raise ValueError("coarse mesh size must be positive")
        svals = np.linalg.svd(self.prolongation.toarray(), compute_uv=False)
        if svals.size and svals.min() <= 1e-10 * svals.max():
            raise ValueError("prolongation must have full column rank")

    @property
    def dim(self) -> int:
        return self.prolongation.shape[1]

    @property
    def fine_dim(self) -> int:
        return self.prolongation.shape[0]


@dataclass
class StabilizationForm:
    """Weighted penalty on the fine-scale multiplier component.

    project_coarse is the sigma-orthogonal projection onto the range of the
    prolongation; the penalty pairs the fine-scale residuals of its two
    arguments in a mesh-weighted scalar product (weights carry the multiplier
    cell size times the cell measure).
    """

    coarse: CoarseMultiplierSpace
    sigma_diag: np.ndarray
    weights: np.ndarray
    gamma: float = 1.0
    _coarse_gram_cho: tuple = field(init=False, repr=False)

    def __post_init__(self):
        self.sigma_diag = np.asarray(self.sigma_diag, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        n = self.coarse.fine_dim
        if self.sigma_diag.shape != (n,) or self.weights.shape != (n,):
            raise DimensionMismatch(
                f"sigma/weights must have {n} entries, got "
                f"{self.sigma_diag.shape} and {self.weights.shape}"
            )
        if np.any(self.sigma_diag <= 0.0):
            raise ValueError("sigma must be positive")
        if np.any(self.weights < 0.0):
            raise ValueError("stabilization weights must be non-negative")
        p = self.coarse.prolongation
        gram = (p.T.multiply(self.sigma_diag[None, :]) @ p).toarray()
        self._coarse_gram_cho = sla.cho_factor(gram)

    def project_coarse(self, lam: np.ndarray) -> np.ndarray:
        """Sigma-orthogonal projection onto the coarse space; fixed points
        are exactly the coarse-representable multipliers."""
        lam = np.asarray(lam, dtype=float)
        p = self.coarse.prolongation
        coeff = sla.cho_solve(self._coarse_gram_cho, p.T @ (self.sigma_diag * lam))
        return p @ coeff

    def fine_residual(self, lam: np.ndarray) -> np.ndarray:
        return np.asarray(lam, dtype=float) - self.project_coarse(lam)

    def product(self, lam: np.ndarray, mu: np.ndarray) -> float:
        """The stabilizing bilinear form: weighted pairing of fine residuals."""
        return float(self.fine_residual(lam) @ (self.weights * self.fine_residual(mu)))

    def matrix(self) -> np.ndarray:
        """Dense penalty matrix J with lam^T J mu = product(lam, mu)."""
        n = self.coarse.fine_dim
        resid = np.eye(n)
        p = self.coarse.prolongation
        coeff = sla.cho_solve(
            self._coarse_gram_cho, (p.T.multiply(self.sigma_diag[None, :])).toarray()
        )
        resid -= (p @ coeff)
        return resid.T @ (self.weights[:, None] * resid)


def solve_stabilized(
    problem: CoupledProblem,
    form: StabilizationForm,
    tol: float = 1e-10,
) -> ReducedSolution:
    """Direct solve of the stabilized reduced saddle system.

    Assembles the Schur matrix densely (desk scale), adds gamma times the
    penalty matrix, borders with the kernel constraint and factorizes. Valid
    for any gamma > 0 when the local solvers make the Schur operator positive
    semi-definite.
    """
    if form.gamma <= 0.0:
        raise ValueError(f"gamma must be positive, got {form.gamma}")
    space = problem.multipliers
    dim = space.dim
    dim_z = space.dim_z
    if dim + dim_z > DENSE_COARSE_LIMIT:
        raise ValueError(
            f"stabilized dense solve capped at {DENSE_COARSE_LIMIT} unknowns, "
            f"got {dim + dim_z}"
        )

    schur = assemble_schur_dense(problem, max_dim=DENSE_COARSE_LIMIT)
    penalty = form.matrix()
    g = assemble_schur_rhs(problem)
    constraint_rhs = kernel_compatibility_rhs(problem)

    system = np.zeros((dim + dim_z, dim + dim_z))
    system[:dim, :dim] = schur + form.gamma * penalty
    if dim_z > 0:
        system[:dim, dim:] = space.constraint
        system[dim:, :dim] = space.constraint.T
    rhs = np.concatenate([g, constraint_rhs])
    try:
        sol = solve_dense(system, rhs)
    except SingularMatrix as exc:
        raise SingularStabilizedSystem(
            f"stabilized system is singular at gamma = {form.gamma}: {exc}"
        ) from exc
    lam = sol[:dim]
    z_star = sol[dim:]

    correction = problem.coupling.apply_transpose(lam)
    u_blocks = []
    for sub, corr, zblk in zip(problem.subproblems, correction, problem.kernel.blocks):
        u = sub.solver.apply(sub.load + corr)
        if dim_z > 0:
            u = u + zblk @ z_star
        u_blocks.append(u)

    coupling_residual = np.linalg.norm(problem.coupling.apply(u_blocks))
    kernel_res = 0.0
    if dim_z > 0:
        kernel_res = np.abs(space.constraint.T @ lam - constraint_rhs).max()
        kernel_res /= max(np.abs(lam).max(), 1.0)

    return ReducedSolution(
        multiplier=lam,
        z_star=z_star,
        u_blocks=u_blocks,
        iterations=0,
        condition_estimate=float("nan"),
        residual_history=[],
        cg_history=[],
        constraint_residuals={
            "kernel_constraint": kernel_res,
            "coupling_residual": coupling_residual,
            "coupling_residual_rel": coupling_residual
            / max(np.linalg.norm(g), 1e-300),
            "deflation_defect": 0.0,
        },
    )
