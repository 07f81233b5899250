"""Coupled-problem layer: local subproblems, trace coupling, Schur operator.

A coupled problem is a family of symmetric local stiffness blocks A_k (some
singular, with known kernels), per-subdomain coupling maps B_k pairing local
traces with interface multipliers, and black-box solvers realizing the
kernel-orthogonal pseudo-inverse of each A_k. The interface Schur operator
sum_k B_k A_k^+ B_k^T is applied matrix-free; dense assembly is reserved for
oracle comparisons at desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Protocol

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .numerics import (
    DimensionMismatch,
    KERNEL_VERIFY_RTOL,
    solve_dense,
)

if TYPE_CHECKING:  # avoids a runtime cycle with the reduction module
    from .reduction import MultiplierSpace


class BlackBoxSolver(Protocol):
    """Contract for a local pseudo-inverse solver.

    apply(g) must be linear in g and return the kernel-orthogonal solution
    of the local problem with dual load g: the output x satisfies
    kernel_basis^T x = 0 and a_k(x, w) = <g, w> for all w orthogonal to the
    kernel.
    """

    def apply(self, g: np.ndarray) -> np.ndarray: ...


class LocalSolverError(Exception):
    """A black-box solver violated its contract; carries the subdomain index."""

    def __init__(self, subdomain: int, message: str, residual: float = np.nan):
        super().__init__(f"subdomain {subdomain}: {message}")
        self.subdomain = subdomain
        self.residual = residual


@dataclass
class LocalSubproblem:
    """One subdomain: stiffness, load, kernel basis, and solver handle."""

    index: int
    stiffness: sp.csr_matrix
    load: np.ndarray
    kernel_basis: np.ndarray
    solver: BlackBoxSolver | None = None

    def __post_init__(self):
        self.stiffness = sp.csr_matrix(self.stiffness)
        self.load = np.asarray(self.load, dtype=float)
        basis = np.asarray(self.kernel_basis, dtype=float)
        if basis.ndim == 1:
            basis = basis.reshape(-1, 1)
        if basis.size == 0:
            basis = basis.reshape(self.dof_count, 0)
        self.kernel_basis = basis
        n = self.dof_count
        if self.stiffness.shape != (n, n):
            raise DimensionMismatch(
                f"stiffness {self.stiffness.shape} vs {n} load entries"
            )
        if basis.shape[0] != n:
            raise DimensionMismatch(f"kernel basis rows {basis.shape[0]} != {n}")
        if not np.all(np.isfinite(self.load)):
            raise ValueError(f"subdomain {self.index}: load has non-finite entries")
        scale = max(spla.norm(self.stiffness), 1e-300)
        asym = spla.norm(self.stiffness - self.stiffness.T)
        if asym > 1e-12 * scale:
            raise ValueError(
                f"subdomain {self.index}: stiffness asymmetry {asym / scale:.3e}"
            )
        if basis.shape[1] > 0:
            defect = np.linalg.norm(self.stiffness @ basis)
            if defect > KERNEL_VERIFY_RTOL * scale * np.linalg.norm(basis):
                raise ValueError(
                    f"subdomain {self.index}: supplied kernel basis has "
                    f"||A N|| = {defect:.3e}, not a kernel"
                )

    @property
    def dof_count(self) -> int:
        return len(self.load)

    @property
    def kernel_dim(self) -> int:
        return self.kernel_basis.shape[1]


@dataclass
class CouplingMap:
    """Per-subdomain trace pairings B_k with orientation signs baked in.

    maps[k] has shape (dim, dof_k): row i pairs local functions with
    multiplier basis function i, already multiplied by the +-1 orientation
    of the shared interface normal as seen from subdomain k.
    """

    maps: list
    dim: int = field(init=False)

    def __post_init__(self):
        self.maps = [sp.csr_matrix(m) for m in self.maps]
        dims = {m.shape[0] for m in self.maps}
        if len(dims) != 1:
            raise DimensionMismatch(f"inconsistent multiplier dimensions {dims}")
        self.dim = dims.pop()
        stacked = sp.hstack(self.maps, format="csr")
        reached = np.diff(stacked.indptr) > 0
        if not np.all(reached):
            missing = np.flatnonzero(~reached)
            raise ValueError(
                f"multiplier dofs {missing.tolist()} are reached by no subdomain"
            )

    def apply(self, blocks) -> np.ndarray:
        """Constraint evaluation: sum_k B_k v_k."""
        if len(blocks) != len(self.maps):
            raise DimensionMismatch(
                f"{len(blocks)} blocks for {len(self.maps)} subdomains"
            )
        out = np.zeros(self.dim)
        for bmat, v in zip(self.maps, blocks):
            v = np.asarray(v, dtype=float)
            if v.shape[0] != bmat.shape[1]:
                raise DimensionMismatch(
                    f"block of length {v.shape[0]} for map with {bmat.shape[1]} columns"
                )
            out += bmat @ v
        return out

    def apply_transpose(self, mu) -> list:
        """Adjoint: block k is B_k^T mu."""
        mu = np.asarray(mu, dtype=float)
        if mu.shape[0] != self.dim:
            raise DimensionMismatch(f"multiplier length {mu.shape[0]} != {self.dim}")
        return [bmat.T @ mu for bmat in self.maps]


@dataclass
class KernelSpace:
    """Block basis of the direct sum of local kernels (floating subdomains)."""

    blocks: list
    dim: int = field(init=False)

    def __post_init__(self):
        self.blocks = [np.atleast_2d(np.asarray(b, dtype=float)) for b in self.blocks]
        dims = {b.shape[1] for b in self.blocks}
        if len(dims) != 1:
            raise DimensionMismatch(f"inconsistent kernel column counts {dims}")
        self.dim = dims.pop()
        if self.dim > 0:
            stacked = np.vstack(self.blocks)
            svals = np.linalg.svd(stacked, compute_uv=False)
            if svals.min() <= 1e-10 * svals.max():
                raise ValueError("kernel basis columns are linearly dependent")

    def combine(self, coefficients) -> list:
        """Block vector Z @ c."""
        c = np.asarray(coefficients, dtype=float)
        return [b @ c for b in self.blocks]


@dataclass
class CoupledProblem:
    """The assembled coupled system (A, B, f) with its multiplier space."""

    subproblems: list
    coupling: CouplingMap
    kernel: KernelSpace
    multipliers: "MultiplierSpace | None" = None

    def __post_init__(self):
        if len(self.subproblems) != len(self.coupling.maps):
            raise DimensionMismatch("one coupling map per subproblem required")
        for sub, bmat in zip(self.subproblems, self.coupling.maps):
            if bmat.shape[1] != sub.dof_count:
                raise DimensionMismatch(
                    f"subdomain {sub.index}: map columns {bmat.shape[1]} != "
                    f"{sub.dof_count} dofs"
                )
        for sub, blk in zip(self.subproblems, self.kernel.blocks):
            if blk.shape[0] != sub.dof_count:
                raise DimensionMismatch(
                    f"subdomain {sub.index}: kernel block rows {blk.shape[0]}"
                )
        if self.kernel.dim >= self.coupling.dim:
            raise ValueError(
                f"kernel dimension {self.kernel.dim} must stay below the "
                f"multiplier dimension {self.coupling.dim}"
            )

    @property
    def dim_lambda(self) -> int:
        return self.coupling.dim

    @property
    def dim_z(self) -> int:
        return self.kernel.dim

    def loads(self) -> list:
        return [sub.load for sub in self.subproblems]


def _apply_solver(sub: LocalSubproblem, g: np.ndarray) -> np.ndarray:
    if sub.solver is None:
        raise LocalSolverError(sub.index, "no black-box solver attached")
    try:
        return sub.solver.apply(g)
    except LocalSolverError:
        raise
    except Exception as exc:
        raise LocalSolverError(sub.index, str(exc)) from exc


def apply_schur(problem: CoupledProblem, lam) -> np.ndarray:
    """Matrix-free Schur action: sum_k B_k A_k^+ (B_k^T lambda)."""
    lam = np.asarray(lam, dtype=float)
    if not np.all(np.isfinite(lam)):
        raise ValueError("multiplier vector has non-finite entries")
    out = np.zeros(problem.dim_lambda)
    for sub, bmat in zip(problem.subproblems, problem.coupling.maps):
        out += bmat @ _apply_solver(sub, bmat.T @ lam)
    return out


def assemble_schur_rhs(problem: CoupledProblem) -> np.ndarray:
    """Right-hand side of the reduced system: -sum_k B_k A_k^+ f_k."""
    out = np.zeros(problem.dim_lambda)
    for sub, bmat in zip(problem.subproblems, problem.coupling.maps):
        out -= bmat @ _apply_solver(sub, sub.load)
    return out


def assemble_kernel_constraint(
    coupling: CouplingMap, kernel: KernelSpace
) -> np.ndarray:
    """Constraint matrix mapping kernel coefficients to multiplier duals.

    Column j is the coupling map applied to the j-th kernel basis vector.
    """
    out = np.zeros((coupling.dim, kernel.dim))
    for j in range(kernel.dim):
        blocks = [b[:, j] for b in kernel.blocks]
        out[:, j] = coupling.apply(blocks)
    return out


def kernel_compatibility_rhs(problem: CoupledProblem) -> np.ndarray:
    """Right-hand side of the kernel compatibility constraint.

    Entry j equals -<f, z_j>; the converged multiplier satisfies
    constraint^T lambda = this vector.
    """
    out = np.zeros(problem.dim_z)
    for sub, blk in zip(problem.subproblems, problem.kernel.blocks):
        if blk.shape[1]:
            out -= blk.T @ sub.load
    return out


def check_black_box_contract(sub: LocalSubproblem, rng, probes: int = 5) -> float:
    """Randomized conformance check of a solver; returns the worst defect.

    Verifies linearity and kernel-orthogonality of apply() on random dual
    loads; the defect is measured relative to the response magnitudes.
    """
    n = sub.dof_count
    worst = 0.0
    for _ in range(probes):
        g1 = rng.standard_normal(n)
        g2 = rng.standard_normal(n)
        a, b = rng.standard_normal(2)
        x1 = _apply_solver(sub, g1)
        x2 = _apply_solver(sub, g2)
        x12 = _apply_solver(sub, a * g1 + b * g2)
        scale = max(np.linalg.norm(x1), np.linalg.norm(x2), 1e-300)
        worst = max(worst, np.linalg.norm(x12 - a * x1 - b * x2) / (abs(a) + abs(b)) / scale)
        if sub.kernel_dim:
            worst = max(
                worst, np.abs(sub.kernel_basis.T @ x1).max() / scale
            )
    return worst


# ---------------------------------------------------------------------------
# Dense oracle paths. Permissible only at desk scale; the production solver
# never materializes these matrices.
# ---------------------------------------------------------------------------

def assemble_schur_dense(problem: CoupledProblem, max_dim: int = 500) -> np.ndarray:
    """Assemble the Schur matrix column by column through the solver stack."""
    dim = problem.dim_lambda
    if dim > max_dim:
        raise ValueError(f"dense Schur assembly capped at {max_dim}, got {dim}")
    out = np.zeros((dim, dim))
    for j in range(dim):
        e = np.zeros(dim)
        e[j] = 1.0
        out[:, j] = apply_schur(problem, e)
    return out


def assemble_saddle_dense(problem: CoupledProblem):
    """Dense blocks (A, B, f) of the full coupled saddle system."""
    a_blocks = [sub.stiffness.toarray() for sub in problem.subproblems]
    a_dense = sp.block_diag(
        [sp.csr_matrix(a) for a in a_blocks], format="csr"
    ).toarray()
    b_dense = sp.hstack(problem.coupling.maps, format="csr").toarray()
    f_dense = np.concatenate(problem.loads())
    return a_dense, b_dense, f_dense


def monolithic_solve(problem: CoupledProblem, max_dim: int = 5000):
    """Direct dense solve of the full saddle system [[A, -B^T], [B, 0]].

    Oracle for equivalence tests: returns (u_blocks, lambda).
    """
    a_dense, b_dense, f_dense = assemble_saddle_dense(problem)
    n = a_dense.shape[0]
    m = b_dense.shape[0]
    if n + m > max_dim:
        raise ValueError(f"monolithic oracle capped at {max_dim} dofs, got {n + m}")
    system = np.zeros((n + m, n + m))
    system[:n, :n] = a_dense
    system[:n, n:] = -b_dense.T
    system[n:, :n] = b_dense
    rhs = np.concatenate([f_dense, np.zeros(m)])
    sol = solve_dense(system, rhs)
    u_flat, lam = sol[:n], sol[n:]
    blocks = []
    offset = 0
    for sub in problem.subproblems:
        blocks.append(u_flat[offset : offset + sub.dof_count])
        offset += sub.dof_count
    return blocks, lam
