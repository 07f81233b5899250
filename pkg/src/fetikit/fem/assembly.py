"""P1 assembly, Galerkin pseudo-inverses, and trace coupling assembly."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..coupling import CouplingMap
from ..numerics import BorderedSolver, BorderedSystem
from .meshes import DIRICHLET, IntervalMesh, RectangleMesh
from .skeleton import POINT, SkeletonSpace

# two-point Gauss rule on [0, 1]
_GAUSS2 = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))


class InterfaceMismatch(Exception):
    """Interface traces of adjacent subdomains are not geometrically coincident."""


@dataclass
class LocalAssembly:
    """Assembled local problem with Dirichlet dofs eliminated.

    stiffness acts on the free dofs; lift carries the coupling of free dofs
    to eliminated Dirichlet dofs so nonzero boundary values enter the load.
    kernel_basis is the constant vector when the subdomain touches no
    Dirichlet boundary, otherwise it has zero columns.
    """

    mesh: object
    kappa: float
    stiffness: sp.csr_matrix
    kernel_basis: np.ndarray
    free_nodes: np.ndarray
    dirichlet: np.ndarray
    lift: sp.csr_matrix
    load: np.ndarray | None = None
    solver: object = None
    node_to_free: np.ndarray = field(init=False)

    def __post_init__(self):
        n_nodes = self.mesh.n_nodes
        self.node_to_free = -np.ones(n_nodes, dtype=int)
        self.node_to_free[self.free_nodes] = np.arange(len(self.free_nodes))

    @property
    def n_free(self) -> int:
        return len(self.free_nodes)


def _full_stiffness_1d(mesh: IntervalMesh, kappa: float) -> sp.csr_matrix:
    h = np.diff(mesh.vertices)
    if np.any(h <= 0.0):
        raise ValueError("invalid 1D mesh spacing")
    n = mesh.n_nodes
    rows, cols, vals = [], [], []
    for e, he in enumerate(h):
        k = kappa / he
        for (a, b, v) in ((e, e, k), (e + 1, e + 1, k), (e, e + 1, -k), (e + 1, e, -k)):
            rows.append(a)
            cols.append(b)
            vals.append(v)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _full_stiffness_2d(mesh: RectangleMesh, kappa: float) -> sp.csr_matrix:
    coords = mesh.coords()
    tris = mesh.triangles()
    rows, cols, vals = [], [], []
    for tri in tris:
        p = coords[tri]
        # gradients of the barycentric basis on the triangle
        mat = np.array(
            [
                [p[1, 1] - p[2, 1], p[2, 1] - p[0, 1], p[0, 1] - p[1, 1]],
                [p[2, 0] - p[1, 0], p[0, 0] - p[2, 0], p[1, 0] - p[0, 0]],
            ]
        )
        det = (p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1]) - (p[2, 0] - p[0, 0]) * (
            p[1, 1] - p[0, 1]
        )
        area = 0.5 * det
        if area <= 0.0:
            raise ValueError("triangle with non-positive area")
        grads = mat / det
        local = kappa * area * (grads.T @ grads)
        for a in range(3):
            for b in range(3):
                rows.append(tri[a])
                cols.append(tri[b])
                vals.append(local[a, b])
    n = mesh.n_nodes
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def assemble_local(mesh, kappa: float) -> LocalAssembly:
    """P1 stiffness with Dirichlet elimination and the analytic kernel basis."""
    if mesh.dimension == 1:
        full = _full_stiffness_1d(mesh, kappa)
    else:
        full = _full_stiffness_2d(mesh, kappa)
    dirichlet = mesh.dirichlet_nodes()
    mask = np.ones(mesh.n_nodes, dtype=bool)
    mask[dirichlet] = False
    free = np.flatnonzero(mask)
    stiffness = sp.csr_matrix(full[np.ix_(free, free)])
    lift = sp.csr_matrix(full[np.ix_(free, dirichlet)])
    if len(dirichlet) == 0:
        kernel = np.ones((len(free), 1))
    else:
        kernel = np.zeros((len(free), 0))
    return LocalAssembly(
        mesh=mesh,
        kappa=kappa,
        stiffness=stiffness,
        kernel_basis=kernel,
        free_nodes=free,
        dirichlet=dirichlet,
        lift=lift,
    )


def _load_1d(mesh: IntervalMesh, source) -> np.ndarray:
    out = np.zeros(mesh.n_nodes)
    verts = mesh.vertices
    for e in range(mesh.n_elements):
        xl, xr = verts[e], verts[e + 1]
        he = xr - xl
        for t in _GAUSS2:
            x = xl + t * he
            fval = source(np.array([[x]]))[0]
            w = 0.5 * he
            out[e] += w * fval * (1.0 - t)
            out[e + 1] += w * fval * t
    return out


def _load_2d(mesh: RectangleMesh, source) -> np.ndarray:
    out = np.zeros(mesh.n_nodes)
    coords = mesh.coords()
    for tri in mesh.triangles():
        p = coords[tri]
        det = (p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1]) - (p[2, 0] - p[0, 0]) * (
            p[1, 1] - p[0, 1]
        )
        area = 0.5 * det
        # edge-midpoint rule, exact to quadratic integrands
        for a in range(3):
            b = (a + 1) % 3
            mid = 0.5 * (p[a] + p[b])
            fval = source(mid.reshape(1, 2))[0]
            out[tri[a]] += area / 3.0 * 0.5 * fval
            out[tri[b]] += area / 3.0 * 0.5 * fval
    return out


def assemble_load(assembly: LocalAssembly, source, dirichlet_values=None) -> np.ndarray:
    """Consistent load vector on the free dofs, with Dirichlet lifting.

    source maps an (m, dim) coordinate array to m values. dirichlet_values,
    when given, maps coordinates of eliminated nodes to their boundary data;
    the lifted contribution -A_fd u_D is folded into the load.
    """
    mesh = assembly.mesh
    if mesh.dimension == 1:
        full = _load_1d(mesh, source)
    else:
        full = _load_2d(mesh, source)
    load = full[assembly.free_nodes]
    if len(assembly.dirichlet) and dirichlet_values is not None:
        u_d = np.asarray(dirichlet_values(mesh.coords()[assembly.dirichlet]), dtype=float)
        load = load - assembly.lift @ u_d
    return load


def full_field(assembly: LocalAssembly, u_free, dirichlet_values=None) -> np.ndarray:
    """Nodal field over all mesh nodes from free values plus boundary data."""
    out = np.zeros(assembly.mesh.n_nodes)
    out[assembly.free_nodes] = np.asarray(u_free, dtype=float)
    if len(assembly.dirichlet) and dirichlet_values is not None:
        coords = assembly.mesh.coords()[assembly.dirichlet]
        out[assembly.dirichlet] = np.asarray(dirichlet_values(coords), dtype=float)
    return out


class GalerkinPseudoInverse:
    """Black-box local solver backed by the bordered factorization.

    apply(g) returns the kernel-orthogonal Galerkin solution of the local
    problem with dual load g; the construction makes the interface Schur
    operator symmetric positive semi-definite.
    """

    def __init__(self, stiffness, kernel_basis):
        self._solver = BorderedSolver(BorderedSystem(stiffness, kernel_basis))

    def apply(self, g: np.ndarray) -> np.ndarray:
        x, _ = self._solver.solve(g)
        return x


def galerkin_pseudo_inverse(stiffness, kernel_basis) -> GalerkinPseudoInverse:
    return GalerkinPseudoInverse(stiffness, kernel_basis)


def _hat_integral(tj: float, h: float, a: float, b: float) -> float:
    """Integral over [a, b] of the piecewise-linear hat centered at tj with
    half-width h. Exact for arbitrary cell bounds."""
    total = 0.0
    # rising branch on [tj - h, tj]
    lo, hi = max(a, tj - h), min(b, tj)
    if hi > lo:
        total += ((hi - (tj - h)) ** 2 - (lo - (tj - h)) ** 2) / (2.0 * h)
    # falling branch on [tj, tj + h]
    lo, hi = max(a, tj), min(b, tj + h)
    if hi > lo:
        total += (((tj + h) - lo) ** 2 - ((tj + h) - hi) ** 2) / (2.0 * h)
    return total


def build_coupling(assemblies, skeleton: SkeletonSpace) -> CouplingMap:
    """Assemble the signed trace pairings B_k against the skeleton space.

    Point interfaces pair nodal values directly; segment interfaces pair the
    piecewise-linear trace of each free node with the piecewise-constant
    multiplier cells by exact integration. The interface normal points from
    the lower- to the higher-indexed subdomain, so the lo side enters with
    sign +1 and the hi side with -1.
    """
    dim = skeleton.dim
    entries: list[dict] = [
        {"rows": [], "cols": [], "vals": []} for _ in assemblies
    ]
    for iface in skeleton.interfaces:
        sides = []
        for (k, edge), sign in ((iface.lo, 1.0), (iface.hi, -1.0)):
            nodes = assemblies[k].mesh.interface_nodes(edge)
            sides.append((k, sign, nodes))
        t_lo = np.array([t for _, t in sides[0][2]])
        t_hi = np.array([t for _, t in sides[1][2]])
        if len(t_lo) != len(t_hi) or np.abs(t_lo - t_hi).max() > 1e-12:
            raise InterfaceMismatch(
                f"interface {iface.id}: trace meshes do not coincide"
            )
        bounds = iface.cell_bounds()
        for k, sign, nodes in sides:
            assembly = assemblies[k]
            store = entries[k]
            if iface.kind == POINT:
                node, _ = nodes[0]
                fdof = assembly.node_to_free[node]
                if fdof < 0:
                    continue  # Dirichlet trace contributes no constraint
                store["rows"].append(iface.offset)
                store["cols"].append(fdof)
                store["vals"].append(sign)
                continue
            spacing = nodes[1][1] - nodes[0][1]
            for node, t in nodes:
                fdof = assembly.node_to_free[node]
                if fdof < 0:
                    continue
                for c in range(iface.n_cells):
                    val = _hat_integral(t, spacing, bounds[c], bounds[c + 1])
                    if val != 0.0:
                        store["rows"].append(iface.offset + c)
                        store["cols"].append(fdof)
                        store["vals"].append(sign * val)
    maps = []
    for assembly, store in zip(assemblies, entries):
        maps.append(
            sp.csr_matrix(
                (store["vals"], (store["rows"], store["cols"])),
                shape=(dim, assembly.n_free),
            )
        )
    return CouplingMap(maps)


def _lumped_mass(assembly: LocalAssembly) -> np.ndarray:
    mesh = assembly.mesh
    out = np.zeros(mesh.n_nodes)
    if mesh.dimension == 1:
        h = np.diff(mesh.vertices)
        out[:-1] += 0.5 * h
        out[1:] += 0.5 * h
    else:
        coords = mesh.coords()
        for tri in mesh.triangles():
            p = coords[tri]
            det = (p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1]) - (
                p[2, 0] - p[0, 0]
            ) * (p[1, 1] - p[0, 1])
            out[tri] += 0.5 * det / 3.0
    return out[assembly.free_nodes]


def make_d_blocks(assemblies, choice: str = "mass_by_h") -> list:
    """Diagonal scalar products on the block space for the preconditioner.

    "mass_by_h" is the lumped local mass scaled by the coefficient over the
    local mesh size, "mass" the plain lumped mass, "identity" all ones.
    """
    blocks = []
    for assembly in assemblies:
        if choice == "identity":
            blocks.append(np.ones(assembly.n_free))
        elif choice == "mass":
            blocks.append(_lumped_mass(assembly))
        elif choice == "mass_by_h":
            blocks.append(
                assembly.kappa * _lumped_mass(assembly) / assembly.mesh.h_max
            )
        else:
            raise ValueError(f"unknown d choice '{choice}'")
    return blocks
