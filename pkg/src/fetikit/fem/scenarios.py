"""Declarative scenario construction: geometry, assembly, and wiring.

A ScenarioConfig describes one coupled test problem; build_scenario turns it
into meshes, assembled local problems with Galerkin pseudo-inverse solvers,
the skeleton multiplier space, the coupling maps, and the fully wired
CoupledProblem.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla

from ..coupling import (
    CoupledProblem,
    CouplingMap,
    KernelSpace,
    LocalSubproblem,
    assemble_kernel_constraint,
)
from ..reduction import (
    MultiplierSpace,
    SchurPreconditioner,
    SolverOptions,
    solve_reduced,
)
from ..stabilization import CoarseMultiplierSpace, StabilizationForm, solve_stabilized
from .assembly import (
    assemble_load,
    assemble_local,
    build_coupling,
    galerkin_pseudo_inverse,
    make_d_blocks,
)
from .cases import get_case, make_star_case
from .meshes import DIRICHLET, FREE, INTERFACE, IntervalMesh, RectangleMesh
from .skeleton import Interface, POINT, SEGMENT, SkeletonSpace

SCENARIO_NAMES = ("chain1d", "grid2d", "fracture_star")
EDGE_NAMES = ("left", "right", "bottom", "top")
D_CHOICES = ("mass_by_h", "mass", "identity")
SIGMA_CHOICES = ("mass", "identity")


class ConfigInvalid(Exception):
    """A scenario or study configuration failed validation.

    The message names the offending field so config files can be fixed
    without reading source code.
    """


@dataclass(frozen=True)
class StabilizationOptions:
    enabled: bool = False
    gamma: float = 1.0
    coarsen: int = 3


@dataclass(frozen=True)
class PreconditionerOptions:
    enabled: bool = True
    d_choice: str = "mass_by_h"
    sigma_choice: str = "mass"


@dataclass(frozen=True)
class ScenarioConfig:
    """Declarative description of one coupled test problem."""

    name: str
    subdomains: tuple
    h: float
    ratio: float = 3.0
    kappa: object = 1.0
    case: str = ""
    domain: tuple | None = None
    dirichlet_edges: tuple = ("left", "right", "bottom", "top")
    segment_length: float = 1.0
    solver: SolverOptions = field(default_factory=SolverOptions)
    stabilization: StabilizationOptions = field(default_factory=StabilizationOptions)
    preconditioner: PreconditionerOptions = field(default_factory=PreconditionerOptions)
    seed: int = 0
    debug_checks: bool = False

    def __post_init__(self):
        subs = self.subdomains
        if isinstance(subs, int):
            subs = (subs,)
        object.__setattr__(self, "subdomains", tuple(int(s) for s in subs))
        object.__setattr__(self, "dirichlet_edges", tuple(self.dirichlet_edges))


def _check(cond, message):
    if not cond:
        raise ConfigInvalid(message)


def _resolve_cells(extent: float, h: float, label: str) -> int:
    n = extent / h
    n_round = int(round(n))
    _check(
        n_round >= 1 and abs(n - n_round) < 1e-6,
        f"{label}: h = {h} does not tile an extent of {extent} "
        f"({n:.6f} elements)",
    )
    return n_round


def _broadcast_kappa(kappa, count: int) -> tuple:
    if np.isscalar(kappa):
        values = (float(kappa),) * count
    else:
        values = tuple(float(k) for k in kappa)
        _check(
            len(values) == count,
            f"kappa: expected {count} per-subdomain values, got {len(values)}",
        )
    _check(all(k > 0 for k in values), "kappa: coefficients must be positive")
    return values


def validate_config(config: ScenarioConfig) -> None:
    _check(config.name in SCENARIO_NAMES, f"name: unknown scenario '{config.name}'")
    _check(config.h > 0, f"h: must be positive, got {config.h}")
    _check(config.ratio > 0, f"ratio: must be positive, got {config.ratio}")
    _check(config.solver.tol > 0, f"solver.tol: must be positive, got {config.solver.tol}")
    _check(
        config.stabilization.coarsen >= 1,
        f"stabilization.coarsen: must be >= 1, got {config.stabilization.coarsen}",
    )
    if config.stabilization.enabled:
        _check(
            config.stabilization.gamma > 0,
            f"stabilization.gamma: must be positive, got {config.stabilization.gamma}",
        )
    _check(
        config.preconditioner.d_choice in D_CHOICES,
        f"preconditioner.d_choice: unknown '{config.preconditioner.d_choice}'",
    )
    _check(
        config.preconditioner.sigma_choice in SIGMA_CHOICES,
        f"preconditioner.sigma_choice: unknown '{config.preconditioner.sigma_choice}'",
    )
    if config.name == "chain1d":
        _check(
            len(config.subdomains) == 1 and config.subdomains[0] >= 2,
            f"subdomains: chain1d needs a single count >= 2, got {config.subdomains}",
        )
    elif config.name == "grid2d":
        _check(
            len(config.subdomains) == 2 and min(config.subdomains) >= 1
            and max(config.subdomains) >= 2,
            f"subdomains: grid2d needs [mx, my] with at least two subdomains, "
            f"got {config.subdomains}",
        )
        _check(
            all(e in EDGE_NAMES for e in config.dirichlet_edges)
            and len(config.dirichlet_edges) >= 1,
            f"dirichlet_edges: need a nonempty subset of {EDGE_NAMES}, "
            f"got {config.dirichlet_edges}",
        )
    else:
        _check(
            config.subdomains in ((3,), ()),
            f"subdomains: fracture_star is a three-segment scenario, "
            f"got {config.subdomains}",
        )
        _check(
            config.segment_length > 0,
            f"segment_length: must be positive, got {config.segment_length}",
        )


@dataclass
class Scenario:
    """A built scenario: the coupled problem plus its geometric context."""

    config: ScenarioConfig
    problem: CoupledProblem
    assemblies: list
    skeleton: SkeletonSpace
    case: object
    kappas: tuple

    @property
    def meshes(self) -> list:
        return [a.mesh for a in self.assemblies]

    def make_preconditioner(self, d_choice: str | None = None) -> SchurPreconditioner:
        choice = d_choice or self.config.preconditioner.d_choice
        blocks = make_d_blocks(self.assemblies, choice)
        return SchurPreconditioner(self.problem, self.problem.multipliers, blocks)

    def make_stabilization_form(self, gamma: float | None = None) -> StabilizationForm:
        opts = self.config.stabilization
        prolongation, delta_tilde = self.skeleton.coarsen(opts.coarsen)
        return StabilizationForm(
            coarse=CoarseMultiplierSpace(prolongation, delta_tilde),
            sigma_diag=self.problem.multipliers.sigma_diag,
            weights=self.skeleton.stabilization_weights(),
            gamma=opts.gamma if gamma is None else gamma,
        )

    def solve(self):
        """Run the solver selected by the configuration."""
        if self.config.stabilization.enabled:
            return solve_stabilized(
                self.problem, self.make_stabilization_form(), tol=self.config.solver.tol
            )
        precond = (
            self.make_preconditioner() if self.config.preconditioner.enabled else None
        )
        return solve_reduced(self.problem, self.config.solver, precond)


def _kernel_space(assemblies) -> KernelSpace:
    floating = [k for k, a in enumerate(assemblies) if a.kernel_basis.shape[1] > 0]
    blocks = []
    for k, assembly in enumerate(assemblies):
        block = np.zeros((assembly.n_free, len(floating)))
        for j, kf in enumerate(floating):
            if kf == k:
                block[:, j] = assembly.kernel_basis[:, 0]
        blocks.append(block)
    return KernelSpace(blocks)


def _debug_validate(assemblies):
    """Numerical cross-check of the analytic kernels on desk-scale blocks."""
    for k, assembly in enumerate(assemblies):
        dense = assembly.stiffness.toarray()
        if dense.shape[0] > 2000:
            continue
        eigs = sla.eigvalsh(dense)
        scale = max(abs(eigs).max(), 1e-300)
        numerical_kernel = int(np.sum(np.abs(eigs) < 1e-10 * scale))
        claimed = assembly.kernel_basis.shape[1]
        if numerical_kernel != claimed:
            raise ValueError(
                f"subdomain {k}: numerical kernel dimension {numerical_kernel} "
                f"does not match the analytic kernel ({claimed})"
            )
        positive = eigs[np.abs(eigs) >= 1e-10 * scale]
        if positive.size and positive.min() <= 0:
            raise ValueError(f"subdomain {k}: stiffness not coercive off the kernel")


def _finish(config, assemblies, skeleton, case, kappas) -> Scenario:
    for assembly in assemblies:
        bbox = galerkin_pseudo_inverse(assembly.stiffness, assembly.kernel_basis)
        assembly.solver = bbox  # type: ignore[attr-defined]
    if config.debug_checks:
        _debug_validate(assemblies)
    coupling = build_coupling(assemblies, skeleton)
    kernel = _kernel_space(assemblies)
    subproblems = [
        LocalSubproblem(
            index=k,
            stiffness=a.stiffness,
            load=a.load,  # type: ignore[attr-defined]
            kernel_basis=a.kernel_basis,
            solver=a.solver,  # type: ignore[attr-defined]
        )
        for k, a in enumerate(assemblies)
    ]
    constraint = assemble_kernel_constraint(coupling, kernel)
    space = MultiplierSpace(
        dim=skeleton.dim,
        sigma_diag=skeleton.sigma_diag(config.preconditioner.sigma_choice),
        constraint=constraint,
    )
    problem = CoupledProblem(
        subproblems=subproblems, coupling=coupling, kernel=kernel, multipliers=space
    )
    return Scenario(
        config=config,
        problem=problem,
        assemblies=assemblies,
        skeleton=skeleton,
        case=case,
        kappas=kappas,
    )


def _build_chain1d(config: ScenarioConfig) -> Scenario:
    count = config.subdomains[0]
    width = 1.0 / count
    n_loc = _resolve_cells(width, config.h, "h")
    kappas = _broadcast_kappa(config.kappa, count)
    _check(
        len(set(kappas)) == 1 or not config.case,
        "kappa: manufactured chain cases need a uniform coefficient",
    )
    case = get_case(config.case or "quad1d")
    _check(case.dimension == 1, f"case: '{case.name}' is not a 1D case")

    vertices = np.linspace(0.0, 1.0, count * n_loc + 1)
    assemblies = []
    for k in range(count):
        local = vertices[k * n_loc : (k + 1) * n_loc + 1]
        boundary = {
            "left": (DIRICHLET, None) if k == 0 else (INTERFACE, k - 1),
            "right": (DIRICHLET, None) if k == count - 1 else (INTERFACE, k),
        }
        mesh = IntervalMesh(vertices=local.copy(), boundary=boundary)
        assembly = assemble_local(mesh, kappas[k])
        assembly.load = assemble_load(  # type: ignore[attr-defined]
            assembly,
            source=lambda pts, kk=kappas[k]: case.source(pts, kk),
            dirichlet_values=case.displacement,
        )
        assemblies.append(assembly)

    interfaces = [
        Interface(
            id=i,
            lo=(i, "right"),
            hi=(i + 1, "left"),
            kind=POINT,
            length=0.0,
            n_cells=1,
            cell_size=config.h,
            offset=i,
        )
        for i in range(count - 1)
    ]
    skeleton = SkeletonSpace(interfaces=interfaces, fine_h=config.h)
    return _finish(config, assemblies, skeleton, case, kappas)


def _build_grid2d(config: ScenarioConfig) -> Scenario:
    mx, my = config.subdomains
    domain = config.domain or ((0.0, 1.0), (0.0, 1.0))
    (x0, x1), (y0, y1) = domain
    _check(x1 > x0 and y1 > y0, f"domain: empty extents {domain}")
    sub_w = (x1 - x0) / mx
    sub_h = (y1 - y0) / my
    nx = _resolve_cells(sub_w, config.h, "h (x direction)")
    ny = _resolve_cells(sub_h, config.h, "h (y direction)")
    kappas = _broadcast_kappa(config.kappa, mx * my)
    _check(
        len(set(kappas)) == 1 or not config.case,
        "kappa: manufactured grid cases need a uniform coefficient",
    )
    case = get_case(config.case or "sine2d", domain=domain)
    _check(case.dimension == 2, f"case: '{case.name}' is not a 2D case")

    def cells_on(n_side: int, label: str) -> int:
        cells = n_side / config.ratio
        cells_round = int(round(cells))
        _check(
            cells_round >= 1 and abs(cells - cells_round) < 1e-9,
            f"ratio: {label} interfaces with {n_side} trace elements cannot "
            f"carry cells of ratio {config.ratio}",
        )
        return cells_round

    interfaces = []
    offset = 0
    for iy in range(my):
        for ix in range(mx):
            k = iy * mx + ix
            if ix < mx - 1:
                n_cells = cells_on(ny, "vertical")
                interfaces.append(
                    Interface(
                        id=len(interfaces),
                        lo=(k, "right"),
                        hi=(k + 1, "left"),
                        kind=SEGMENT,
                        length=sub_h,
                        n_cells=n_cells,
                        cell_size=sub_h / n_cells,
                        offset=offset,
                    )
                )
                offset += n_cells
            if iy < my - 1:
                n_cells = cells_on(nx, "horizontal")
                interfaces.append(
                    Interface(
                        id=len(interfaces),
                        lo=(k, "top"),
                        hi=(k + mx, "bottom"),
                        kind=SEGMENT,
                        length=sub_w,
                        n_cells=n_cells,
                        cell_size=sub_w / n_cells,
                        offset=offset,
                    )
                )
                offset += n_cells

    iface_by_side = {}
    for iface in interfaces:
        iface_by_side[iface.lo] = iface.id
        iface_by_side[iface.hi] = iface.id

    assemblies = []
    for iy in range(my):
        for ix in range(mx):
            k = iy * mx + ix
            edges = {}
            for edge, outer in (
                ("left", ix == 0),
                ("right", ix == mx - 1),
                ("bottom", iy == 0),
                ("top", iy == my - 1),
            ):
                if outer:
                    tag = DIRICHLET if edge in config.dirichlet_edges else FREE
                    edges[edge] = (tag, None)
                else:
                    edges[edge] = (INTERFACE, iface_by_side[(k, edge)])
            mesh = RectangleMesh(
                x0=x0 + ix * sub_w,
                y0=y0 + iy * sub_h,
                width=sub_w,
                height=sub_h,
                nx=nx,
                ny=ny,
                edges=edges,
            )
            assembly = assemble_local(mesh, kappas[k])
            assembly.load = assemble_load(  # type: ignore[attr-defined]
                assembly,
                source=lambda pts, kk=kappas[k]: case.source(pts, kk),
                dirichlet_values=case.displacement,
            )
            assemblies.append(assembly)

    skeleton = SkeletonSpace(interfaces=interfaces, fine_h=config.h)
    return _finish(config, assemblies, skeleton, case, kappas)


def _build_fracture(config: ScenarioConfig) -> Scenario:
    length = config.segment_length
    n_loc = _resolve_cells(length, config.h, "h")
    kappas = _broadcast_kappa(config.kappa, 3)
    case = make_star_case(kappas, length)

    assemblies = []
    for k in range(3):
        mesh = IntervalMesh(
            vertices=np.linspace(0.0, length, n_loc + 1),
            boundary={"left": (INTERFACE, None), "right": (DIRICHLET, None)},
        )
        assembly = assemble_local(mesh, kappas[k])
        assembly.load = assemble_load(  # type: ignore[attr-defined]
            assembly,
            source=lambda pts, seg=k: case.segment_source(seg, pts[:, 0]),
            dirichlet_values=lambda pts, seg=k: case.segment_displacement(
                seg, pts[:, 0]
            ),
        )
        assemblies.append(assembly)

    # two point multipliers at the junction enforce pairwise continuity
    interfaces = [
        Interface(
            id=0, lo=(0, "left"), hi=(1, "left"), kind=POINT,
            length=0.0, n_cells=1, cell_size=config.h, offset=0,
        ),
        Interface(
            id=1, lo=(1, "left"), hi=(2, "left"), kind=POINT,
            length=0.0, n_cells=1, cell_size=config.h, offset=1,
        ),
    ]
    skeleton = SkeletonSpace(interfaces=interfaces, fine_h=config.h)
    return _finish(config, assemblies, skeleton, case, kappas)


def build_scenario(config: ScenarioConfig) -> Scenario:
    """Validate the configuration and build the fully wired scenario."""
    validate_config(config)
    if config.name == "chain1d":
        return _build_chain1d(config)
    if config.name == "grid2d":
        return _build_grid2d(config)
    return _build_fracture(config)
