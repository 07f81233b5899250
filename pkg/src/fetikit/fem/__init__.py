"""Reference FEM kit: meshes, P1 assembly, skeleton spaces, scenarios."""

from .meshes import DegenerateElement, IntervalMesh, RectangleMesh
from .skeleton import Interface, SkeletonSpace
from .assembly import (
    GalerkinPseudoInverse,
    InterfaceMismatch,
    LocalAssembly,
    assemble_load,
    assemble_local,
    build_coupling,
    full_field,
    galerkin_pseudo_inverse,
    make_d_blocks,
)
from .cases import ManufacturedCase, StarNetworkCase, get_case, make_star_case
from .errors import broken_h1_error, multiplier_error
from .scenarios import (
    ConfigInvalid,
    PreconditionerOptions,
    Scenario,
    ScenarioConfig,
    StabilizationOptions,
    build_scenario,
)

__all__ = [
    "DegenerateElement",
    "IntervalMesh",
    "RectangleMesh",
    "Interface",
    "SkeletonSpace",
    "GalerkinPseudoInverse",
    "InterfaceMismatch",
    "LocalAssembly",
    "assemble_load",
    "assemble_local",
    "build_coupling",
    "full_field",
    "galerkin_pseudo_inverse",
    "make_d_blocks",
    "ManufacturedCase",
    "StarNetworkCase",
    "get_case",
    "make_star_case",
    "broken_h1_error",
    "multiplier_error",
    "ConfigInvalid",
    "PreconditionerOptions",
    "Scenario",
    "ScenarioConfig",
    "StabilizationOptions",
    "build_scenario",
]
