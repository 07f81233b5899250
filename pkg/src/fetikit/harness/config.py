"""Study configuration files: strict schema over nested key-value text.

A study file is UTF-8 YAML restricted to plain mappings, sequences and
scalars. Unknown keys are errors; every diagnostic names the offending
field path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..fem.scenarios import (
    ConfigInvalid,
    PreconditionerOptions,
    ScenarioConfig,
    StabilizationOptions,
    validate_config,
)
from ..reduction import SolverOptions

STUDIES = ("converge", "sweep", "precond", "fracture", "oracle")

_SCENARIO_KEYS = {
    "name",
    "subdomains",
    "h",
    "ratio",
    "kappa",
    "case",
    "domain",
    "dirichlet_edges",
    "segment_length",
}
_TOP_KEYS = {
    "study",
    "seed",
    "out",
    "format",
    "scenario",
    "solver",
    "stabilization",
    "preconditioner",
    "converge",
    "sweep",
    "precond",
    "fracture",
    "oracle",
}
_STUDY_KEYS = {
    "converge": {"levels"},
    "sweep": {"ratios", "levels", "rescue_gamma"},
    "precond": {"subdomain_counts"},
    "fracture": {"conductivity_sets"},
    "oracle": {"variants"},
}


@dataclass
class StudyConfig:
    """Parsed and validated study description."""

    study: str
    scenario: ScenarioConfig
    seed: int = 0
    out: str = "results"
    format: str = "both"
    levels: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    rescue_gamma: float | None = 1.0
    subdomain_counts: list = field(default_factory=list)
    conductivity_sets: list = field(default_factory=list)
    variants: list = field(default_factory=list)

    def echo(self) -> dict:
        sc = self.scenario
        return {
            "study": self.study,
            "seed": self.seed,
            "scenario": {
                "name": sc.name,
                "subdomains": list(sc.subdomains),
                "h": sc.h,
                "ratio": sc.ratio,
                "kappa": list(sc.kappa) if not _is_scalar(sc.kappa) else sc.kappa,
                "case": sc.case,
                "domain": [list(d) for d in sc.domain] if sc.domain else None,
                "dirichlet_edges": list(sc.dirichlet_edges),
                "segment_length": sc.segment_length,
            },
            "solver": {"tol": sc.solver.tol, "max_iter": sc.solver.max_iter},
            "stabilization": {
                "enabled": sc.stabilization.enabled,
                "gamma": sc.stabilization.gamma,
                "coarsen": sc.stabilization.coarsen,
            },
            "preconditioner": {
                "enabled": sc.preconditioner.enabled,
                "d_choice": sc.preconditioner.d_choice,
                "sigma_choice": sc.preconditioner.sigma_choice,
            },
            "levels": list(self.levels),
            "ratios": list(self.ratios),
            "subdomain_counts": list(self.subdomain_counts),
        }


def _is_scalar(value) -> bool:
    return isinstance(value, (int, float, str, bool)) or value is None


def _require_mapping(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigInvalid(f"{path}: expected a mapping, got {type(value).__name__}")
    return value

def _check_keys(mapping: dict, allowed: set, path: str) -> None:
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        raise ConfigInvalid(f"{path}: unknown keys {unknown}")


def _get_number(mapping: dict, key: str, path: str, default=None, required=False):
    if key not in mapping or mapping[key] is None:
        if required:
            raise ConfigInvalid(f"{path}.{key}: required")
        return default
    value = mapping[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigInvalid(f"{path}.{key}: expected a number, got {value!r}")
    return value


def _parse_scenario(raw: dict, path: str, require_name: bool = True) -> dict:
    _check_keys(raw, _SCENARIO_KEYS, path)
    out = dict(raw)
    if require_name and "name" not in out:
        raise ConfigInvalid(f"{path}.name: required")
    if "h" in out:
        _get_number(out, "h", path, required=True)
    if "domain" in out and out["domain"] is not None:
        domain = out["domain"]
        try:
            ((a, b), (c, d)) = domain
            out["domain"] = ((float(a), float(b)), (float(c), float(d)))
        except (TypeError, ValueError) as exc:
            raise ConfigInvalid(f"{path}.domain: expected [[x0,x1],[y0,y1]]") from exc
    if "subdomains" in out:
        subs = out["subdomains"]
        if isinstance(subs, int):
            out["subdomains"] = (subs,)
        elif isinstance(subs, (list, tuple)):
            out["subdomains"] = tuple(int(s) for s in subs)
        else:
            raise ConfigInvalid(f"{path}.subdomains: expected an int or list")
    if "dirichlet_edges" in out and out["dirichlet_edges"] is not None:
        out["dirichlet_edges"] = tuple(str(e) for e in out["dirichlet_edges"])
    if "kappa" in out and isinstance(out["kappa"], (list, tuple)):
        out["kappa"] = tuple(float(k) for k in out["kappa"])
    return {k: v for k, v in out.items() if v is not None}


def load_study(path, study: str | None = None, seed: int | None = None) -> StudyConfig:
    """Load, validate and normalize a study configuration file.

    study, when given (from the CLI subcommand), must agree with the file's
    own study field; seed overrides the configured seed.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config file {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigInvalid(f"{path}: not valid structured text: {exc}") from exc
    raw = _require_mapping(raw if raw is not None else {}, "config")
    _check_keys(raw, _TOP_KEYS, "config")

    declared = raw.get("study")
    if declared is not None and declared not in STUDIES:
        raise ConfigInvalid(f"study: unknown study '{declared}'")
    if study is not None and declared is not None and study != declared:
        raise ConfigInvalid(
            f"study: config declares '{declared}' but '{study}' was requested"
        )
    resolved = study or declared
    if resolved is None:
        raise ConfigInvalid("study: required (in the file or via the subcommand)")

    scen_raw = _parse_scenario(
        _require_mapping(raw.get("scenario", {}), "scenario"), "scenario"
    )

    solver_raw = _require_mapping(raw.get("solver", {}) or {}, "solver")
    _check_keys(solver_raw, {"tol", "max_iter"}, "solver")
    tol = _get_number(solver_raw, "tol", "solver", default=1e-10)
    max_iter = solver_raw.get("max_iter")
    if max_iter is not None:
        max_iter = int(max_iter)
    solver = SolverOptions(tol=float(tol), max_iter=max_iter)

    stab_raw = _require_mapping(raw.get("stabilization", {}) or {}, "stabilization")
    _check_keys(stab_raw, {"enabled", "gamma", "coarsen"}, "stabilization")
    stabilization = StabilizationOptions(
        enabled=bool(stab_raw.get("enabled", False)),
        gamma=float(_get_number(stab_raw, "gamma", "stabilization", default=1.0)),
        coarsen=int(stab_raw.get("coarsen", 3)),
    )

    pre_raw = _require_mapping(raw.get("preconditioner", {}) or {}, "preconditioner")
    _check_keys(pre_raw, {"enabled", "d_choice", "sigma_choice"}, "preconditioner")
    preconditioner = PreconditionerOptions(
        enabled=bool(pre_raw.get("enabled", True)),
        d_choice=str(pre_raw.get("d_choice", "mass_by_h")),
        sigma_choice=str(pre_raw.get("sigma_choice", "mass")),
    )

    seed_value = raw.get("seed", 0)
    if not isinstance(seed_value, int) or isinstance(seed_value, bool):
        raise ConfigInvalid(f"seed: expected an integer, got {seed_value!r}")
    if seed is not None:
        seed_value = seed

    scenario = ScenarioConfig(
        solver=solver,
        stabilization=stabilization,
        preconditioner=preconditioner,
        seed=seed_value,
        **scen_raw,
    )
    validate_config(scenario)

    config = StudyConfig(
        study=resolved,
        scenario=scenario,
        seed=seed_value,
        out=str(raw.get("out", "results")),
        format=str(raw.get("format", "both")),
    )

    block = _require_mapping(raw.get(resolved, {}) or {}, resolved)
    _check_keys(block, _STUDY_KEYS[resolved], resolved)
    if resolved == "converge":
        levels = block.get("levels")
        if not isinstance(levels, (list, tuple)) or len(levels) < 3:
            raise ConfigInvalid("converge.levels: need at least 3 refinement levels")
        config.levels = [float(v) for v in levels]
        _check_positive(config.levels, "converge.levels")
    elif resolved == "sweep":
        ratios = block.get("ratios")
        if not isinstance(ratios, (list, tuple)) or len(ratios) < 2:
            raise ConfigInvalid("sweep.ratios: need at least 2 ratios")
        config.ratios = [float(v) for v in ratios]
        _check_positive(config.ratios, "sweep.ratios")
        levels = block.get("levels") or [config.scenario.h]
        config.levels = [float(v) for v in levels]
        _check_positive(config.levels, "sweep.levels")
        gamma = block.get("rescue_gamma", 1.0)
        config.rescue_gamma = None if gamma is None else float(gamma)
    elif resolved == "precond":
        counts = block.get("subdomain_counts")
        if not isinstance(counts, (list, tuple)) or len(counts) < 3:
            raise ConfigInvalid(
                "precond.subdomain_counts: need at least 3 subdomain counts"
            )
        config.subdomain_counts = [int(v) for v in counts]
        if any(c < 2 for c in config.subdomain_counts):
            raise ConfigInvalid("precond.subdomain_counts: counts must be >= 2")
    elif resolved == "fracture":
        sets = block.get("conductivity_sets") or [list(config.scenario.kappa)
                                                  if not _is_scalar(config.scenario.kappa)
                                                  else [1.0, 1.0, 1.0]]
        config.conductivity_sets = [tuple(float(a) for a in s) for s in sets]
        for s in config.conductivity_sets:
            if len(s) != 3 or any(a <= 0 for a in s):
                raise ConfigInvalid(
                    f"fracture.conductivity_sets: need triples of positive values, got {s}"
                )
    elif resolved == "oracle":
        variants = block.get("variants") or [{}]
        if not isinstance(variants, (list, tuple)):
            raise ConfigInvalid("oracle.variants: expected a list of scenario overrides")
        config.variants = [
            _parse_scenario(_require_mapping(v, f"oracle.variants[{i}]"),
                            f"oracle.variants[{i}]", require_name=False)
            for i, v in enumerate(variants)
        ]
    return config


def _check_positive(values, path: str) -> None:
    if any(v <= 0 for v in values):
        raise ConfigInvalid(f"{path}: values must be positive")
