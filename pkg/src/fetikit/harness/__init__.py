"""Config-driven experiment harness with machine-readable reports."""

from .config import StudyConfig, load_study
from .report import ExperimentReport, RunRecord, emit_report
from .studies import (
    run_convergence,
    run_fracture,
    run_oracle,
    run_preconditioner_study,
    run_stability_sweep,
    run_study,
)

__all__ = [
    "StudyConfig",
    "load_study",
    "ExperimentReport",
    "RunRecord",
    "emit_report",
    "run_convergence",
    "run_fracture",
    "run_oracle",
    "run_preconditioner_study",
    "run_stability_sweep",
    "run_study",
]
