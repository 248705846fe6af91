"""Ergodic mean field game cell problems on the 1-D torus: effective Hamiltonian and drift."""

from .cell_system import CellProblem, CellSolution, LinearizedSolution
from .effective import (
    EffectiveSample,
    SolverError,
    coupling_residual,
    effective_drift,
    evaluate_point,
    fd_dHdP,
    fd_norm_derivative,
    solve_cell,
    solve_linearized,
    structure_discrepancy,
    upwind_drift,
)
from .lsq_newton import SolveDiagnostics, SolverOptions
from .potentials import PotentialSpec
from .sweep import SweepReport, SweepSpec, asymptotic_slice, property_audit, refinement_study, run_sweep
from .torus_grid import TorusGrid, build_grid

__all__ = [
    "CellProblem",
    "CellSolution",
    "EffectiveSample",
    "LinearizedSolution",
    "PotentialSpec",
    "SolveDiagnostics",
    "SolverError",
    "SolverOptions",
    "SweepReport",
    "SweepSpec",
    "TorusGrid",
    "asymptotic_slice",
    "build_grid",
    "coupling_residual",
    "effective_drift",
    "evaluate_point",
    "fd_dHdP",
    "fd_norm_derivative",
    "property_audit",
    "refinement_study",
    "run_sweep",
    "solve_cell",
    "solve_linearized",
    "structure_discrepancy",
    "upwind_drift",
]
