"""
Effective quantities computed from converged cell solutions.

* ``Hbar(P, alpha)`` - the ergodic constant of the cell system
* ``bbar(P, alpha)`` - the averaged drift ``int (u_y + P) m``
* ``c = dHbar/dP`` - from one linear least-squares solve of the linearized system
* ``R`` - the structure residual ``|int alpha V_m(y, alpha m) mtilde m|``
* ``E = |c - bbar|`` and the relation error ``|c - bbar + int alpha V_m mtilde m|``
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .cell_system import (
    CellProblem,
    CellSolution,
    LinearizedSolution,
    assemble_jacobian,
    assemble_linearized,
    assemble_residual,
    pack,
    residual_noise_floor,
    unpack,
)
from .lsq_newton import SolveDiagnostics, StagnationError, gauss_newton, solve_linear_lsq
from .potentials import eval_coupling, eval_coupling_dm
from .torus_grid import TorusGrid, centered_gradient, face_slopes, quadrature

logger = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """A cell solve did not converge."""

    def __init__(self, message: str, diagnostics: SolveDiagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass
class EffectiveSample:
    P: float
    alpha: float
    Hbar: float
    bbar: float
    dH_dP: float
    R: float
    E: float
    relation_error: float
    converged: bool = True
    iterations: int = 0
    residual_norm: float = 0.0
    diagnostics: SolveDiagnostics | None = field(default=None, compare=False, repr=False)

    @classmethod
    def failed(cls, P: float, alpha: float, diagnostics: SolveDiagnostics | None = None) -> EffectiveSample:
        nan = float("nan")
        d = diagnostics or SolveDiagnostics()
        return cls(P, alpha, nan, nan, nan, nan, nan, nan, False, d.iterations, d.final_residual_norm, d)


def cold_start(prob: CellProblem) -> CellSolution:
    """``U = 0``, ``M = 1`` and the ergodic constant that is exact for a flat potential."""
    grid = prob.grid
    Hbar = 0.5 * prob.P**2 - quadrature(grid, prob.v) - float(eval_coupling(prob.potential, 1.0, prob.alpha))
    return CellSolution(np.zeros(grid.N), np.ones(grid.N), Hbar)


def solve_cell(prob: CellProblem, warm_start: CellSolution | None = None) -> CellSolution:
    N = prob.grid.N
    x0 = (warm_start or cold_start(prob)).pack()
    try:
        x, diag = gauss_newton(
            lambda X: assemble_residual(prob, X),
            lambda X: assemble_jacobian(prob, X),
            x0,
            prob.options,
            density=slice(N, 2 * N),
            noise_floor=lambda X: residual_noise_floor(prob, X),
        )
    except StagnationError as exc:
        raise SolverError(str(exc), exc.diagnostics) from exc
    if not diag.converged:
        raise SolverError(
            f"cell solve at P={prob.P}, alpha={prob.alpha} stopped after {diag.iterations} "
            f"iterations with |F| = {diag.final_residual_norm:.3e}",
            diag,
        )
    U, M, Hbar = unpack(x, N)
    return CellSolution(U.copy(), M.copy(), Hbar, diag.final_residual_norm, diag.iterations, diag)


def effective_drift(grid: TorusGrid, cell: CellSolution, P: float) -> float:
    return quadrature(grid, (centered_gradient(grid, cell.U) + P) * cell.M)


def upwind_drift(grid: TorusGrid, cell: CellSolution, P: float) -> float:
    """Drift built from the same one-sided slopes as the Godunov Hamiltonian.

    This is the drift that the discrete linearized system actually sees: the
    linear solve returns exactly ``c = upwind_drift - int coupling_dm mtilde m``.
    It differs from :func:`effective_drift` by O(h).
    """
    s = face_slopes(grid, cell.U, P)
    return quadrature(grid, cell.M * (np.maximum(np.roll(s, 1), 0.0) + np.minimum(s, 0.0)))


def solve_linearized(prob: CellProblem, cell: CellSolution) -> LinearizedSolution:
    A, rhs = assemble_linearized(prob, cell)
    z = solve_linear_lsq(A, rhs)
    Ut, Mt, c = unpack(z, prob.grid.N)
    return LinearizedSolution(Ut.copy(), Mt.copy(), c, float(np.linalg.norm(A @ z - rhs)))


def _coupling_integral(prob: CellProblem, cell: CellSolution, lin: LinearizedSolution) -> float:
    """Signed ``int alpha V_m(y, alpha m) mtilde m``."""
    dm = eval_coupling_dm(prob.potential, cell.M, prob.alpha)
    return quadrature(prob.grid, np.broadcast_to(dm, cell.M.shape) * lin.Mtilde * cell.M)


def coupling_residual(prob: CellProblem, cell: CellSolution, lin: LinearizedSolution) -> float:
    return abs(_coupling_integral(prob, cell, lin))


def structure_discrepancy(
    prob: CellProblem,
    cell: CellSolution,
    lin: LinearizedSolution,
    bbar: float | None = None,
) -> tuple[float, float]:
    """Return ``(E, relation_error)``."""
    if bbar is None:
        bbar = effective_drift(prob.grid, cell, prob.P)
    E = abs(lin.c - bbar)
    return E, abs(lin.c - bbar + _coupling_integral(prob, cell, lin))


def _shifted_solves(prob: CellProblem, delta: float, base: CellSolution | None):
    if not delta > 0:
        raise ValueError("finite-difference step must be positive")
    if base is None:
        base = solve_cell(prob)
    plus = solve_cell(prob.with_params(P=prob.P + delta), warm_start=base)
    minus = solve_cell(prob.with_params(P=prob.P - delta), warm_start=base)
    return plus, minus


def fd_dHdP(prob: CellProblem, delta: float = 1e-3, base: CellSolution | None = None) -> float:
    """Central difference of Hbar in P (two extra cell solves, warm-started from ``base``)."""
    plus, minus = _shifted_solves(prob, delta, base)
    return (plus.Hbar - minus.Hbar) / (2.0 * delta)


def fd_norm_derivative(prob: CellProblem, delta: float = 1e-3, base: CellSolution | None = None) -> float:
    """Central difference in P of ``int m^(q+1)`` (power coupling only)."""
    if prob.potential.kind != "power":
        raise ValueError("the norm derivative is defined for the power coupling only")
    q = prob.potential.q
    plus, minus = _shifted_solves(prob, delta, base)
    grid = prob.grid
    return (quadrature(grid, plus.M ** (q + 1)) - quadrature(grid, minus.M ** (q + 1))) / (2.0 * delta)


def norm_derivative_gradient(prob: CellProblem, cell: CellSolution, bbar: float, norm_derivative: float) -> float:
    """``dHbar/dP`` predicted from the drift and the derivative of ``int m^(q+1)``."""
    q = prob.potential.q
    return bbar - q / (q + 1.0) * prob.alpha**q * norm_derivative


def energy_identity_gaps(prob: CellProblem, cell: CellSolution, signed: bool = False) -> tuple[float, float]:
    """Gaps in the two integral identities for Hbar, both O(h) on the discrete solution.

    The first pairs the HJB equation with ``m`` and the Fokker-Planck equation
    with ``u``; the second integrates the HJB equation alone. ``signed=True``
    returns ``Hbar - identity`` instead of its absolute value.
    """
    grid, P = prob.grid, prob.P
    du = centered_gradient(grid, cell.U)
    cpl = np.broadcast_to(eval_coupling(prob.potential, cell.M, prob.alpha), cell.M.shape)
    paired = quadrature(grid, 0.5 * (P**2 - du**2) * cell.M - cpl * cell.M - prob.v * cell.M)
    integrated = 0.5 * P**2 + quadrature(grid, 0.5 * du**2 - prob.v - cpl)
    gaps = cell.Hbar - paired, cell.Hbar - integrated
    return gaps if signed else (abs(gaps[0]), abs(gaps[1]))


def evaluate_point(prob: CellProblem, warm_start: CellSolution | None = None) -> tuple[EffectiveSample, CellSolution]:
    """Solve the cell and linearized systems at one ``(P, alpha)`` and collect every effective quantity."""
    cell = solve_cell(prob, warm_start)
    bbar = effective_drift(prob.grid, cell, prob.P)
    lin = solve_linearized(prob, cell)
    R = coupling_residual(prob, cell, lin)
    E, rel = structure_discrepancy(prob, cell, lin, bbar)
    sample = EffectiveSample(
        prob.P, prob.alpha, cell.Hbar, bbar, lin.c, R, E, rel,
        True, cell.iterations, cell.residual_norm, cell.diagnostics,
    )
    return sample, cell


__all__ = [
    "EffectiveSample",
    "SolverError",
    "cold_start",
    "coupling_residual",
    "effective_drift",
    "upwind_drift",
    "energy_identity_gaps",
    "evaluate_point",
    "fd_dHdP",
    "fd_norm_derivative",
    "norm_derivative_gradient",
    "pack",
    "solve_cell",
    "solve_linearized",
    "structure_discrepancy",
]
