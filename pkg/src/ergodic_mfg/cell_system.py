"""
Discrete ergodic cell system and its linearization in ``P``.

Unknowns are packed as ``X = (U, M, Hbar)`` of length ``2N + 1``. The residual
has ``2N + 2`` rows::

    rows 0..N-1     HJB_i = -lap(U)_i + g_i(U; P) - v_i - coupling(M_i, alpha) - Hbar
    rows N..2N-1    FP_i  = -lap(M)_i - div_h(M; U, P)_i
    row  2N         h * sum(U)
    row  2N+1       h * sum(M) - 1

The transport term uses the flux through the right face of node ``i``

    G_{i+1/2} = M_{i+1} max(s_{i+1/2}, 0) + M_i min(s_{i+1/2}, 0),
    s_{i+1/2} = (U_{i+1} - U_i)/h + P,

and ``div_h_i = (G_{i+1/2} - G_{i-1/2}) / h``. With this choice
``div_h(M) = -J_g(U)^T M`` where ``J_g`` is the Jacobian of the Godunov
Hamiltonian, so the Fokker-Planck rows are exactly the adjoint of the
linearized HJB rows. At ``s = 0`` derivatives take the ``max`` branch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray

from .lsq_newton import SolveDiagnostics, SolverOptions
from .potentials import PotentialSpec, eval_coupling, eval_coupling_dm, sample_v
from .torus_grid import TorusGrid, face_slopes, godunov_hamiltonian, laplacian, quadrature


class PreconditionError(ValueError):
    pass


@dataclass
class CellProblem:
    grid: TorusGrid
    potential: PotentialSpec
    P: float
    alpha: float
    options: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self) -> None:
        self.potential.check_alpha(self.alpha)

    @cached_property
    def v(self) -> NDArray[np.float64]:
        return sample_v(self.potential, self.grid)

    @property
    def n_unknowns(self) -> int:
        return 2 * self.grid.N + 1

    def with_params(self, P: float | None = None, alpha: float | None = None) -> CellProblem:
        return CellProblem(
            self.grid,
            self.potential,
            self.P if P is None else P,
            self.alpha if alpha is None else alpha,
            self.options,
        )


@dataclass
class CellSolution:
    U: NDArray[np.float64]
    M: NDArray[np.float64]
    Hbar: float
    residual_norm: float = 0.0
    iterations: int = 0
    diagnostics: SolveDiagnostics | None = field(default=None, compare=False, repr=False)

    def pack(self) -> NDArray[np.float64]:
        return pack(self.U, self.M, self.Hbar)


@dataclass
class LinearizedSolution:
    Utilde: NDArray[np.float64]
    Mtilde: NDArray[np.float64]
    c: float
    lsq_residual: float = 0.0


def pack(U: NDArray, M: NDArray, Hbar: float) -> NDArray[np.float64]:
    return np.concatenate([np.asarray(U, float), np.asarray(M, float), [float(Hbar)]])


def unpack(X: NDArray, N: int) -> tuple[NDArray, NDArray, float]:
    X = np.asarray(X, dtype=float)
    if X.shape != (2 * N + 1,):
        raise ValueError(f"unknown vector has shape {X.shape}, expected ({2 * N + 1},)")
    return X[:N], X[N : 2 * N], float(X[2 * N])


def transport_flux(grid: TorusGrid, M: NDArray, U: NDArray, P: float) -> NDArray[np.float64]:
    """Flux ``G_{i+1/2}`` through the right face of each node."""
    s = face_slopes(grid, U, P)
    return np.roll(M, -1) * np.maximum(s, 0.0) + M * np.minimum(s, 0.0)


def div_h(grid: TorusGrid, M: NDArray, U: NDArray, P: float) -> NDArray[np.float64]:
    G = transport_flux(grid, grid.check(M), U, P)
    return (G - np.roll(G, 1)) / grid.h


def assemble_residual(prob: CellProblem, X: NDArray) -> NDArray[np.float64]:
    grid = prob.grid
    U, M, Hbar = unpack(X, grid.N)
    hjb = (
        -laplacian(grid, U)
        + godunov_hamiltonian(grid, U, prob.P)
        - prob.v
        - eval_coupling(prob.potential, M, prob.alpha)
        - Hbar
    )
    fp = -laplacian(grid, M) - div_h(grid, M, U, prob.P)
    return np.concatenate([hjb, fp, [quadrature(grid, U), quadrature(grid, M) - 1.0]])


def residual_noise_floor(prob: CellProblem, X: NDArray) -> float:
    """Rounding-error bound for evaluating :func:`assemble_residual` at ``X``.

    Each row is a sum of terms whose magnitudes reach ``|U|/h^2``; their
    cancellation leaves an error of a few ulps of the largest term, which can
    exceed a fixed absolute tolerance on fine grids.
    """
    grid = prob.grid
    h = grid.h
    U, M, Hbar = unpack(X, grid.N)
    aU, aM = np.abs(U), np.abs(M)
    near_U = np.roll(aU, -1) + 2.0 * aU + np.roll(aU, 1)
    near_M = np.roll(aM, -1) + 2.0 * aM + np.roll(aM, 1)
    s = np.abs(face_slopes(grid, U, prob.P))
    ds = (aU + np.roll(aU, -1)) / h + abs(prob.P)  # rounding scale of each slope
    s_left, ds_left = np.roll(s, 1), np.roll(ds, 1)
    hjb = near_U / h**2 + s * (s + ds) + s_left * (s_left + ds_left) + np.abs(prob.v) + abs(Hbar)
    hjb += np.abs(eval_coupling(prob.potential, M, prob.alpha))
    flux = (aM + np.roll(aM, -1)) * (s + ds)
    fp = near_M / h**2 + (flux + np.roll(flux, 1)) / h
    return 4.0 * np.finfo(float).eps * float(max(hjb.max(), fp.max()))


def _cyclic(N: int, lower: NDArray, main: NDArray, upper: NDArray) -> sp.csr_matrix:
    """Periodic tridiagonal matrix: row i has ``lower[i]`` at i-1, ``main[i]`` at i, ``upper[i]`` at i+1."""
    i = np.arange(N)
    rows = np.concatenate([i, i, i])
    cols = np.concatenate([(i - 1) % N, i, (i + 1) % N])
    return sp.csr_matrix((np.concatenate([lower, main, upper]), (rows, cols)), shape=(N, N))


def _hamiltonian_jacobian(grid: TorusGrid, U: NDArray, P: float) -> sp.csr_matrix:
    """``d g_i / d U_j`` for the Godunov Hamiltonian."""
    h = grid.h
    s = face_slopes(grid, U, P)
    a = np.maximum(np.roll(s, 1), 0.0)  # left face
    b = np.minimum(s, 0.0)  # right face
    return _cyclic(grid.N, -a / h, (a - b) / h, b / h)


def _laplacian_matrix(grid: TorusGrid) -> sp.csr_matrix:
    N = grid.N
    e = np.full(N, 1.0 / grid.h**2)
    return _cyclic(N, e, -2.0 * e, e)


def _flux_weights(grid: TorusGrid, M: NDArray, U: NDArray, P: float) -> NDArray[np.float64]:
    """``d G_{i+1/2} / d s_{i+1/2}``; ties at ``s = 0`` go to the max branch."""
    s = face_slopes(grid, U, P)
    return np.where(s >= 0.0, np.roll(M, -1), M)


def _blocks(prob: CellProblem, U: NDArray, M: NDArray):
    grid, P = prob.grid, prob.P
    h = grid.h
    lap = _laplacian_matrix(grid)
    Jg = _hamiltonian_jacobian(grid, U, P)
    w = _flux_weights(grid, M, U, P)
    w_left = np.roll(w, 1)
    # d div_h / d U is a weighted second difference
    ddiv_dU = _cyclic(grid.N, w_left / h**2, -(w + w_left) / h**2, w / h**2)
    hjb_U = -lap + Jg
    hjb_M = -sp.diags(np.broadcast_to(eval_coupling_dm(prob.potential, M, prob.alpha), (grid.N,)))
    fp_U = -ddiv_dU
    fp_M = -lap + Jg.T
    return hjb_U, hjb_M, fp_U, fp_M


def assemble_jacobian(prob: CellProblem, X: NDArray) -> sp.csr_matrix:
    """Exact (piecewise) Jacobian of :func:`assemble_residual`, shape ``(2N+2, 2N+1)``."""
    grid = prob.grid
    N, h = grid.N, grid.h
    U, M, _ = unpack(X, N)
    hjb_U, hjb_M, fp_U, fp_M = _blocks(prob, U, M)
    col_H = sp.csr_matrix(np.concatenate([-np.ones(N), np.zeros(N + 2)])[:, None])
    mean_row = sp.csr_matrix(np.full((1, N), h))
    body = sp.bmat([[hjb_U, hjb_M], [fp_U, fp_M], [mean_row, None], [None, mean_row]])
    return sp.hstack([body, col_H], format="csr")


def residual_dP(prob: CellProblem, X: NDArray) -> NDArray[np.float64]:
    """Partial derivative of the residual in ``P`` at fixed ``X``."""
    grid = prob.grid
    U, M, _ = unpack(X, grid.N)
    s = face_slopes(grid, U, prob.P)
    hjb = np.maximum(np.roll(s, 1), 0.0) + np.minimum(s, 0.0)
    w = _flux_weights(grid, M, U, prob.P)
    fp = -(w - np.roll(w, 1)) / grid.h
    return np.concatenate([hjb, fp, [0.0, 0.0]])


def check_cell(prob: CellProblem, cell: CellSolution, tol: float = 1e-6) -> None:
    grid = prob.grid
    if np.shape(cell.U) != (grid.N,) or np.shape(cell.M) != (grid.N,):
        raise PreconditionError("cell solution does not match the grid")
    if np.min(cell.M) <= 0:
        raise PreconditionError("cell density must be strictly positive")
    if abs(quadrature(grid, cell.U)) > tol:
        raise PreconditionError("cell corrector must have zero mean")
    if abs(quadrature(grid, cell.M) - 1.0) > tol:
        raise PreconditionError("cell density must have unit mass")


def assemble_linearized(prob: CellProblem, cell: CellSolution) -> tuple[sp.csr_matrix, NDArray]:
    """Linear system for ``(Utilde, Mtilde, c)``, the ``P``-derivative of the cell solution.

    The matrix is the cell Jacobian at the converged solution, with the upwind
    branches frozen there; the Hbar column carries the unknown ``c = dHbar/dP``.
    """
    check_cell(prob, cell)
    X = cell.pack()
    return assemble_jacobian(prob, X), -residual_dP(prob, X)
