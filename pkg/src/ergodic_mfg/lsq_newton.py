"""
Damped Gauss-Newton iteration for overdetermined (possibly inconsistent)
nonlinear systems ``F(x) = 0`` with ``F: R^n -> R^m``, ``m >= n``.

Each step solves the linear least-squares problem ``min |J dx + F|`` with a
column-pivoted QR factorization, then backtracks on the merit ``1/2 |F|^2``
with an Armijo test. An optional index set of "density" entries is kept above
a positivity floor during the line search.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse
from numpy.typing import NDArray

logger = logging.getLogger(__name__)

RANK_THRESHOLD = 1e-12
MIN_STEP_LENGTH = 1e-14


class RankDeficientError(np.linalg.LinAlgError):
    pass


class StagnationError(RuntimeError):
    """Line search could not find an acceptable step; carries the last iterate."""

    def __init__(self, message: str, x: NDArray, diagnostics: SolveDiagnostics):
        super().__init__(message)
        self.x = x
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class SolverOptions:
    tol_residual: float = 1e-10
    tol_step: float = 1e-12
    max_iterations: int = 100
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    min_density: float = 1e-12

    def __post_init__(self) -> None:
        if not self.tol_residual > 0:
            raise ValueError("tol_residual must be positive")
        if not self.tol_step > 0:
            raise ValueError("tol_step must be positive")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 0:
            raise ValueError("max_iterations must be a nonnegative integer")
        if not 0 < self.armijo_c < 1:
            raise ValueError("armijo_c must lie in (0, 1)")
        if not 0 < self.backtrack_factor < 1:
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if not self.min_density > 0:
            raise ValueError("min_density must be positive")


@dataclass
class SolveDiagnostics:
    iterations: int = 0
    final_residual_norm: float = float("inf")
    converged: bool = False
    step_history: list[float] = field(default_factory=list)


def solve_linear_lsq(A, b: NDArray) -> NDArray[np.float64]:
    """Least-squares solution of ``A x ~ b`` for a tall, full-column-rank ``A``.

    Uses a column-pivoted Householder QR (never the normal equations). Sparse
    input is densified first.
    """
    if scipy.sparse.issparse(A):
        A = A.toarray()
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    if m < n:
        raise ValueError(f"expected a tall system, got shape {A.shape}")
    if b.shape != (m,):
        raise ValueError(f"right-hand side has shape {b.shape}, expected ({m},)")

    # b @ Q gives Q^T b without forming Q
    qtb, R, perm = scipy.linalg.qr_multiply(A, b[None, :], mode="right", pivoting=True)
    diag = np.abs(np.diag(R))
    if n and (diag[0] == 0 or diag[-1] < RANK_THRESHOLD * diag[0]):
        raise RankDeficientError(
            f"matrix is numerically rank deficient (|R_nn|/|R_11| = {diag[-1] / max(diag[0], 1e-300):.3e})"
        )
    z = scipy.linalg.solve_triangular(R, qtb[0])
    x = np.empty(n)
    x[perm] = z
    return x


def gauss_newton(
    residual: Callable[[NDArray], NDArray],
    jacobian: Callable[[NDArray], object],
    x0: NDArray,
    opts: SolverOptions | None = None,
    density: slice | None = None,
    noise_floor: Callable[[NDArray], float] | None = None,
) -> tuple[NDArray[np.float64], SolveDiagnostics]:
    """Minimize ``1/2 |F(x)|^2`` by damped Gauss-Newton steps.

    ``density`` selects the entries of ``x`` that must stay above
    ``opts.min_density``; the step length is cut until they do.

    ``noise_floor(x)``, if given, bounds the rounding error in evaluating
    ``F(x)``. When the iteration stalls (tiny step, failed line search or
    iteration cap) with ``|F|_inf`` below that bound, the result is reported
    as converged: the residual cannot be resolved any further.
    """
    opts = opts or SolverOptions()
    x = np.array(x0, dtype=float)
    F = np.asarray(residual(x), dtype=float)
    diag = SolveDiagnostics(final_residual_norm=float(np.max(np.abs(F), initial=0.0)))

    def stalled(x: NDArray) -> tuple[NDArray, SolveDiagnostics]:
        if noise_floor is not None and diag.final_residual_norm <= noise_floor(x):
            diag.converged = True
        return x, diag

    while True:
        if diag.final_residual_norm <= opts.tol_residual:
            diag.converged = True
            return x, diag
        if diag.iterations >= opts.max_iterations:
            logger.debug("gauss_newton: max_iterations reached, |F| = %.3e", diag.final_residual_norm)
            return stalled(x)

        J = jacobian(x)
        dx = solve_linear_lsq(J, -F)
        merit = 0.5 * float(F @ F)
        slope = float(F @ (J @ dx))  # directional derivative of the merit along dx

        t = 1.0
        while True:
            if t < MIN_STEP_LENGTH:
                if noise_floor is not None and diag.final_residual_norm <= noise_floor(x):
                    return stalled(x)
                raise StagnationError(
                    f"line search failed at iteration {diag.iterations}, |F| = {diag.final_residual_norm:.3e}",
                    x,
                    diag,
                )
            x_new = x + t * dx
            if density is not None and np.min(x_new[density]) <= opts.min_density:
                t *= opts.backtrack_factor
                continue
            try:
                with np.errstate(all="raise"):
                    F_new = np.asarray(residual(x_new), dtype=float)
            except (ValueError, FloatingPointError, ArithmeticError):
                t *= opts.backtrack_factor
                continue
            if not np.all(np.isfinite(F_new)):
                t *= opts.backtrack_factor
                continue
            if 0.5 * float(F_new @ F_new) <= merit + opts.armijo_c * t * slope:
                break
            t *= opts.backtrack_factor

        step = float(np.max(np.abs(t * dx), initial=0.0))
        x, F = x_new, F_new
        diag.iterations += 1
        diag.step_history.append(step)
        diag.final_residual_norm = float(np.max(np.abs(F), initial=0.0))
        if diag.final_residual_norm <= opts.tol_residual:
            diag.converged = True
            return x, diag
        if step <= opts.tol_step:
            return stalled(x)
