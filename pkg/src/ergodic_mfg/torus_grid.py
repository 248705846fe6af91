"""
Uniform periodic grid on the unit torus and the finite-difference operators
built on it.

Grid functions are plain 1-D ``numpy`` arrays of length ``N``; node ``i`` sits
at ``y_i = i / N``. All index arithmetic is periodic.

The HJB part of the cell system uses the Godunov numerical Hamiltonian

    g(p-, p+; P) = 1/2 [ max(p- + P, 0)^2 + min(p+ + P, 0)^2 ],

which is monotone and consistent with 1/2 |u_y + P|^2. Centered first
differences only appear inside quadratures (diagnostics), never in the scheme.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.typing import NDArray

MIN_NODES = 8


class InvalidGridError(ValueError):
    pass


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid with ``N`` nodes on [0, 1) with periodic wrap-around."""

    N: int

    def __post_init__(self) -> None:
        if int(self.N) != self.N or self.N < MIN_NODES:
            raise InvalidGridError(f"grid needs an integer N >= {MIN_NODES}, got {self.N!r}")

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @cached_property
    def nodes(self) -> NDArray[np.float64]:
        return np.arange(self.N) / self.N

    def check(self, f: NDArray) -> NDArray[np.float64]:
        f = np.asarray(f, dtype=float)
        if f.shape != (self.N,):
            raise ValueError(f"grid function has shape {f.shape}, expected ({self.N},)")
        return f


def build_grid(N: int) -> TorusGrid:
    return TorusGrid(N)


def laplacian(grid: TorusGrid, f: NDArray) -> NDArray[np.float64]:
    f = grid.check(f)
    return (np.roll(f, -1) - 2.0 * f + np.roll(f, 1)) / grid.h**2


def centered_gradient(grid: TorusGrid, f: NDArray) -> NDArray[np.float64]:
    f = grid.check(f)
    return (np.roll(f, -1) - np.roll(f, 1)) / (2.0 * grid.h)


def face_slopes(grid: TorusGrid, U: NDArray, P: float) -> NDArray[np.float64]:
    """Shifted slopes ``s_{i+1/2} = (U_{i+1} - U_i)/h + P`` on the right face of each node."""
    U = grid.check(U)
    return (np.roll(U, -1) - U) / grid.h + P


def godunov_hamiltonian(grid: TorusGrid, U: NDArray, P: float) -> NDArray[np.float64]:
    s_right = face_slopes(grid, U, P)
    s_left = np.roll(s_right, 1)
    return 0.5 * (np.maximum(s_left, 0.0) ** 2 + np.minimum(s_right, 0.0) ** 2)


def quadrature(grid: TorusGrid, f: NDArray) -> float:
    """Trapezoid rule; on a uniform periodic grid it reduces to ``h * sum(f)``."""
    f = grid.check(f)
    return float(grid.h * np.sum(f))
