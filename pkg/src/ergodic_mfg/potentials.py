"""
Potential families ``V(y, m) = v(y) + coupling(m)``.

Two couplings are supported, both evaluated jointly in the density scale
``alpha`` so one assembly path serves every case:

* ``power``: ``(alpha m)^q``
* ``log``:   ``log(alpha m)``

The periodic part defaults to ``v(y) = A (1 + (sin 2 pi y + cos 4 pi y) / 2)``,
which is nonnegative for every ``A >= 0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .torus_grid import TorusGrid

Kind = Literal["power", "log"]


class PotentialDomainError(ValueError):
    """Coupling evaluated outside its domain (e.g. ``log`` of a nonpositive density)."""


@dataclass(frozen=True)
class PotentialSpec:
    kind: Kind = "power"
    q: float = 1.0
    amplitude: float = 100.0
    v_override: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("power", "log"):
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.kind == "power" and not self.q > 0:
            raise ValueError(f"power coupling requires q > 0, got {self.q}")
        if self.amplitude < 0:
            raise ValueError(f"amplitude must be nonnegative, got {self.amplitude}")
        if self.v_override is not None:
            object.__setattr__(self, "v_override", tuple(float(x) for x in self.v_override))

    def check_alpha(self, alpha: float) -> None:
        if self.kind == "log" and not alpha > 0:
            raise PotentialDomainError(f"log potential requires alpha > 0, got {alpha}")
        if self.kind == "power" and alpha < 0:
            raise PotentialDomainError(f"power potential requires alpha >= 0, got {alpha}")


def _analytic_v(amplitude: float, y: ArrayLike) -> NDArray[np.float64]:
    y = np.asarray(y, dtype=float)
    return amplitude * (1.0 + 0.5 * (np.sin(2 * np.pi * y) + np.cos(4 * np.pi * y)))


def eval_v(spec: PotentialSpec, y: ArrayLike) -> NDArray[np.float64] | float:
    """Periodic potential at ``y``; tabulated overrides are read at the nearest node."""
    if spec.v_override is None:
        out = _analytic_v(spec.amplitude, y)
    else:
        table = np.asarray(spec.v_override)
        n = len(table)
        idx = np.rint(np.asarray(y, dtype=float) * n).astype(int) % n
        out = table[idx]
    return float(out) if np.ndim(out) == 0 else out


def sample_v(spec: PotentialSpec, grid: TorusGrid) -> NDArray[np.float64]:
    if spec.v_override is not None and len(spec.v_override) != grid.N:
        raise ValueError(
            f"tabulated potential has {len(spec.v_override)} values, grid has {grid.N} nodes"
        )
    return np.asarray(eval_v(spec, grid.nodes), dtype=float)


def eval_coupling(spec: PotentialSpec, m: ArrayLike, alpha: float) -> NDArray[np.float64] | float:
    m = np.asarray(m, dtype=float)
    if spec.kind == "power":
        if alpha < 0:
            raise PotentialDomainError(f"power potential requires alpha >= 0, got {alpha}")
        out = (alpha * m) ** spec.q
    else:
        if not alpha > 0:
            raise PotentialDomainError(f"log potential requires alpha > 0, got {alpha}")
        if np.any(m <= 0):
            raise PotentialDomainError("log potential requires a strictly positive density")
        out = np.log(alpha * m)
    return float(out) if out.ndim == 0 else out


def eval_coupling_dm(spec: PotentialSpec, m: ArrayLike, alpha: float) -> NDArray[np.float64] | float:
    """Derivative of :func:`eval_coupling` in ``m``, i.e. ``alpha * V_m(y, alpha m)``."""
    m = np.asarray(m, dtype=float)
    if spec.kind == "power":
        q = spec.q
        if q < 1 and np.any(m <= 0):
            raise PotentialDomainError(f"m^{q - 1} is singular at m <= 0")
        out = q * alpha**q * m ** (q - 1.0)
    else:
        if np.any(m <= 0):
            raise PotentialDomainError("log potential requires a strictly positive density")
        out = 1.0 / m
    return float(out) if out.ndim == 0 else out

