"""
Parameter sweeps over ``(P, alpha)``, grid-refinement studies, large-``|P|``
slices and the audit of the qualitative properties of ``Hbar`` and ``bbar``.

Samples are stored with ``P`` as the outer index and ``alpha`` as the inner
one. With ``row_major_warm`` ordering every fixed-``alpha`` row is solved
sequentially in increasing ``P``, each point warm-started from its
predecessor; rows are independent of each other and may run concurrently.
"""

from __future__ import annotations

import logging
import math
import os
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .cell_system import CellProblem, CellSolution
from .effective import EffectiveSample, SolverError, evaluate_point
from .lsq_newton import SolverOptions, StagnationError
from .potentials import PotentialSpec, sample_v
from .torus_grid import build_grid, quadrature

logger = logging.getLogger(__name__)

Ordering = Literal["row_major_warm", "independent_cold"]
Quantity = Literal["E", "relation_error", "R"]

MAX_FAILED_FRACTION = 0.10
AUDIT_RTOL = 1e-6
SEPARATION_TOL = 1e-6
# E <= E_CONSTANT * h * (1 + |P|) is the O(h) test for the log coupling
E_CONSTANT = 0.5
R_FLOOR = 1e-8


class SweepQualityError(RuntimeError):
    def __init__(self, message: str, report: SweepReport):
        super().__init__(message)
        self.report = report


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class SweepSpec:
    P_range: tuple[float, float, int] = (-10.0, 10.0, 51)
    alpha_range: tuple[float, float, int] = (0.0, 20.0, 51)
    grid_N: int = 400
    potential: PotentialSpec = field(default_factory=PotentialSpec)
    options: SolverOptions = field(default_factory=SolverOptions)
    ordering: Ordering = "row_major_warm"

    def __post_init__(self) -> None:
        for name, (lo, hi, count) in (("P", self.P_range), ("alpha", self.alpha_range)):
            if int(count) != count or count < 2:
                raise ValueError(f"{name} range needs an integer count >= 2, got {count}")
            if not hi > lo:
                raise ValueError(f"{name} range must satisfy max > min, got [{lo}, {hi}]")
        if self.potential.kind == "log" and not self.alpha_range[0] > 0:
            raise ValueError("log potential requires alpha_min > 0")
        if self.alpha_range[0] < 0:
            raise ValueError("alpha_min must be nonnegative")
        if self.ordering not in ("row_major_warm", "independent_cold"):
            raise ValueError(f"unknown ordering {self.ordering!r}")
        build_grid(self.grid_N)

    @property
    def P_values(self) -> np.ndarray:
        lo, hi, n = self.P_range
        return np.linspace(lo, hi, int(n))

    @property
    def alpha_values(self) -> np.ndarray:
        lo, hi, n = self.alpha_range
        return np.linspace(lo, hi, int(n))


@dataclass
class AuditResult:
    name: str
    passed: bool
    worst_violation: float
    location: tuple[float, float] | None = None
    note: str = ""


@dataclass
class RefinementFit:
    quantity: str
    order: float | None
    points: list[tuple[int, float]]
    relative_change: float | None = None


@dataclass
class SweepReport:
    samples: list[EffectiveSample]
    P_values: list[float] = field(default_factory=list)
    alpha_values: list[float] = field(default_factory=list)
    grid_N: int | None = None
    audits: list[AuditResult] = field(default_factory=list)
    refinement_fits: list[RefinementFit] = field(default_factory=list)

    def table(self, name: str) -> np.ndarray:
        """Column ``name`` reshaped to ``(len(P_values), len(alpha_values))``."""
        values = np.array([getattr(s, name) for s in self.samples], dtype=float)
        return values.reshape(len(self.P_values), len(self.alpha_values))

    @property
    def failed_count(self) -> int:
        return sum(not s.converged for s in self.samples)


def _solve_point(prob: CellProblem, warm: CellSolution | None):
    try:
        return evaluate_point(prob, warm)
    except (SolverError, StagnationError, np.linalg.LinAlgError) as exc:
        logger.warning("solve failed at P=%g alpha=%g: %s", prob.P, prob.alpha, exc)
        return EffectiveSample.failed(prob.P, prob.alpha, getattr(exc, "diagnostics", None)), None


def run_sweep(spec: SweepSpec, threads: int | None = None, audit: bool = True) -> SweepReport:
    grid = build_grid(spec.grid_N)
    Ps, alphas = spec.P_values, spec.alpha_values
    nP, nA = len(Ps), len(alphas)
    base = CellProblem(grid, spec.potential, float(Ps[0]), float(alphas[0]), spec.options)
    results: list[EffectiveSample | None] = [None] * (nP * nA)

    def row(j: int) -> None:
        warm = None
        for i, P in enumerate(Ps):
            sample, cell = _solve_point(base.with_params(float(P), float(alphas[j])), warm)
            results[i * nA + j] = sample
            if cell is not None:
                warm = cell

    def point(k: int) -> None:
        i, j = divmod(k, nA)
        results[k] = _solve_point(base.with_params(float(Ps[i]), float(alphas[j])), None)[0]

    workers = max(1, threads or os.cpu_count() or 1)
    jobs, task = (range(nA), row) if spec.ordering == "row_major_warm" else (range(nP * nA), point)
    if workers == 1:
        for k in jobs:
            task(k)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(task, jobs))

    report = SweepReport(list(results), [float(p) for p in Ps], [float(a) for a in alphas], spec.grid_N)
    if audit:
        report.audits = property_audit(report, spec.potential, spec.grid_N)
    if report.failed_count > MAX_FAILED_FRACTION * len(report.samples):
        raise SweepQualityError(
            f"{report.failed_count} of {len(report.samples)} sweep points failed to converge", report
        )
    return report


def refinement_study(
    point: tuple[float, float],
    potential: PotentialSpec,
    N_list: Sequence[int],
    quantity: Quantity,
    options: SolverOptions | None = None,
) -> RefinementFit:
    """Track ``quantity`` at one ``(P, alpha)`` over the grids in ``N_list``.

    For ``E`` and ``relation_error`` the returned order is the least-squares
    slope of ``log(value)`` against ``log(h)``. ``R`` does not vanish under
    refinement, so it gets no order; ``relative_change`` holds the relative
    difference of the two finest values instead.
    """
    N_list = [int(n) for n in N_list]
    if len(N_list) < 3 or any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise ValueError("N_list must be strictly increasing with at least 3 entries")
    if quantity not in ("E", "relation_error", "R"):
        raise ValueError(f"unknown refinement quantity {quantity!r}")
    P, alpha = point
    options = options or SolverOptions()
    points = []
    for N in N_list:
        prob = CellProblem(build_grid(N), potential, P, alpha, options)
        sample, _ = _solve_point(prob, None)
        value = getattr(sample, quantity)
        if sample.converged and math.isfinite(value):
            points.append((N, float(value)))
    if len(points) < 3:
        raise InsufficientDataError(f"only {len(points)} converged refinement levels")

    Ns = np.array([n for n, _ in points], dtype=float)
    vals = np.array([v for _, v in points])
    change = abs(vals[-1] - vals[-2]) / abs(vals[-1]) if vals[-1] != 0 else math.inf
    if quantity == "R":
        return RefinementFit(quantity, None, points, change)
    if np.any(vals <= 0):
        raise InsufficientDataError(f"{quantity} vanished on some grid; no order can be fitted")
    order = float(np.polyfit(np.log(1.0 / Ns), np.log(vals), 1)[0])
    return RefinementFit(quantity, order, points, change)


@dataclass
class SliceRow:
    P: float
    Hbar_ratio: float  # Hbar / P^2
    drift_ratio: float  # |bbar - P| / |P|


def asymptotic_slice(
    alpha: float,
    P_list: Sequence[float],
    potential: PotentialSpec,
    N: int,
    options: SolverOptions | None = None,
) -> list[SliceRow]:
    if any(P == 0 for P in P_list):
        raise ValueError("asymptotic slice needs nonzero P values")
    grid = build_grid(N)
    options = options or SolverOptions()
    rows: dict[int, SliceRow] = {}
    warm = None
    for k in sorted(range(len(P_list)), key=lambda k: abs(P_list[k])):
        P = float(P_list[k])
        sample, cell = _solve_point(CellProblem(grid, potential, P, alpha, options), warm)
        warm = cell or warm
        rows[k] = SliceRow(P, sample.Hbar / P**2, abs(sample.bbar - P) / abs(P))
    return [rows[k] for k in range(len(P_list))]


def coercivity_constant(q: float, tol: float = 1e-12) -> float:
    """Root ``R >= 1`` of ``R = 1 + R^(q/(q+1))``, found by bisection."""
    f = lambda R: R - 1.0 - R ** (q / (q + 1.0))  # noqa: E731
    lo, hi = 1.0, 2.0
    while f(hi) < 0:
        hi *= 2.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _tau(value: float) -> float:
    return AUDIT_RTOL * (1.0 + abs(value))


def _result(name: str, excess: np.ndarray, where: list[tuple[float, float]], note: str = "") -> AuditResult:
    """Audit verdict from per-check excesses (positive means violated)."""
    if len(excess) == 0:
        return AuditResult(name, True, 0.0, None, note or "no applicable points")
    k = int(np.argmax(excess))
    worst = float(excess[k])
    return AuditResult(name, worst <= 0.0, max(worst, 0.0), where[k], note)


def property_audit(report: SweepReport, potential: PotentialSpec, grid_N: int | None = None) -> list[AuditResult]:
    """Check the proved qualitative properties against a completed sweep.

    Each check uses the relative tolerance ``1e-6 * (1 + |value|)``. Failed
    sweep points (NaN rows) are skipped.
    """
    N = grid_N or report.grid_N
    if N is None:
        raise ValueError("grid size is needed to audit a sweep")
    grid = build_grid(N)
    Ps = np.asarray(report.P_values)
    alphas = np.asarray(report.alpha_values)
    H = report.table("Hbar")
    b = report.table("bbar")
    E = report.table("E")
    R = report.table("R")
    is_log = potential.kind == "log"
    audits = []

    # (a) Hbar nonincreasing in alpha
    if not is_log:
        ex, at = [], []
        for i, P in enumerate(Ps):
            for j in range(len(alphas) - 1):
                if np.isfinite(H[i, j]) and np.isfinite(H[i, j + 1]):
                    ex.append(H[i, j + 1] - H[i, j] - _tau(H[i, j]))
                    at.append((P, alphas[j + 1]))
        audits.append(_result("alpha_monotonicity", np.array(ex), at))

    # (b) growth bounds
    v = sample_v(potential, grid)
    ex, at = [], []
    if is_log:
        cap = math.log(quadrature(grid, np.exp(-v)))
        for i, P in enumerate(Ps):
            for j, a in enumerate(alphas):
                if np.isfinite(H[i, j]):
                    val = H[i, j] + math.log(a)
                    ex.append(val - (0.5 * P**2 + cap) - _tau(val))
                    at.append((P, a))
        note = "Hbar + log(alpha) <= P^2/2 + log(int exp(-v))"
    else:
        q = potential.q
        Rq = coercivity_constant(q)
        int_v = quadrature(grid, v)
        for i, P in enumerate(Ps):
            for j, a in enumerate(alphas):
                if np.isfinite(H[i, j]):
                    lower = 0.5 * P**2 - (1.0 + Rq) * int_v - Rq * a**q
                    upper = 0.5 * P**2 - a**q
                    tau = _tau(H[i, j])
                    ex.append(max(lower - H[i, j], H[i, j] - upper) - tau)
                    at.append((P, a))
        note = f"R_q = {Rq:.12g}, int v = {int_v:.12g}"
    audits.append(_result("bounds", np.array(ex), at, note))

    # (c) convexity in P (log)
    if is_log:
        ex, at = [], []
        for j, a in enumerate(alphas):
            for i in range(1, len(Ps) - 1):
                d2 = H[i + 1, j] - 2.0 * H[i, j] + H[i - 1, j]
                if np.isfinite(d2):
                    ex.append(-d2 - _tau(H[i, j]))
                    at.append((Ps[i], a))
        audits.append(_result("convexity_in_P", np.array(ex), at))

    # (d) bbar nondecreasing in P
    ex, at = [], []
    for j, a in enumerate(alphas):
        for i in range(len(Ps) - 1):
            d = b[i + 1, j] - b[i, j]
            if np.isfinite(d):
                ex.append(-d - _tau(b[i, j]))
                at.append((Ps[i], a))
    audits.append(_result("drift_monotonicity", np.array(ex), at))

    # (e) structure: gradient = drift up to O(h) (log); residual witness (power)
    if is_log:
        ex, at = [], []
        for i, P in enumerate(Ps):
            for j, a in enumerate(alphas):
                if np.isfinite(E[i, j]):
                    ex.append(E[i, j] - E_CONSTANT * grid.h * (1.0 + abs(P)))
                    at.append((P, a))
        audits.append(_result("structure", np.array(ex), at, f"E <= {E_CONSTANT} h (1 + |P|)"))
    elif np.ptp(v) == 0.0:
        # constant v gives m = 1 and gradient = drift exactly; there is nothing to witness
        audits.append(AuditResult("structure", True, 0.0, None, "not applicable: constant potential"))
    else:
        finite = np.where(np.isfinite(R), R, -np.inf)
        k = np.unravel_index(int(np.argmax(finite)), R.shape)
        r_max = float(finite[k])
        positive = alphas > 0
        valid = R[:, positive][np.isfinite(R[:, positive])]
        r_min = float(valid.min()) if valid.size else float("nan")
        audits.append(
            AuditResult(
                "structure",
                r_max > R_FLOOR,
                max(R_FLOOR - r_max, 0.0),
                (float(Ps[k[0]]), float(alphas[k[1]])),
                f"max R = {r_max:.6g}, min R over alpha > 0 = {r_min:.6g}",
            )
        )

    # (f) alpha separates out of Hbar (log)
    if is_log:
        ex, at = [], []
        for i, P in enumerate(Ps):
            ref = H[i, 0] + math.log(alphas[0])
            for j, a in enumerate(alphas):
                gap = abs(H[i, j] + math.log(a) - ref)
                if np.isfinite(gap):
                    ex.append(gap - SEPARATION_TOL)
                    at.append((P, a))
        audits.append(_result("alpha_separation", np.array(ex), at))

    return audits
