"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the verdict lines are
repeated in the terminal summary under "acceptance criteria". The full
11x11 sweeps at N=400 take a few minutes on one core.
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from ergodic_mfg.cell_system import (
    CellProblem,
    assemble_jacobian,
    assemble_residual,
    div_h,
)
from ergodic_mfg.effective import (
    energy_identity_gaps,
    evaluate_point,
    fd_dHdP,
    fd_norm_derivative,
    norm_derivative_gradient,
    solve_cell,
    solve_linearized,
    upwind_drift,
)
from ergodic_mfg.potentials import PotentialSpec, sample_v
from ergodic_mfg.sweep import (
    SweepSpec,
    asymptotic_slice,
    coercivity_constant,
    refinement_study,
    run_sweep,
)
from ergodic_mfg.torus_grid import build_grid, quadrature

POWER_Q1 = PotentialSpec(q=1.0, amplitude=100.0)
POWER_Q2 = PotentialSpec(q=2.0, amplitude=100.0)
LOG = PotentialSpec(kind="log", amplitude=100.0)


@pytest.fixture(scope="module")
def power_sweep_warm():
    spec = SweepSpec((-10.0, 10.0, 11), (0.0, 20.0, 11), 400, POWER_Q1)
    return run_sweep(spec)


@pytest.fixture(scope="module")
def log_sweep():
    return run_sweep(SweepSpec((-10.0, 10.0, 11), (1.0, 20.0, 11), 400, LOG))


def _audit(report, name):
    return next(a for a in report.audits if a.name == name)


def test_criterion_01_flat_potential_exactness(criterion_log):
    flat = PotentialSpec(q=1.0, amplitude=0.0)
    grid = build_grid(64)
    t0 = time.perf_counter()
    worst = dict(H=0.0, U=0.0, M=0.0, b=0.0, R=0.0, c=0.0)
    for P in (-2.0, 0.0, 3.0):
        for alpha in (0.0, 1.0, 4.0):
            sample, cell = evaluate_point(CellProblem(grid, flat, P, alpha))
            worst["H"] = max(worst["H"], abs(sample.Hbar - (P**2 / 2 - alpha)))
            worst["U"] = max(worst["U"], np.max(np.abs(cell.U)))
            worst["M"] = max(worst["M"], np.max(np.abs(cell.M - 1)))
            worst["b"] = max(worst["b"], abs(sample.bbar - P))
            worst["R"] = max(worst["R"], sample.R)
            worst["c"] = max(worst["c"], abs(sample.dH_dP - P))
    elapsed = time.perf_counter() - t0
    ok = (
        worst["H"] <= 1e-8 and worst["U"] <= 1e-9 and worst["M"] <= 1e-9
        and worst["b"] <= 1e-9 and worst["R"] <= 1e-10 and worst["c"] <= 1e-8 and elapsed <= 1.0
    )
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f", {elapsed:.2f} s"
    criterion_log("criterion 1 flat exactness", ok, detail)
    assert ok, detail


def test_criterion_02_log_structure(criterion_log):
    t0 = time.perf_counter()
    report = run_sweep(SweepSpec((-10.0, 10.0, 5), (1.0, 20.0, 5), 400, LOG), audit=False)
    h = 1.0 / 400
    P = np.asarray(report.P_values)[:, None]
    R = report.table("R")
    ratio = report.table("E") / (h * (1.0 + np.abs(P)))
    fit = refinement_study((5.0, 4.0), LOG, [50, 100, 200, 400], "E")
    elapsed = time.perf_counter() - t0
    r_ok = bool(np.all(R <= 1e-10))
    e_ok = bool(np.all(ratio <= 0.5))
    order_ok = 0.8 <= fit.order <= 1.2
    ok = r_ok and e_ok and order_ok and elapsed <= 120.0
    i, j = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
    detail = (
        f"max R {np.max(R):.1e}; max E/(h(1+|P|)) {ratio[i, j]:.3f} at P={report.P_values[i]:g} "
        f"(need <= 0.5); E order {fit.order:.3f}; {elapsed:.0f} s"
    )
    criterion_log("criterion 2 log structure", ok, detail)
    assert ok, detail


R_FLOOR = 1e-8


def _r_refinement(potential, P, alpha):
    fit = refinement_study((P, alpha), potential, [200, 400, 800], "R")
    r400, r800 = fit.points[-2][1], fit.points[-1][1]
    change = abs(r800 - r400) / r800 if r800 > 0 else math.inf
    return r400, r800, change


def test_criterion_03_power_structure_broken_at_zero_momentum(criterion_log):
    parts, ok = [], True
    for potential in (POWER_Q1, POWER_Q2):
        r400, r800, change = _r_refinement(potential, 0.0, 10.0)
        good = r800 > R_FLOOR and r400 > R_FLOOR and change <= 0.05
        ok &= good
        parts.append(f"q={potential.q:g}: R(400)={r400:.2e}, R(800)={r800:.2e}, change {change:.2e}")
    criterion_log("criterion 3 power residual at (P, alpha)=(0, 10)", ok, "; ".join(parts))
    assert ok, "; ".join(parts)


def test_criterion_03_supplementary_nonzero_momentum(criterion_log):
    # R vanishes at P = 0 by the reflection symmetry of v; away from it the residual is a stable positive limit
    parts, ok = [], True
    for potential in (POWER_Q1, POWER_Q2):
        r400, r800, change = _r_refinement(potential, 5.0, 10.0)
        good = r800 > R_FLOOR and change <= 0.05
        ok &= good
        parts.append(f"q={potential.q:g}: R(400)={r400:.4f}, R(800)={r800:.4f}, change {change:.2%}")
    criterion_log("criterion 3 supplementary at (P, alpha)=(5, 10)", ok, "; ".join(parts))
    assert ok


def test_criterion_04_relation_order_one(criterion_log):
    orders = {}
    for potential in (POWER_Q1, POWER_Q2):
        fit = refinement_study((5.0, 10.0), potential, [50, 100, 200, 400], "relation_error")
        orders[potential.q] = fit.order
    ok = all(0.8 <= o <= 1.2 for o in orders.values())
    detail = ", ".join(f"q={q:g} order {o:.3f}" for q, o in orders.items())
    criterion_log("criterion 4 relation error order", ok, detail)
    assert ok, detail


def test_criterion_05_bounds_and_monotonicity(power_sweep_warm, criterion_log):
    rq = coercivity_constant(1.0)
    int_v = quadrature(build_grid(400), sample_v(POWER_Q1, build_grid(400)))
    a, b = _audit(power_sweep_warm, "alpha_monotonicity"), _audit(power_sweep_warm, "bounds")
    ok = a.passed and b.passed and abs(rq - (3 + math.sqrt(5)) / 2) <= 1e-11
    detail = (
        f"alpha monotonicity worst {a.worst_violation:.1e}; bounds worst {b.worst_violation:.1e}; "
        f"R_q {rq:.12f}; int v {int_v:.12f}; failed points {power_sweep_warm.failed_count}"
    )
    criterion_log("criterion 5 bounds and alpha monotonicity", ok, detail)
    assert ok, detail


def test_criterion_06_log_convexity_and_separation(log_sweep, criterion_log):
    grid = build_grid(400)
    cap = math.log(quadrature(grid, np.exp(-sample_v(LOG, grid))))
    P = np.asarray(log_sweep.P_values)[:, None]
    alpha = np.asarray(log_sweep.alpha_values)[None, :]
    excess = log_sweep.table("Hbar") + np.log(alpha) - (P**2 / 2 + cap + 1e-6)
    c, f = _audit(log_sweep, "convexity_in_P"), _audit(log_sweep, "alpha_separation")
    ok = c.passed and f.passed and bool(np.all(excess <= 0))
    detail = (
        f"convexity worst {c.worst_violation:.1e}; separation worst {f.worst_violation:.1e}; "
        f"variational bound max excess {np.max(excess):.2e}"
    )
    criterion_log("criterion 6 log convexity and separation", ok, detail)
    assert ok, detail


def test_criterion_07_asymptotics(criterion_log):
    rows = asymptotic_slice(10.0, [10.0, 15.0, 20.0, 25.0, 30.0], POWER_Q1, 400)
    gaps = [abs(r.Hbar_ratio - 0.5) for r in rows]
    drift = [r.drift_ratio for r in rows]
    ok = (
        all(x > y for x, y in zip(gaps, gaps[1:]))
        and all(x > y for x, y in zip(drift, drift[1:]))
        and gaps[-1] <= 0.35
    )
    detail = "|H/P^2-1/2| " + ", ".join(f"{g:.3f}" for g in gaps) + "; |b-P|/P " + ", ".join(f"{d:.4f}" for d in drift)
    criterion_log("criterion 7 large-P asymptotics", ok, detail)
    assert ok, detail


@pytest.fixture(scope="module")
def gradient_grid():
    """3x3 (P, alpha) grid with every quantity the gradient cross-check needs."""
    rows = []
    grid = build_grid(400)
    for P in (-10.0, 0.0, 10.0):
        for alpha in (0.0, 10.0, 20.0):
            prob = CellProblem(grid, POWER_Q2, P, alpha)
            sample, cell = evaluate_point(prob)
            lin = solve_linearized(prob, cell)
            fd = fd_dHdP(prob, 1e-3, cell)
            nd = fd_norm_derivative(prob, 1e-3, cell)
            rows.append((prob, sample, cell, lin, fd, nd))
    return rows


def test_criterion_08_gradient_cross_check(gradient_grid, criterion_log):
    fd_gap = max(abs(s.dH_dP - fd) for _, s, _, _, fd, _ in gradient_grid)
    # norm-derivative form: c - bbar = -(q/(q+1)) alpha^q d/dP int m^(q+1)
    form_gap = max(
        abs((s.dH_dP - s.bbar) - (norm_derivative_gradient(p, c, s.bbar, nd) - s.bbar))
        for p, s, c, _, _, nd in gradient_grid
    )
    ok = fd_gap <= 1e-3 and form_gap <= 1e-3
    detail = f"max |c - fd| {fd_gap:.1e}; max norm-derivative form vs c - bbar {form_gap:.2e}"
    criterion_log("criterion 8 gradient cross-check", ok, detail)
    assert ok, detail


def test_criterion_08_supplementary_consistent_drift(gradient_grid, criterion_log):
    # the same identity with the drift taken from the upwind slopes the scheme actually uses
    gap = max(
        abs(lin.c - norm_derivative_gradient(p, c, upwind_drift(p.grid, c, p.P), nd))
        for p, _, c, lin, _, nd in gradient_grid
    )
    ok = gap <= 1e-3
    criterion_log("criterion 8 supplementary upwind drift", ok, f"max gap {gap:.2e}")
    assert ok


def _loop_hamiltonian_jacobian(N, U, P):
    h = 1.0 / N
    J = np.zeros((N, N))
    for i in range(N):
        a = max((U[i] - U[i - 1]) / h + P, 0.0)
        b = min((U[(i + 1) % N] - U[i]) / h + P, 0.0)
        J[i, i - 1] -= a / h
        J[i, i] += (a - b) / h
        J[i, (i + 1) % N] += b / h
    return J


def test_criterion_09_discrete_invariants(criterion_log):
    rng = np.random.default_rng(2024)
    worst = dict(mass=0.0, duality=0.0, jac=0.0)
    c_growth = []
    n_problems = 0
    for k in range(50):
        kind = "log" if k % 3 == 0 else "power"
        potential = PotentialSpec(kind=kind, q=float(rng.uniform(1.0, 3.0)), amplitude=float(rng.uniform(0.0, 100.0)))
        N = int(rng.choice([24, 32, 48]))
        P = float(rng.uniform(-8.0, 8.0))
        alpha = float(rng.uniform(0.5 if kind == "log" else 0.0, 15.0))
        prob = CellProblem(build_grid(N), potential, P, alpha)
        cell = solve_cell(prob)
        n_problems += 1
        grid, X = prob.grid, cell.pack()

        d = div_h(grid, cell.M, cell.U, P)
        worst["mass"] = max(worst["mass"], abs(d.sum()) / max(1.0, np.max(np.abs(d))))
        Jg = _loop_hamiltonian_jacobian(N, cell.U, P)
        worst["duality"] = max(worst["duality"], np.max(np.abs(d + Jg.T @ cell.M)) / max(1.0, np.max(np.abs(d))))

        J = assemble_jacobian(prob, X)
        for _ in range(3):
            e = rng.normal(size=X.size)
            e /= np.linalg.norm(e)
            fd = (assemble_residual(prob, X + 1e-6 * e) - assemble_residual(prob, X - 1e-6 * e)) / 2e-6
            worst["jac"] = max(worst["jac"], float(np.linalg.norm(fd - J @ e)))

        # signed C_N = gap / h settles under refinement: the last change is a fraction of the one before
        levels = (N, 2 * N, 4 * N, 8 * N)
        C = np.array([
            energy_identity_gaps(pr, cell if n == N else solve_cell(pr), signed=True)
            for n in levels
            for pr in [CellProblem(build_grid(n), potential, P, alpha)]
        ]) * np.array(levels)[:, None]
        before, last = np.abs(C[2] - C[1]), np.abs(C[3] - C[2])
        resolved = before > 1e-6
        if resolved.any():
            c_growth.append(float(np.max(last[resolved] / before[resolved])))
    contraction = float(np.max(c_growth))
    ok = (
        n_problems >= 50 and worst["mass"] <= 1e-13 and worst["duality"] <= 1e-13
        and worst["jac"] <= 1e-5 and contraction <= 0.75
    )
    detail = (
        f"{n_problems} problems; mass {worst['mass']:.1e}; duality {worst['duality']:.1e}; "
        f"jacobian {worst['jac']:.1e}; energy-identity C_N contraction max {contraction:.2f}"
    )
    criterion_log("criterion 9 discrete invariants", ok, detail)
    assert ok, detail


def test_criterion_10_warm_cold_equivalence(power_sweep_warm, criterion_log):
    cold = run_sweep(
        SweepSpec((-10.0, 10.0, 11), (0.0, 20.0, 11), 400, POWER_Q1, ordering="independent_cold"), audit=False
    )
    diff = float(np.max(np.abs(power_sweep_warm.table("Hbar") - cold.table("Hbar"))))
    ok = diff <= 1e-8
    criterion_log("criterion 10 warm/cold equivalence", ok, f"max |dHbar| {diff:.1e}")
    assert ok
