"""
Run configuration and result files.

Configuration documents are flat ``dotted.key = value`` lines (UTF-8, ``#``
starts a comment). Values are Python-style literals: numbers, quoted or bare
strings, and ``[a, b, c]`` lists. Recognised keys::

    potential.kind   power | log            potential.q   potential.A
    grid.N
    sweep.P          [min, max, count]      sweep.alpha   [min, max, count]
    sweep.ordering   warm | cold
    solver.tol_residual  solver.tol_step  solver.max_iterations
    solver.armijo_c  solver.backtrack_factor  solver.min_density
    run.mode  run.out  run.delta  run.N_list  run.P  run.alpha
    run.threads  run.quantity  run.P_list

Samples are written as comma-separated text with one row per ``(P, alpha)``
and floats in shortest round-trip form; a JSON summary with the audit
verdicts and refinement fits sits next to it.
"""

from __future__ import annotations

import ast
import csv
import dataclasses
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .effective import EffectiveSample
from .lsq_newton import SolverOptions
from .potentials import PotentialSpec
from .sweep import AuditResult, RefinementFit, SweepReport, SweepSpec

SAMPLE_COLUMNS = (
    "P", "alpha", "Hbar", "bbar", "dH_dP", "R", "E", "relation_error",
    "converged", "iterations", "residual_norm",
)
MODES = ("solve", "sweep", "refine", "slice", "audit")
ORDERINGS = {
    "warm": "row_major_warm",
    "cold": "independent_cold",
    "row_major_warm": "row_major_warm",
    "independent_cold": "independent_cold",
}
SOLVER_KEYS = {f"solver.{f.name}": f.name for f in dataclasses.fields(SolverOptions)}
KNOWN_KEYS = {
    "potential.kind", "potential.q", "potential.A", "grid.N",
    "sweep.P", "sweep.alpha", "sweep.ordering",
    "run.mode", "run.out", "run.delta", "run.N_list", "run.P", "run.alpha",
    "run.threads", "run.quantity", "run.P_list",
    *SOLVER_KEYS,
}
DEFAULT_P_RANGE = (-10.0, 10.0, 51)
DEFAULT_ALPHA_RANGE = {"power": (0.0, 20.0, 51), "log": (1.0, 20.0, 51)}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    sweep: SweepSpec
    mode: str = "sweep"
    out: str | None = None
    delta: float = 1e-3
    N_list: list[int] = field(default_factory=lambda: [50, 100, 200, 400])
    P: float = 0.0
    alpha: float = 1.0
    threads: int | None = None
    quantity: str | None = None
    P_list: list[float] = field(default_factory=lambda: [10.0, 15.0, 20.0, 25.0, 30.0])

    @property
    def potential(self) -> PotentialSpec:
        return self.sweep.potential

    @property
    def N(self) -> int:
        return self.sweep.grid_N


def parse_document(text: str) -> dict[str, object]:
    """Raw ``key -> value`` mapping of a configuration document."""
    entries: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            entries[key] = ast.literal_eval(value)
        except (ValueError, SyntaxError):
            entries[key] = value
    return entries


def _triple(key: str, value: object) -> tuple[float, float, int]:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ConfigError(f"{key} must be [min, max, count]")
    lo, hi, n = value
    if int(n) != n:
        raise ConfigError(f"{key} count must be an integer")
    return float(lo), float(hi), int(n)


def build_config(entries: dict[str, object]) -> RunConfig:
    """Validate a raw mapping and fill in defaults."""
    unknown = set(entries) - KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r}")
    try:
        kind = str(entries.get("potential.kind", "power"))
        potential = PotentialSpec(
            kind=kind,
            q=float(entries.get("potential.q", 1.0)),
            amplitude=float(entries.get("potential.A", 100.0)),
        )
        options = SolverOptions(**{SOLVER_KEYS[k]: v for k, v in entries.items() if k in SOLVER_KEYS})
        ordering = ORDERINGS.get(str(entries.get("sweep.ordering", "warm")))
        if ordering is None:
            raise ConfigError(f"sweep.ordering must be warm or cold, got {entries['sweep.ordering']!r}")
        P_range = _triple("sweep.P", entries["sweep.P"]) if "sweep.P" in entries else DEFAULT_P_RANGE
        alpha_range = (
            _triple("sweep.alpha", entries["sweep.alpha"])
            if "sweep.alpha" in entries
            else DEFAULT_ALPHA_RANGE[kind]
        )
        sweep = SweepSpec(P_range, alpha_range, int(entries.get("grid.N", 400)), potential, options, ordering)
        mode = str(entries.get("run.mode", "sweep"))
        if mode not in MODES:
            raise ConfigError(f"run.mode must be one of {', '.join(MODES)}, got {mode!r}")
        N_list = entries.get("run.N_list", [50, 100, 200, 400])
        P_list = entries.get("run.P_list", [10.0, 15.0, 20.0, 25.0, 30.0])
        threads = entries.get("run.threads")
        cfg = RunConfig(
            sweep=sweep,
            mode=mode,
            out=None if entries.get("run.out") is None else str(entries["run.out"]),
            delta=float(entries.get("run.delta", 1e-3)),
            N_list=[int(n) for n in N_list],
            P=float(entries.get("run.P", 0.0)),
            alpha=float(entries.get("run.alpha", 1.0)),
            threads=None if threads is None else int(threads),
            quantity=None if entries.get("run.quantity") is None else str(entries["run.quantity"]),
            P_list=[float(p) for p in P_list],
        )
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    if not cfg.delta > 0:
        raise ConfigError("run.delta must be positive")
    if potential.kind == "log" and not cfg.alpha > 0:
        raise ConfigError("log potential requires alpha > 0")
    if cfg.threads is not None and cfg.threads < 1:
        raise ConfigError("run.threads must be at least 1")
    if cfg.quantity is not None and cfg.quantity not in ("E", "relation_error", "R"):
        raise ConfigError(f"run.quantity must be E, relation_error or R, got {cfg.quantity!r}")
    if cfg.out is not None:
        parent = Path(cfg.out).expanduser().resolve().parent
        if not parent.is_dir():
            raise ConfigError(f"output directory {parent} does not exist")
    return cfg


def parse_config(text: str) -> RunConfig:
    return build_config(parse_document(text))


def _fmt(value: object) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_samples(report: SweepReport, path: str | Path, summary: bool = True) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SAMPLE_COLUMNS)
        for s in report.samples:
            writer.writerow([_fmt(_cell(s, c)) for c in SAMPLE_COLUMNS])
    if summary:
        write_summary(report, summary_path(path))


def _cell(sample: EffectiveSample, column: str) -> object:
    value = getattr(sample, column)
    if column == "iterations":
        return int(value)
    if column == "converged":
        return bool(value)
    return float(value)


def summary_path(samples_path: str | Path) -> Path:
    p = Path(samples_path)
    return p.with_name(p.stem + ".summary.json")


def write_summary(report: SweepReport, path: str | Path) -> None:
    doc = {
        "generated": datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"),
        "grid_N": report.grid_N,
        "samples": len(report.samples),
        "failed": report.failed_count,
        "audits": [_jsonable(dataclasses.asdict(a)) for a in report.audits],
        "refinement_fits": [_jsonable(dataclasses.asdict(f)) for f in report.refinement_fits],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "item"):  # numpy scalars
        return _jsonable(obj.item())
    return obj


def read_samples(path: str | Path, grid_N: int | None = None) -> SweepReport:
    """Re-read a samples table; the ``(P, alpha)`` axes are recovered from the rows."""
    samples = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != SAMPLE_COLUMNS:
            raise ValueError(f"{path}: unexpected header {header!r}")
        for row in reader:
            rec = dict(zip(SAMPLE_COLUMNS, row))
            samples.append(
                EffectiveSample(
                    **{c: float(rec[c]) for c in SAMPLE_COLUMNS[:8]},
                    converged=rec["converged"] == "true",
                    iterations=int(rec["iterations"]),
                    residual_norm=float(rec["residual_norm"]),
                )
            )
    P_values = list(dict.fromkeys(s.P for s in samples))
    alpha_values = list(dict.fromkeys(s.alpha for s in samples))
    if len(P_values) * len(alpha_values) != len(samples):
        raise ValueError(f"{path}: rows do not form a complete (P, alpha) grid")
    return SweepReport(samples, P_values, alpha_values, grid_N)


def audit_lines(audits: list[AuditResult]) -> list[str]:
    lines = []
    for a in audits:
        where = "" if a.location is None else f" at P={a.location[0]:g}, alpha={a.location[1]:g}"
        verdict = "PASS" if a.passed else "FAIL"
        extra = f" ({a.note})" if a.note else ""
        lines.append(f"{verdict} {a.name}: worst violation {a.worst_violation:.3e}{where}{extra}")
    return lines


def fit_lines(fit: RefinementFit) -> list[str]:
    lines = [f"N,{fit.quantity}"] + [f"{n},{v!r}" for n, v in fit.points]
    if fit.order is not None:
        lines.append(f"fitted order = {fit.order:.4f}")
    if fit.relative_change is not None:
        lines.append(f"relative change (two finest grids) = {fit.relative_change:.4e}")
    return lines
