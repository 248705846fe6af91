"""Command-line entry point: ``ergodic-mfg {solve,sweep,refine,slice,audit}``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from numpy.linalg import LinAlgError

from .cell_system import CellProblem
from .cli_io import (
    ConfigError,
    audit_lines,
    build_config,
    fit_lines,
    parse_document,
    read_samples,
    summary_path,
    write_samples,
    write_summary,
)
from .effective import SolverError, evaluate_point
from .lsq_newton import StagnationError
from .sweep import (
    InsufficientDataError,
    SweepQualityError,
    SweepReport,
    asymptotic_slice,
    property_audit,
    refinement_study,
    run_sweep,
)
from .torus_grid import build_grid

EXIT_OK, EXIT_SOLVER, EXIT_CONFIG = 0, 1, 2

# flag dest -> config key
FLAG_KEYS = {
    "P": "run.P",
    "alpha": "run.alpha",
    "N": "grid.N",
    "q": "potential.q",
    "A": "potential.A",
    "kind": "potential.kind",
    "delta": "run.delta",
    "out": "run.out",
    "ordering": "sweep.ordering",
    "threads": "run.threads",
    "quantity": "run.quantity",
}


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _range(text: str) -> list[float]:
    parts = _float_list(text)
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected min,max,count")
    return parts


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key = value configuration document")
    common.add_argument("--out", help="output table path")
    common.add_argument("--P", type=float)
    common.add_argument("--alpha", type=float)
    common.add_argument("--N", type=int, help="number of grid nodes")
    common.add_argument("--q", type=float, help="power coupling exponent")
    common.add_argument("--A", type=float, help="amplitude of the periodic potential")
    common.add_argument("--kind", choices=("power", "log"))
    common.add_argument("--delta", type=float, help="finite-difference step in P")
    common.add_argument("--N-list", dest="N_list", type=_int_list, help="refinement grids, e.g. 50,100,200")
    common.add_argument("--ordering", choices=("warm", "cold"))
    common.add_argument("--threads", type=int)
    common.add_argument("--quantity", choices=("E", "relation_error", "R"))
    common.add_argument("--P-range", dest="P_range", type=_range, help="sweep range min,max,count")
    common.add_argument("--alpha-range", dest="alpha_range", type=_range, help="sweep range min,max,count")
    common.add_argument("--P-list", dest="P_list", type=_float_list, help="P values for a slice")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="ergodic-mfg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="solve one cell problem")
    sub.add_parser("sweep", parents=[common], help="sweep a (P, alpha) grid")
    sub.add_parser("refine", parents=[common], help="grid-refinement study at one (P, alpha)")
    sub.add_parser("slice", parents=[common], help="large-|P| slice at fixed alpha")
    audit = sub.add_parser("audit", parents=[common], help="audit an existing samples table")
    audit.add_argument("samples", nargs="?", type=Path, help="samples file (defaults to --out)")
    return parser


def _config(args: argparse.Namespace):
    entries = parse_document(args.config.read_text(encoding="utf-8")) if args.config else {}
    for dest, key in FLAG_KEYS.items():
        value = getattr(args, dest, None)
        if value is not None:
            entries[key] = value
    if args.N_list is not None:
        entries["run.N_list"] = args.N_list
    if args.P_list is not None:
        entries["run.P_list"] = args.P_list
    if args.P_range is not None:
        entries["sweep.P"] = args.P_range
    if args.alpha_range is not None:
        entries["sweep.alpha"] = args.alpha_range
    return build_config(entries)


def _cmd_solve(cfg) -> None:
    prob = CellProblem(build_grid(cfg.N), cfg.potential, cfg.P, cfg.alpha, cfg.sweep.options)
    sample, _ = evaluate_point(prob)
    for f in dataclasses.fields(sample):
        if f.name == "diagnostics":
            continue
        value = getattr(sample, f.name)
        print(f"{f.name}={value:.12g}" if isinstance(value, float) else f"{f.name}={value}")


def _cmd_sweep(cfg) -> int:
    try:
        report = run_sweep(cfg.sweep, threads=cfg.threads)
        code = EXIT_OK
    except SweepQualityError as exc:
        report, code = exc.report, EXIT_SOLVER
        print(f"error: {exc}", file=sys.stderr)
    write_samples(report, cfg.out or "samples.csv")
    print("\n".join(audit_lines(report.audits)))
    return code


def _cmd_refine(cfg) -> None:
    quantity = cfg.quantity or ("E" if cfg.potential.kind == "log" else "relation_error")
    fit = refinement_study((cfg.P, cfg.alpha), cfg.potential, cfg.N_list, quantity, cfg.sweep.options)
    lines = fit_lines(fit)
    print("\n".join(lines))
    if cfg.out:
        Path(cfg.out).write_text("\n".join(lines[: len(fit.points) + 1]) + "\n", encoding="utf-8")
        write_summary(SweepReport([], refinement_fits=[fit]), summary_path(cfg.out))


def _cmd_slice(cfg) -> None:
    rows = asymptotic_slice(cfg.alpha, cfg.P_list, cfg.potential, cfg.N, cfg.sweep.options)
    lines = ["P,Hbar_over_P2,drift_ratio"] + [f"{r.P!r},{r.Hbar_ratio!r},{r.drift_ratio!r}" for r in rows]
    print("\n".join(lines))
    if cfg.out:
        Path(cfg.out).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _cmd_audit(cfg, samples: Path | None) -> None:
    path = samples or (Path(cfg.out) if cfg.out else None)
    if path is None:
        raise ConfigError("audit needs a samples file")
    report = read_samples(path, cfg.N)
    print("\n".join(audit_lines(property_audit(report, cfg.potential, cfg.N))))


def run_cli(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _config(args)
        if args.command == "solve":
            _cmd_solve(cfg)
        elif args.command == "sweep":
            return _cmd_sweep(cfg)
        elif args.command == "refine":
            _cmd_refine(cfg)
        elif args.command == "slice":
            _cmd_slice(cfg)
        else:
            _cmd_audit(cfg, args.samples)
    except (SolverError, StagnationError, InsufficientDataError, SweepQualityError, LinAlgError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ValueError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
