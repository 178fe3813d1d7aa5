"""
Command-line front end.

    python -m src.ui.cli solve --config configs/exp_local.toml
    python -m src.ui.cli check --config configs/dose_local.toml --design out/dose_local/design.csv
    python -m src.ui.cli curve --config configs/dose_local.toml --design design.csv --out curve.csv

Exit codes: 0 converged / check passed, 1 configuration, CSV or I/O error,
2 no certificate (solve) or failed check, 3 starting design with T_P = 0.
"""
import argparse
import logging
import sys
import time
from pathlib import Path
from typing import List, Optional

from src.adapters import config_file, csv_store
from src.application.exporter import ResultExporter, render_report
from src.application.facade import DiscriminationFacade
from src.config import RuntimeSettings, configure_logging
from src.domain.errors import DesignError, InvalidStartError

_logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NOT_CERTIFIED = 2
EXIT_INVALID_START = 3


def _facade(args: argparse.Namespace, settings: RuntimeSettings) -> DiscriminationFacade:
    cfg = config_file.load(args.config)
    threads = args.threads
    if threads is None and "threads" not in cfg.solver.model_fields_set:
        threads = settings.threads
    seed = args.seed
    if seed is None and "seed" not in cfg.solver.model_fields_set:
        seed = settings.seed
    return DiscriminationFacade(cfg, threads=threads, seed=seed)


def cmd_solve(args: argparse.Namespace, settings: RuntimeSettings) -> int:
    facade = _facade(args, settings)
    cfg = facade.config
    out_dir = Path(args.out or cfg.output.dir or settings.output_dir / Path(args.config).stem)
    cfg = cfg.model_copy(update={"output": cfg.output.model_copy(update={"dir": str(out_dir)})})
    facade.config = cfg

    started = time.time()
    problem = facade.problem
    print(f"[CLI] {len(problem.comparisons)} comparison(s) on [{problem.lower:g}, {problem.upper:g}]")
    report = facade.solve()
    check = facade.check(report.design, args.tol)
    curve = facade.curve(report.design)

    exporter = ResultExporter(out_dir)
    exporter.write_design(report, cfg.output.design)
    exporter.write_trace(report, cfg.output.trace)
    exporter.write_curve(curve, cfg.output.curve)
    exporter.write_effective_config(cfg)
    text = render_report(cfg, problem, report, check, facade.pairwise(report.design))
    exporter.write_report(text, cfg.output.report)

    print(report.design.rows())
    print(f"T_P = {report.value:.17g}")
    print(f"efficiency >= {report.efficiency:.6f} after {report.iterations} iteration(s)")
    for warning in report.warnings:
        print(f"warning: {warning}")
    print(f"[CLI] results in {out_dir} ({time.time() - started:.2f}s)")
    return EXIT_OK if report.converged else EXIT_NOT_CERTIFIED


def cmd_check(args: argparse.Namespace, settings: RuntimeSettings) -> int:
    facade = _facade(args, settings)
    problem = facade.problem
    design = csv_store.read_design(args.design, problem.space)
    result = facade.check(design, args.tol)
    print(f"T_P      = {result.t_value:.17g}")
    print(f"max psi  = {result.max_psi:.17g} at x = {result.argmax_psi:.17g}")
    print(f"gap      = {result.gap:.17g}")
    print(f"ratio    = {result.gap_ratio:.17g}")
    support = design.points[design.masses > 0]
    for x, value in zip(support, result.support_psi):
        print(f"psi({x:.17g}) = {value:.17g}")
    print(f"{'PASS' if result.passed else 'FAIL'} at tol {result.tol:g}: {result.diagnosis}")
    return EXIT_OK if result.passed else EXIT_NOT_CERTIFIED


def cmd_curve(args: argparse.Namespace, settings: RuntimeSettings) -> int:
    facade = _facade(args, settings)
    problem = facade.problem
    design = csv_store.read_design(args.design, problem.space)
    curve = facade.curve(design)
    out = Path(args.out or "curve.csv")
    ResultExporter(out.parent).write_curve(curve, out.name)
    print(f"T_P = {curve.attrs['t_value']:.17g}")
    print(f"[CLI] {curve.sizes['x']} grid points written to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tdesign", description="T-optimal discriminating designs")
    parser.add_argument("--log-level", default=None, help="overrides TDESIGN_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="problem configuration (TOML)")
        p.add_argument("--threads", type=int, default=None, help="worker threads for the inner fits")
        p.add_argument("--seed", type=int, default=None, help="seed for the multistart sequence")
        p.add_argument("--tol", type=float, default=None, help="equivalence-check tolerance")

    solve = sub.add_parser("solve", help="compute an optimal design")
    common(solve)
    solve.add_argument("--out", default=None, help="output directory")
    solve.set_defaults(handler=cmd_solve)

    check = sub.add_parser("check", help="check a design against the equivalence theorem")
    common(check)
    check.add_argument("--design", required=True, help="design CSV (x,weight)")
    check.set_defaults(handler=cmd_check)

    curve = sub.add_parser("curve", help="write the sensitivity function of a design")
    common(curve)
    curve.add_argument("--design", required=True, help="design CSV (x,weight)")
    curve.add_argument("--out", default=None, help="output CSV path")
    curve.set_defaults(handler=cmd_curve)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    settings = RuntimeSettings()
    configure_logging(args.log_level or settings.log_level)
    try:
        return args.handler(args, settings)
    except InvalidStartError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID_START
    except (DesignError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
