"""Command line interface: ``loopsim simulate | sweep | equilibrium | metrics``.

Exit status is 0 on success, 1 for configuration or usage errors and 2 when a
model produces a non-finite value.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import report
from .config import load_scenario, load_sweep, parse_scenario
from .creator_games import best_response_dynamics, creator_utility, verify_pure_nash
from .engine import Trajectory, simulate
from .errors import BudgetExceededError, ConfigurationError, NumericError
from .metrics import MetricReport, departure_rate, standard_metrics

log = logging.getLogger("loopsim")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


class _UsageError(Exception):
    def __init__(self, message, usage):
        super().__init__(message)
        self.usage = usage


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting with status 2."""

    def error(self, message):
        raise _UsageError(message, self.format_usage())


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="loopsim", description="Simulate coupled recommender / viewer / creator dynamics.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="{simulate,sweep,equilibrium,metrics}")
    sub.required = True

    p = sub.add_parser("simulate", help="run one scenario; write trajectory JSONL and summary CSV")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path, help="output directory")
    p.add_argument("--plot", action="store_true", help="also render PNG figures next to the CSV")

    p = sub.add_parser("sweep", help="run every cell of a parameter/seed sweep")
    p.add_argument("--spec", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path, help="output directory (one subdirectory per cell)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")

    p = sub.add_parser("equilibrium", help="best-response dynamics + pure Nash check for the game section")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", type=Path, help="CSV file (default: stdout)")

    p = sub.add_parser("metrics", help="recompute metrics from a stored trajectory")
    p.add_argument("--traj", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path, help="CSV file")
    p.add_argument("--config", type=Path, help="scenario config; enables departure_rate")
    p.add_argument("--plot", action="store_true", help="also render a PNG of the metric series")
    return parser


def run_once(config, out_dir: Path, plot=False) -> dict:
    """Simulate ``config`` and write its files into ``out_dir``; returns written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    traj = simulate(config.scenario())
    names = config.outputs
    written = {}
    traj_path = out_dir / names["trajectory"]
    traj.write_jsonl(traj_path)
    written["trajectory"] = traj_path
    metrics = standard_metrics(traj)
    summary = report.export_summary(traj, metrics, config.run_id, config.seed, report.fixed_points(traj))
    summary_path = out_dir / names["summary"]
    report.write_text(summary_path, summary)
    written["summary"] = summary_path
    if "metrics" in names:
        written["metrics"] = out_dir / names["metrics"]
        report.write_text(written["metrics"], report.export_metrics(metrics))
    if plot:
        written["states_plot"] = report.plot_states(traj, out_dir / "states.png")
        fig = report.plot_metric_series(metrics, out_dir / "metrics.png")
        if fig is not None:
            written["metrics_plot"] = fig
    return written


def _cmd_simulate(args) -> int:
    config = load_scenario(args.config)
    written = run_once(config, args.out, plot=args.plot)
    log.info("wrote %s", ", ".join(str(p) for p in written.values()))
    return EXIT_OK


def _run_cell(config_text: str, out_dir: str) -> str:
    run_once(parse_scenario(config_text), Path(out_dir))
    return out_dir


def _cmd_sweep(args) -> int:
    if args.jobs < 1:
        raise ConfigurationError("must be >= 1", path="--jobs")
    spec = load_sweep(args.spec)
    cells = list(spec.cells())
    args.out.mkdir(parents=True, exist_ok=True)
    jobs = [(cell.config.to_json(), str(args.out / cell.name)) for cell in cells]
    if args.jobs == 1:
        for text, path in jobs:
            _run_cell(text, path)
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            list(pool.map(_run_cell, *zip(*jobs)))
    for cell, (text, _) in zip(cells, jobs):
        report.write_text(args.out / f"{cell.name}.json", text)
    header = ["cell", "seed", *spec.paths, "run_id"]
    rows = [
        [cell.name, str(cell.seed), *(json.dumps(val, sort_keys=True) for val in cell.values), cell.config.run_id]
        for cell in cells
    ]
    report.write_text(args.out / "cells.csv", report.to_csv(header, rows))
    log.info("ran %d cells into %s", len(cells), args.out)
    return EXIT_OK


def _cmd_equilibrium(args) -> int:
    config = load_scenario(args.config)
    if config.game is None:
        raise ConfigurationError("the config has no game section", path="game")
    game, dyn = config.game, config.dynamics
    result = best_response_dynamics(game, dyn.init_profile, dyn.max_rounds, dyn.tol, dyn.mode)
    nash = verify_pure_nash(result.profile, game)
    utils = [creator_utility(j, a, result.profile, game) for j, a in enumerate(result.profile)]
    text = report.export_equilibrium(result.profile, game, utils, nash, result.rounds)
    if args.out is None:
        sys.stdout.write(text)
    else:
        report.write_text(args.out, text)
    return EXIT_OK


def _cmd_metrics(args) -> int:
    slots = None
    if args.config is not None:
        slots = load_scenario(args.config).scenario().active_slots()
    traj = Trajectory.read_jsonl(args.traj, slots)
    metrics = standard_metrics(traj)
    if slots is None:
        metrics = [m for m in metrics if m.name != "departure_rate"]
    elif not any(m.name == "departure_rate" for m in metrics):
        metrics.append(MetricReport("departure_rate", departure_rate(traj, slots)))
    report.write_text(args.out, report.export_metrics(metrics))
    if args.plot:
        report.plot_metric_series(metrics, args.out.with_suffix(".png"))
    return EXIT_OK


COMMANDS = {
    "simulate": _cmd_simulate,
    "sweep": _cmd_sweep,
    "equilibrium": _cmd_equilibrium,
    "metrics": _cmd_metrics,
}


def run_cli(argv=None) -> int:
    """Run one CLI invocation and return its exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        sys.stderr.write(exc.usage)
        sys.stderr.write(f"loopsim: error: {exc}\n")
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigurationError, BudgetExceededError) as exc:
        sys.stderr.write(f"loopsim: configuration error: {exc}\n")
        return EXIT_CONFIG
    except NumericError as exc:
        sys.stderr.write(f"loopsim: numeric error: {exc}\n")
        return EXIT_NUMERIC
    except OSError as exc:
        sys.stderr.write(f"loopsim: {exc.strerror or exc}: {exc.filename or ''}\n")
        return EXIT_CONFIG


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
