import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Callable, List, Optional, Sequence, TypeVar

import numpy as np
import polars as pl

from bqpe import exporters
from bqpe.consts import FIGURE_OPTS, SELECTION_OPTS
from bqpe.exporters import FigureTables
from bqpe.hamiltonian import HamiltonianModel, load_dataset
from bqpe.models import ConfigError, FitConvergenceError, RunConfig
from bqpe.services import run_service

logger = logging.getLogger(__name__)

T = TypeVar("T")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FIT = 3

SYNTHETIC_ROUNDS = "synthetic_rounds.jsonl"
CALIBRATION_POINTS = "calibration_points.csv"
CALIBRATION_FITS = "calibration_fits.csv"
CALIBRATION_SHOTS = "calibration_shots.jsonl"
SPLIT_SWEEP = "split_sweep.csv"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bqpe", description="Bayesian quantum phase estimation on a simulated H2 QPE circuit"
    )
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", type=Path, default=None, help="JSON run configuration")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", type=Path, default=Path("out"))

    synthetic = sub.add_parser("synthetic", help="strategy comparison on synthetic likelihood data")
    common(synthetic)

    calibrate = sub.add_parser("calibrate", help="fit (q, omega) against depth k")
    common(calibrate)
    calibrate.add_argument("--mode", choices=["unencoded", "encoded", "both"], default="both")
    calibrate.add_argument("--points", type=Path, default=None, help="fit an existing k,beta,n0,n_shots CSV")
    calibrate.add_argument("--split-sweep", action="store_true", help="also fit every configured (t1, t2) pair")

    run = sub.add_parser("run", help="Bayesian QPE against the simulator")
    common(run)
    run.add_argument("--mode", choices=["unencoded", "encoded"], default=None)
    run.add_argument("--selection", choices=SELECTION_OPTS, default=None)
    run.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds to run")

    emit = sub.add_parser("emit", help="write per-figure plot data as CSV")
    common(emit)
    emit.add_argument("--figure", choices=FIGURE_OPTS, required=True)
    emit.add_argument("--input", type=Path, nargs="+", default=None)
    emit.add_argument("--phi-star", type=float, default=None, help="true phase for posterior snapshots")
    return parser


def load_config(args: argparse.Namespace, mode: Optional[str] = None) -> RunConfig:
    config = RunConfig.from_json(args.config) if args.config else RunConfig()
    overrides = {}
    if mode is not None:
        overrides["mode"] = mode
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "selection", None) is not None:
        overrides["selection"] = args.selection
    return replace(config, **overrides) if overrides else config


def read_input(reader: Callable[[Path], T], path: Path) -> T:
    """Read a user-supplied data file; unreadable or malformed files are configuration errors."""
    try:
        return reader(path)
    except (OSError, ValueError, pl.exceptions.PolarsError) as exc:
        raise ConfigError(f"Cannot read {path}: {exc}") from exc


def exact_energy_for(config: dict) -> float:
    h, _ = load_dataset(config.get("hamiltonian"))
    return HamiltonianModel.exact_ground(h).ground_energy


def cmd_synthetic(args: argparse.Namespace) -> int:
    config = load_config(args, "synthetic")
    results = run_service.synthetic_experiment(config)
    frame = exporters.synthetic_frame(results)
    args.out.mkdir(parents=True, exist_ok=True)
    frame.write_ndjson(args.out / SYNTHETIC_ROUNDS)
    finals = {
        arm: float(np.mean([log.records[-1].cosine_distance for log in logs if log.records]))
        for arm, logs in results.items()
    }
    (args.out / "synthetic_summary.json").write_text(
        json.dumps({"config": config.to_dict(), "final_mean_cosine_distance": finals}, indent=2, sort_keys=True)
    )
    logger.info(f"Synthetic experiment finished: {finals}")
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace) -> int:
    config = load_config(args, "calibrate")
    if args.points is not None:
        points = read_input(exporters.read_calibration_points, args.points)
        context = run_service.build_context(config)
        try:
            rows = run_service.fit_points(points, context.phi0)
        except ValueError as exc:
            raise ConfigError(f"Cannot fit {args.points}: {exc}") from exc
        exporters.write_calibration_fits(rows, args.out / CALIBRATION_FITS)
        return EXIT_OK

    encodings = ("unencoded", "encoded") if args.mode == "both" else (args.mode,)
    rows, points, shots = run_service.calibration_sweep(config, encodings)
    exporters.write_calibration_points(points, args.out / CALIBRATION_POINTS)
    if shots:
        exporters.write_shots(shots, args.out / CALIBRATION_SHOTS)
    exporters.write_calibration_fits(rows, args.out / CALIBRATION_FITS)
    if args.split_sweep:
        if not config.t_split_sweep:
            raise ConfigError("--split-sweep needs a non-empty t_split_sweep in the config")
        exporters.write_calibration_fits(run_service.split_sweep(config), args.out / SPLIT_SWEEP)
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args, args.mode)
    if config.mode not in ("unencoded", "encoded"):
        raise ConfigError(f"run needs mode unencoded or encoded, got {config.mode!r}")
    if args.seeds < 1:
        raise ConfigError(f"--seeds must be >= 1, got {args.seeds}")
    if args.seeds == 1:
        log = run_service.bayesian_qpe_run(config)
        exporters.write_run_log(log, args.out)
        return EXIT_OK
    for log in run_service.seeded_runs(config, args.seeds):
        exporters.write_run_log(log, args.out, stem=f"run_log_seed{log.config['seed']}")
    return EXIT_OK


def _default_inputs(figure: str, out: Path) -> List[Path]:
    if figure == "fig2":
        return [out / SYNTHETIC_ROUNDS]
    if figure in ("fig3", "fig4"):
        return [out / CALIBRATION_FITS]
    return sorted(out.glob("run_log*.jsonl"))


def cmd_emit(args: argparse.Namespace) -> int:
    figure = args.figure
    if figure == "figA1":
        config = replace(load_config(args, "synthetic"), representation="adaptive", selection="optimal")
        phi_star = args.phi_star
        if phi_star is None:
            phi_star = float(np.random.default_rng(config.seed).uniform(0.0, 2.0 * math.pi))
        table = FigureTables.figA1_posteriors(run_service.posterior_snapshots(config, phi_star))
        exporters.emit_plot_data(table, figure, args.out)
        return EXIT_OK

    inputs = args.input or _default_inputs(figure, args.out)
    missing = [str(path) for path in inputs if not Path(path).exists()]
    if not inputs or missing:
        raise ConfigError(f"No input data for {figure}: missing {missing or 'run logs'}")

    if figure == "fig2":
        table = FigureTables.fig2_convergence(pl.concat([read_input(pl.read_ndjson, path) for path in inputs]))
    elif figure in ("fig3", "fig4"):
        fits = pl.concat([read_input(pl.read_csv, path) for path in inputs], how="diagonal_relaxed")
        table = FigureTables.fig3_q_vs_k(fits) if figure == "fig3" else FigureTables.fig4_discard(fits)
    else:
        logs = [read_input(exporters.read_run_log, path) for path in inputs]
        exact = exact_energy_for(logs[0].config)
        if figure == "fig5":
            table = FigureTables.fig5_energy(logs, exact)
        else:
            table = FigureTables.figA2_noiseless(logs, exact)
    exporters.emit_plot_data(table, figure, args.out)
    return EXIT_OK


COMMANDS = {"synthetic": cmd_synthetic, "calibrate": cmd_calibrate, "run": cmd_run, "emit": cmd_emit}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level))
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        logger.error(f"Invalid configuration: {exc}")
        return EXIT_CONFIG
    except FitConvergenceError as exc:
        logger.error(f"Calibration fit failed: {exc}")
        return EXIT_FIT


if __name__ == "__main__":
    sys.exit(main())
