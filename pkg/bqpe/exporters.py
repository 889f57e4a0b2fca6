import json
import logging
import math
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import polars as pl

from bqpe.models import CalibrationPoint, PhasePosterior, RoundRecord, RunLog, ShotRecord
from bqpe.posterior import phase_grid

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

ROUND_SCHEMA = {
    "r": pl.Int64,
    "k": pl.Int64,
    "beta": pl.Float64,
    "m": pl.Int64,
    "q_used": pl.Float64,
    "representation": pl.Utf8,
    "J": pl.Int64,
    "m1_real": pl.Float64,
    "m1_imag": pl.Float64,
    "var_c": pl.Float64,
    "var_h": pl.Float64,
    "energy": pl.Float64,
    "energy_stderr": pl.Float64,
    "n_attempts": pl.Int64,
    "gates_2q_executed": pl.Int64,
    "gates_2q_scheduled": pl.Int64,
    "converted": pl.Boolean,
    "cosine_distance": pl.Float64,
}
POINT_SCHEMA = {"k": pl.Int64, "beta": pl.Float64, "n0": pl.Int64, "n_shots": pl.Int64}
SHOT_SCHEMA = {
    "m": pl.Int64,
    "discarded": pl.Boolean,
    "stage": pl.Utf8,
    "g2q": pl.Int64,
    "k": pl.Int64,
    "beta": pl.Float64,
}

FIGURE_FILES = {
    "fig2": "fig2_convergence.csv",
    "fig3": "fig3_q_vs_k.csv",
    "fig4": "fig4_discard.csv",
    "fig5": "fig5_energy.csv",
    "figA1": "figA1_posteriors.csv",
    "figA2": "figA2_noiseless.csv",
}


def _finite_or_none(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def _json_ready(data):
    if isinstance(data, dict):
        return {key: _json_ready(value) for key, value in data.items()}
    if isinstance(data, (list, tuple)):
        return [_json_ready(value) for value in data]
    return _finite_or_none(data)


def rounds_frame(log: RunLog) -> pl.DataFrame:
    return pl.DataFrame([record.to_dict() for record in log.records], schema=ROUND_SCHEMA)


# -- run logs -------------------------------------------------------------------


def run_log_paths(out_dir: PathLike, stem: str = "run_log") -> Tuple[Path, Path]:
    out_dir = Path(out_dir)
    return out_dir / f"{stem}.jsonl", out_dir / f"{stem}_summary.json"


def write_run_log(log: RunLog, out_dir: PathLike, stem: str = "run_log") -> Tuple[Path, Path]:
    """Write round records as JSONL and the run summary (config, totals, final posterior) as JSON."""
    rounds_path, summary_path = run_log_paths(out_dir, stem)
    rounds_path.parent.mkdir(parents=True, exist_ok=True)
    rounds_frame(log).write_ndjson(rounds_path)
    summary = log.get_summary() | {"config": log.config}
    summary_path.write_text(json.dumps(_json_ready(summary), indent=2, sort_keys=True))
    logger.info(f"Wrote {log.R} rounds to {rounds_path} and summary to {summary_path}")
    return rounds_path, summary_path


def read_run_log(rounds_path: PathLike, summary_path: Optional[PathLike] = None) -> RunLog:
    """Rebuild a RunLog from its JSONL rounds and (optionally) its summary JSON."""
    rounds_path = Path(rounds_path)
    if summary_path is None:
        candidate = rounds_path.with_name(f"{rounds_path.stem}_summary.json")
        summary_path = candidate if candidate.exists() else None
    summary = json.loads(Path(summary_path).read_text()) if summary_path else {}
    log = RunLog(
        config=summary.get("config", {}),
        stop_reason=summary.get("stop_reason", "max_updates"),
        rescaled_R=summary.get("R_bar"),
        posterior=summary.get("posterior"),
    )
    if rounds_path.stat().st_size == 0:
        return log
    df = pl.read_ndjson(rounds_path, schema=ROUND_SCHEMA)
    for row in df.iter_rows(named=True):
        if row["var_h"] is None:
            row["var_h"] = math.inf
        log.append(RoundRecord(**row))
    return log


# -- calibration and shots --------------------------------------------------------


def write_calibration_points(points: Sequence[CalibrationPoint], path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = [(p.k, p.beta, p.n0, p.n_shots) for p in points]
    pl.DataFrame(rows, schema=POINT_SCHEMA, orient="row").write_csv(path)
    return path


def read_calibration_points(path: PathLike) -> List[CalibrationPoint]:
    df = pl.read_csv(path)
    missing = set(POINT_SCHEMA) - set(df.columns)
    if missing:
        raise ValueError(f"Calibration file {path} is missing columns {sorted(missing)}")
    df = df.select([pl.col(name).cast(dtype) for name, dtype in POINT_SCHEMA.items()])
    return [CalibrationPoint(**row) for row in df.iter_rows(named=True)]


def write_calibration_fits(rows: Sequence[dict], path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pl.DataFrame(rows, infer_schema_length=None).write_csv(path)
    logger.info(f"Wrote {len(rows)} calibration fits to {path}")
    return path


def write_shots(batches: Iterable[Tuple[int, float, Sequence[ShotRecord]]], path: PathLike) -> Path:
    """One encoded shot per JSONL line, tagged with the (k, beta) it was sampled at."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = [record.to_dict(k, beta) for k, beta, records in batches for record in records]
    pl.DataFrame(rows, schema=SHOT_SCHEMA).write_ndjson(path)
    logger.info(f"Wrote {len(rows)} shot records to {path}")
    return path


# -- synthetic ensembles ----------------------------------------------------------


def synthetic_frame(results: Dict[str, List[RunLog]]) -> pl.DataFrame:
    """Long table of every synthetic round, tagged with arm and phase index."""
    frames = []
    for arm, logs in results.items():
        for phase_index, log in enumerate(logs):
            frames.append(
                rounds_frame(log).with_columns(
                    pl.lit(arm).alias("arm"),
                    pl.lit(phase_index).alias("phase_index"),
                    pl.lit(log.config.get("phi_star"), dtype=pl.Float64).alias("phi_star"),
                )
            )
    if not frames:
        return pl.DataFrame(schema=ROUND_SCHEMA | {"arm": pl.Utf8, "phase_index": pl.Int32, "phi_star": pl.Float64})
    return pl.concat(frames, how="vertical_relaxed")


# -- per-figure tables ------------------------------------------------------------


class FigureTables:
    """Builders for the per-figure plot-data tables."""

    @staticmethod
    def fig2_convergence(synthetic: pl.DataFrame) -> pl.DataFrame:
        return (
            synthetic.group_by("arm", "r")
            .agg(
                pl.col("cosine_distance").mean().alias("mean_cosine_distance"),
                pl.col("cosine_distance").median().alias("median_cosine_distance"),
                pl.col("k").mean().alias("mean_k"),
                pl.len().alias("n_phases"),
            )
            .sort("arm", "r")
        )

    @staticmethod
    def fig3_q_vs_k(fits: pl.DataFrame) -> pl.DataFrame:
        columns = ["encoding", "k", "q", "stderr_q", "omega", "omega_pi", "stderr_omega", "q_model", "clamped"]
        return fits.select([c for c in columns if c in fits.columns]).sort("encoding", "k")

    @staticmethod
    def fig4_discard(fits: pl.DataFrame) -> pl.DataFrame:
        columns = ["k", "discard_rate", "d_model", "exit_ratio", "sx_insertion", "p2"]
        encoded = fits.filter(pl.col("encoding") == "encoded")
        return encoded.select([c for c in columns if c in encoded.columns]).sort("k")

    @staticmethod
    def energy_table(logs: Sequence[RunLog], exact_energy: Optional[float]) -> pl.DataFrame:
        frames = []
        for log in logs:
            frames.append(
                rounds_frame(log)
                .select("r", "k", "beta", "m", "representation", "converted", "energy", "energy_stderr", "n_attempts")
                .with_columns(
                    pl.lit(log.config.get("seed"), dtype=pl.Int64).alias("seed"),
                    pl.lit(log.config.get("mode")).alias("mode"),
                    pl.lit(log.rescaled_R, dtype=pl.Float64).alias("R_bar"),
                    pl.lit(exact_energy, dtype=pl.Float64).alias("exact_energy"),
                )
            )
        table = pl.concat(frames, how="vertical_relaxed")
        return table.with_columns((pl.col("energy") - pl.col("exact_energy")).abs().alias("abs_error"))

    @classmethod
    def fig5_energy(cls, logs: Sequence[RunLog], exact_energy: Optional[float]) -> pl.DataFrame:
        return cls.energy_table(logs, exact_energy)

    @classmethod
    def figA2_noiseless(cls, logs: Sequence[RunLog], exact_energy: float) -> pl.DataFrame:
        table = cls.energy_table(logs, exact_energy)
        return table.with_columns((pl.col("abs_error") <= pl.col("energy_stderr")).alias("within_stderr"))

    @staticmethod
    def figA1_posteriors(snapshots: Sequence[Tuple[int, PhasePosterior]], n_grid: int = 512) -> pl.DataFrame:
        phi = phase_grid(n_grid)
        frames = [
            pl.DataFrame(
                {
                    "r": np.full(n_grid, r),
                    "phi": phi,
                    "pdf": post.pdf(phi),
                    "representation": [post.kind] * n_grid,
                }
            )
            for r, post in snapshots
        ]
        return pl.concat(frames)


def emit_plot_data(table: pl.DataFrame, figure_id: str, out_dir: PathLike) -> Path:
    """Write one per-figure CSV."""
    if figure_id not in FIGURE_FILES:
        raise ValueError(f"Unknown figure {figure_id!r}; expected one of {list(FIGURE_FILES)}")
    path = Path(out_dir) / FIGURE_FILES[figure_id]
    path.parent.mkdir(parents=True, exist_ok=True)
    table.write_csv(path)
    logger.info(f"Wrote {table.height} rows of {figure_id} plot data to {path}")
    return path
