import json
import math

import polars as pl
import pytest

from bqpe.exporters import (
    FIGURE_FILES,
    FigureTables,
    emit_plot_data,
    read_calibration_points,
    read_run_log,
    rounds_frame,
    run_log_paths,
    synthetic_frame,
    write_calibration_fits,
    write_calibration_points,
    write_run_log,
    write_shots,
)
from bqpe.models import CalibrationPoint, PhasePosterior, RoundRecord, RunConfig, RunLog, ShotRecord


def make_record(r: int, energy: float = -1.13, stderr: float = 0.01, var_h: float = 0.5) -> RoundRecord:
    return RoundRecord(
        r=r, k=r, beta=0.1 * r, m=r % 2, q_used=0.0, representation="fourier", J=r,
        m1_real=0.8, m1_imag=0.1, var_c=0.2, var_h=var_h, energy=energy, energy_stderr=stderr,
        n_attempts=2, gates_2q_executed=30, gates_2q_scheduled=40, cosine_distance=0.5 / r,
    )


@pytest.fixture
def run_log() -> RunLog:
    log = RunLog(config=RunConfig(mode="encoded", seed=4).to_dict(), rescaled_R=3.5)
    log.append(make_record(1, var_h=math.inf, energy=-1.0, stderr=math.inf))
    log.append(make_record(2))
    log.append(make_record(3, energy=-1.136, stderr=0.002))
    return log


class TestRunLogFiles:
    """Test run log persistence."""

    def test_paths(self, tmp_path):
        """Test the rounds and summary file names."""
        assert run_log_paths(tmp_path, "x") == (tmp_path / "x.jsonl", tmp_path / "x_summary.json")

    def test_round_trip(self, run_log, tmp_path):
        """Test that records, totals and config survive a write and read."""
        rounds_path, summary_path = write_run_log(run_log, tmp_path / "out")
        restored = read_run_log(rounds_path)
        assert restored.R == 3
        assert restored.records[1] == run_log.records[1]
        assert math.isinf(restored.records[0].var_h)
        assert restored.rescaled_R == 3.5
        assert restored.config["seed"] == 4
        assert restored.total_attempts == 6

    def test_summary_json(self, run_log, tmp_path):
        """Test that the summary is valid JSON with non-finite values nulled."""
        _, summary_path = write_run_log(run_log, tmp_path)
        summary = json.loads(summary_path.read_text())
        assert summary["R"] == 3
        assert summary["discards"] == 3
        assert summary["final_energy"] == pytest.approx(-1.136)
        assert summary["config"]["mode"] == "encoded"
        assert summary["accumulated_exit_ratio"] == pytest.approx(0.75)

    def test_rounds_without_summary(self, run_log, tmp_path):
        """Test reading rounds alone."""
        rounds_path, summary_path = write_run_log(run_log, tmp_path)
        summary_path.unlink()
        restored = read_run_log(rounds_path)
        assert restored.R == 3
        assert restored.config == {}

    def test_rounds_frame_schema(self, run_log):
        """Test one row per round with nulls for non-finite values."""
        df = rounds_frame(run_log)
        assert df.height == 3
        assert df["var_h"][0] is None
        assert df["k"].to_list() == [1, 2, 3]


class TestCalibrationFiles:
    """Test calibration CSVs."""

    def test_points_round_trip(self, tmp_path):
        """Test writing and reading calibration counts."""
        points = [CalibrationPoint(20, 0.5, 120, 500), CalibrationPoint(40, 2.5, 300, 480)]
        path = write_calibration_points(points, tmp_path / "points.csv")
        assert read_calibration_points(path) == points

    def test_missing_columns(self, tmp_path):
        """Test that files without n_shots are rejected."""
        path = tmp_path / "points.csv"
        pl.DataFrame({"k": [1], "beta": [0.0], "n0": [3]}).write_csv(path)
        with pytest.raises(ValueError, match="missing columns"):
            read_calibration_points(path)

    def test_fits_csv(self, tmp_path):
        """Test one CSV row per fit with optional columns left empty."""
        rows = [
            {"encoding": "unencoded", "k": 20, "q": 0.1, "q_model": 0.12, "discard_rate": None},
            {"encoding": "encoded", "k": 20, "q": 0.05, "q_model": None, "discard_rate": 0.2},
        ]
        df = pl.read_csv(write_calibration_fits(rows, tmp_path / "fits.csv"))
        assert df.height == 2
        assert df["discard_rate"].to_list() == [None, 0.2]

    def test_shots(self, tmp_path):
        """Test per-shot JSONL rows."""
        records = [ShotRecord(0, False, "none", 50), ShotRecord(None, True, "syndrome", 21, block=1)]
        df = pl.read_ndjson(write_shots([(8, 1.5, records), (16, 0.5, records[:1])], tmp_path / "shots.jsonl"))
        assert df["stage"].to_list() == ["none", "syndrome:1", "none"]
        assert df["m"].to_list() == [0, None, 0]
        assert df["k"].to_list() == [8, 8, 16]
        assert df["beta"].to_list() == [1.5, 1.5, 0.5]


class TestFigureTables:
    """Test per-figure plot-data tables."""

    def test_convergence(self, run_log):
        """Test averaging over phases per arm and round."""
        other = RunLog(config={"phi_star": 2.0})
        for r in range(1, 4):
            other.append(make_record(r))
        run_log.config["phi_star"] = 1.0
        table = FigureTables.fig2_convergence(synthetic_frame({"a": [run_log, other]}))
        assert table["r"].to_list() == [1, 2, 3]
        assert table["n_phases"].to_list() == [2, 2, 2]
        assert table["mean_cosine_distance"][0] == pytest.approx(0.5)

    def test_empty_synthetic_frame(self):
        """Test that no runs give an empty table with the round columns."""
        assert synthetic_frame({}).height == 0

    def test_q_vs_k_and_discard(self):
        """Test column selection and the encoded filter."""
        fits = pl.DataFrame(
            {
                "encoding": ["encoded", "unencoded"],
                "k": [20, 20],
                "q": [0.1, 0.2],
                "discard_rate": [0.3, None],
                "d_model": [0.28, None],
            }
        )
        assert FigureTables.fig3_q_vs_k(fits)["encoding"].to_list() == ["encoded", "unencoded"]
        discard = FigureTables.fig4_discard(fits)
        assert discard.columns == ["k", "discard_rate", "d_model"]
        assert discard.height == 1

    def test_energy_error(self, run_log):
        """Test the absolute error column."""
        table = FigureTables.fig5_energy([run_log], -1.137)
        assert table["abs_error"][2] == pytest.approx(0.001)
        assert table["R_bar"].unique().to_list() == [3.5]

    def test_noiseless_within_stderr(self, run_log):
        """Test the within-stderr flag."""
        table = FigureTables.figA2_noiseless([run_log], -1.137)
        assert table["within_stderr"].to_list()[2] is True

    def test_posterior_snapshots(self):
        """Test one grid of densities per snapshot."""
        snapshots = [(0, PhasePosterior.uniform()), (1, PhasePosterior.uniform())]
        table = FigureTables.figA1_posteriors(snapshots, n_grid=16)
        assert table.height == 32
        assert table["pdf"][0] == pytest.approx(1 / (2 * math.pi))

    def test_emit(self, tmp_path):
        """Test writing a figure CSV under its fixed name."""
        path = emit_plot_data(pl.DataFrame({"x": [1]}), "fig3", tmp_path)
        assert path.name == FIGURE_FILES["fig3"]
        assert path.exists()

    def test_emit_unknown_figure(self, tmp_path):
        """Test that unknown figure ids are rejected."""
        with pytest.raises(ValueError, match="Unknown figure"):
            emit_plot_data(pl.DataFrame({"x": [1]}), "fig9", tmp_path)
