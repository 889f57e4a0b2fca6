from unittest.mock import MagicMock, patch

import polars as pl
import pytest

from bqpe.exporters import ROUND_SCHEMA
from bqpe.models import RunConfig
from bqpe.ui import FileValidationUI, InspectionUI, RunConfigUI


class StopApp(Exception):
    pass


@pytest.fixture
def summary():
    return {
        "mode": "encoded",
        "seed": 0,
        "R": 44,
        "R_bar": 120.5,
        "discards": 30,
        "total_attempts": 74,
        "total_2q_gates": 20000,
        "accumulated_exit_ratio": 0.8,
        "conversion_round": None,
        "stop_reason": "max_updates",
        "final_energy": -1.136,
        "final_energy_stderr": None,
    }


class TestRunConfigUI:
    """Test run parameter widgets."""

    def test_returns_valid_config_kwargs(self):
        """Test that widget values build a RunConfig."""
        col = MagicMock()
        col.selectbox.side_effect = ["encoded", "heuristic", "adaptive", "exact_eigenstate"]
        col.number_input.side_effect = [0.002, 40, 7]
        params = RunConfigUI.render_parameters(col)
        config = RunConfig(**params)
        assert (config.mode, config.selection, config.init_kind) == ("encoded", "heuristic", "exact_eigenstate")
        assert (config.p2, config.max_updates, config.seed) == (0.002, 40, 7)

    def test_widget_keys_use_prefix(self):
        """Test that widget keys carry the prefix."""
        col = MagicMock()
        col.selectbox.return_value = "unencoded"
        col.number_input.return_value = 1
        RunConfigUI.render_parameters(col, prefix="b")
        assert all(call.kwargs["key"].startswith("b_") for call in col.selectbox.call_args_list)


class TestFileValidationUI:
    """Test uploaded run-log validation."""

    def test_valid_file(self):
        """Test that a frame with every round column passes."""
        df = pl.DataFrame(schema=ROUND_SCHEMA)
        with patch("bqpe.ui.st") as mock_st:
            assert FileValidationUI.validate_and_display_file(df)
        mock_st.error.assert_not_called()

    def test_missing_columns_stop_app(self):
        """Test that missing columns show an error and stop."""
        df = pl.DataFrame({"r": [1], "k": [1]})
        with patch("bqpe.ui.st") as mock_st:
            mock_st.stop.side_effect = StopApp
            with pytest.raises(StopApp):
                FileValidationUI.validate_and_display_file(df)
        assert "var_h" in mock_st.error.call_args.args[0]


class TestInspectionUI:
    """Test the run summary display."""

    def test_display_run_summary(self, summary):
        """Test that the summary is written without an energy spread when stderr is missing."""
        with patch("bqpe.ui.st") as mock_st:
            mock_st.columns.return_value = (MagicMock(), MagicMock())
            InspectionUI.display_run_summary(summary)
        written = [call.args[0] for call in mock_st.write.call_args_list]
        assert "- Rescaled R: 120.5" in written
        assert "**Final energy:** -1.13600 Ha" in written
        mock_st.expander.assert_called_once_with("🔍 Run Details")
