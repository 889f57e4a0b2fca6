import streamlit as st

from bqpe.consts import DEFAULT_P2, INIT_KIND_OPTS, REPRESENTATION_OPTS, SELECTION_OPTS
from bqpe.exporters import ROUND_SCHEMA

RUN_MODE_OPTS = ["unencoded", "encoded"]


class RunConfigUI:
    """Handles UI for run configuration input."""

    @staticmethod
    def render_parameters(col, prefix: str = "run") -> dict:
        """Render run parameters in a Streamlit column; returns RunConfig keyword arguments."""
        col.write("### Run")

        mode = col.selectbox("Mode", RUN_MODE_OPTS, key=f"{prefix}_mode")
        selection = col.selectbox("Experiment selection", SELECTION_OPTS, key=f"{prefix}_selection")
        representation = col.selectbox("Posterior representation", REPRESENTATION_OPTS, key=f"{prefix}_repr")
        init_kind = col.selectbox("Initial state", INIT_KIND_OPTS, key=f"{prefix}_init")

        p2 = col.number_input(
            "Two-qubit error rate p2",
            min_value=0.0,
            max_value=0.05,
            value=DEFAULT_P2,
            step=1e-4,
            format="%.4f",
            key=f"{prefix}_p2",
        )
        max_updates = col.number_input(
            "Bayesian updates", min_value=1, max_value=1000, value=50, step=1, key=f"{prefix}_updates"
        )
        seed = col.number_input("Seed", min_value=0, value=0, step=1, key=f"{prefix}_seed")

        return {
            "mode": mode,
            "selection": selection,
            "representation": representation,
            "init_kind": init_kind,
            "p2": float(p2),
            "max_updates": int(max_updates),
            "seed": int(seed),
        }


class FileValidationUI:
    """Handles run-log upload and validation UI."""

    @staticmethod
    def validate_and_display_file(df, required_cols=tuple(ROUND_SCHEMA)):
        """Stop the app when an uploaded run log lacks round columns."""
        missing_cols = set(required_cols) - set(df.columns)
        if missing_cols:
            st.error(f"Missing columns in uploaded run log: {sorted(missing_cols)}")
            st.stop()
        return True


class InspectionUI:
    """Handles run inspection display."""

    @staticmethod
    def display_run_summary(summary: dict):
        """Display the run summary in an expander."""
        with st.expander("🔍 Run Details"):
            col1, col2 = st.columns(2)
            with col1:
                st.write("**Run:**")
                st.write(f"- Mode: {summary['mode']}")
                st.write(f"- Seed: {summary['seed']}")
                st.write(f"- Updates R: {summary['R']}")
                if summary["R_bar"] is not None:
                    st.write(f"- Rescaled R: {summary['R_bar']:.1f}")
                st.write(f"- Stop reason: {summary['stop_reason']}")

            with col2:
                st.write("**Cost:**")
                st.write(f"- Attempts: {summary['total_attempts']} ({summary['discards']} discarded)")
                st.write(f"- Two-qubit gates: {summary['total_2q_gates']}")
                if summary["accumulated_exit_ratio"] is not None:
                    st.write(f"- Conditional exit ratio: {summary['accumulated_exit_ratio']:.3f}")
                if summary["conversion_round"] is not None:
                    st.write(f"- Converted to von Mises at round {summary['conversion_round']}")

            if summary["final_energy"] is not None:
                stderr = summary["final_energy_stderr"]
                spread = f" ± {stderr:.5f}" if stderr is not None else ""
                st.write(f"**Final energy:** {summary['final_energy']:.5f}{spread} Ha")
