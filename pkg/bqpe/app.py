import logging

import polars as pl
import streamlit as st

from bqpe.exporters import rounds_frame
from bqpe.models import ConfigError, RunConfig
from bqpe.services import run_service
from bqpe.ui import FileValidationUI, InspectionUI, RunConfigUI

# Configure logging for inspection
logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


st.title("Bayesian QPE Run Explorer")

# Existing run log
file = st.file_uploader("Run log", type=["jsonl", "ndjson"])
if file:
    df = pl.read_ndjson(file)
    FileValidationUI.validate_and_display_file(df)
    st.session_state.rounds_df = df
    with st.expander("View uploaded run log"):
        st.dataframe(df)

st.write("## New Run")
col1, col2 = st.columns(2, gap="medium")
params = RunConfigUI.render_parameters(col1)
col2.write("### Notes")
col2.write("One shot per update; encoded shots are retried until accepted.")

if st.button("Run", type="primary", use_container_width=True):
    try:
        config = RunConfig(**params)
    except ConfigError as exc:
        st.error(str(exc))
        st.stop()

    with st.spinner("Running Bayesian QPE..."):
        log = run_service.bayesian_qpe_run(config)
    st.session_state.rounds_df = rounds_frame(log)

    run_summary = run_service.inspect_last_run()
    if run_summary:
        InspectionUI.display_run_summary(run_summary)

    st.success("Run complete!")
    st.dataframe(st.session_state.rounds_df)
