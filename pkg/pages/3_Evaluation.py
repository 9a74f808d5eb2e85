import json
import os

import streamlit as st

from evaluation import OverlapReport, load_report
from reports import accuracy_figure, accuracy_table, overlap_figure, overlap_table, question_type_table

st.set_page_config(
    page_title="Evaluation",
    page_icon="📊",
    layout="wide"
)

st.title("📊 Evaluation")

out_dir = st.session_state.get("out_dir", "out")
report_files = sorted(f for f in os.listdir(out_dir) if f.startswith("eval_") and f.endswith(".json")) \
    if os.path.isdir(out_dir) else []

if not report_files:
    st.info(f"No evaluation reports in '{out_dir}'. Run `python cli.py eval <predictions>`.")
else:
    try:
        reports = {f[len("eval_"):-len(".json")]: load_report(os.path.join(out_dir, f)) for f in report_files}
        baseline_name = st.sidebar.selectbox("Baseline (for Gap)", ["None"] + list(reports))
        baseline = reports.get(baseline_name)
        df = accuracy_table(reports, baseline)

        st.header("Accuracy by Answer Type")
        st.plotly_chart(accuracy_figure(df), use_container_width=True)
        st.dataframe(df, use_container_width=True)

        st.header("Question Types")
        selected = st.selectbox("Report", list(reports))
        st.dataframe(question_type_table(reports[selected]), use_container_width=True)
    except Exception as e:
        st.error(f"Error loading evaluation reports: {str(e)}")

overlap_path = os.path.join(out_dir, "overlap.json")
if os.path.exists(overlap_path):
    st.header("Answer Overlap")
    with open(overlap_path, "r", encoding="utf-8") as f:
        counts = json.load(f)["counts"]
    report = OverlapReport(**counts)
    col1, col2 = st.columns(2)
    with col1:
        st.plotly_chart(overlap_figure(report), use_container_width=True)
    with col2:
        st.dataframe(overlap_table(report), use_container_width=True)
