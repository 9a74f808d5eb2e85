import json
import os

import streamlit as st

from reports import length_figure, length_table

st.set_page_config(
    page_title="Description Lengths",
    page_icon="📏",
    layout="wide"
)

st.title("📏 Description Lengths")

out_dir = st.session_state.get("out_dir", "out")
stats_path = os.path.join(out_dir, "stats.json")


@st.cache_data
def load_stats(path):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


if not os.path.exists(stats_path):
    st.info(f"No {stats_path} yet. Run `python cli.py stats` to compute it.")
else:
    try:
        df = length_table(load_stats(stats_path))
        st.plotly_chart(length_figure(df), use_container_width=True)
        st.dataframe(
            df.style.format({'Length': '{:.1f}', 'Published Length': '{:.1f}'}, na_rep='-'),
            use_container_width=True
        )
        st.download_button(
            label="Download Length Table",
            data=df.to_csv(index=False),
            file_name="description_lengths.csv",
            mime="text/csv"
        )
    except Exception as e:
        st.error(f"Error loading length statistics: {str(e)}")
