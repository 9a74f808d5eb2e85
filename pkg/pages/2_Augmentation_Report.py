import plotly.express as px
import streamlit as st

from reports import augmentation_table, load_manifests

st.set_page_config(
    page_title="Augmentation Report",
    page_icon="🧪",
    layout="wide"
)

st.title("🧪 Augmentation Report")

out_dir = st.session_state.get("out_dir", "out")
df = augmentation_table(load_manifests(out_dir))

if df.empty:
    st.info(f"No augmentation manifests in '{out_dir}'. Run `python cli.py augment <technique>`.")
else:
    outside = df[df["Within ±20%"] == False]  # noqa: E712
    col1, col2 = st.columns(2)
    with col1:
        st.metric("Runs", len(df))
    with col2:
        st.metric("Outside ±20% of published", len(outside))

    fig = px.bar(
        df.melt(id_vars=["Input Data"], value_vars=["Num. Synthetic", "Published Synthetic"],
                var_name="Source", value_name="Count"),
        x="Input Data", y="Count", color="Source", barmode="group",
        title="Synthetic samples per technique"
    )
    st.plotly_chart(fig, use_container_width=True)
    st.dataframe(df, use_container_width=True)

    st.download_button(
        label="Download Augmentation Table",
        data=df.to_csv(index=False),
        file_name="augmentation_report.csv",
        mime="text/csv"
    )
