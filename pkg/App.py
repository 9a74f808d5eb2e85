import os

import streamlit as st

from reports import load_manifests

# Set page configuration - MUST be the first Streamlit command
st.set_page_config(
    page_title="Language-only VQA Pipeline",
    page_icon="🧩",
    layout="wide",
    initial_sidebar_state="expanded",
    menu_items={
        'About': "# Language-only VQA Pipeline\nTriplet building, augmentation runs and evaluation reports."
    }
)

# Sidebar styling
st.markdown("""
    <style>
    .stApp {
        max-width: 100%;
    }
    section[data-testid="stSidebar"] {
        background-color: #1E1E1E;
        width: 250px;
    }
    section[data-testid="stSidebar"] h1 {
        color: #FFFFFF;
        font-size: 1.5rem;
        padding: 0 1rem;
        margin-bottom: 1.5rem;
    }
    </style>
""", unsafe_allow_html=True)

st.title("🧩 Language-only VQA Pipeline")
st.markdown("""
Browse the outputs of a pipeline run directory.

### Available Pages:
1. **Description Lengths**: mean description length per description mode
2. **Augmentation Report**: synthetic and total counts per technique next to the published counts
3. **Evaluation**: accuracy by answer type, question type breakdown and answer overlap

Use the sidebar navigation to switch between pages.
""")

out_dir = st.sidebar.text_input("Run directory", value=os.environ.get("VQALANG_OUT", "out"))
st.session_state["out_dir"] = out_dir

manifests = load_manifests(out_dir)
if not manifests:
    st.info(f"No manifests found in '{out_dir}'. Run `python cli.py build` first.")
else:
    build = next((m for m in manifests if m.get("command") == "build"), None)
    augment_runs = [m for m in manifests if m.get("command") == "augment"]
    col1, col2, col3 = st.columns(3)
    with col1:
        st.metric("Original Triplets", f"{build['original']:,}" if build else "n/a")
    with col2:
        st.metric("Augmentation Runs", len(augment_runs))
    with col3:
        st.metric("Synthetic Triplets", f"{sum(m['synthetic'] for m in augment_runs):,}")
    if build:
        st.caption(f"Seed {build['seed']} · tool {build['tool_version']} · config {build['config_hash'][:12]}")
        if build.get("diagnostics"):
            st.subheader("Build diagnostics")
            st.json(build["diagnostics"])
