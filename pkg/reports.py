"""Tables and charts over run manifests and evaluation reports."""
import json
import logging
import os
from typing import Any, Dict, List, Mapping, Optional, Sequence

import pandas as pd
import plotly.express as px

from errors import DataError
from evaluation import AccuracyReport, OverlapReport, accuracy_gap

logger = logging.getLogger(__name__)

COUNT_TOLERANCE = 0.20

# run key -> (row label, published synthetic count)
AUGMENTATION_ROWS = {
    "hyponym": ("w/ Hyponym Replacement", 132570),
    "hypernym": ("w/ Hypernym Replacement", 23869),
    "hypernym+hyponym": ("w/ Hyponym and Hypernym Replacement", 183944),
    "color_inversion": ("w/ Color Inversion", 19308),
    "adversarial": ("w/ Adversarial Word Replacement", 169929),
    "css": ("w/ Counterfactual Samples", 438183),
    "css_question": ("w/ Counterfactual Samples (Q)", None),
    "css_description": ("w/ Counterfactual Samples (D)", None),
    "eda_d": ("w/ EDA (D)", 438183),
    "eda_q": ("w/ EDA (Q)", 438183),
    "cwr_d": ("w/ Contextual Word Replacement (D)", 438183),
    "cwr_q": ("w/ Contextual Word Replacement (Q)", 438183),
    "cwi_d": ("w/ Contextual Word Insertion (D)", 438183),
    "cwi_q": ("w/ Contextual Word Insertion (Q)", 438183),
    "bt_d": ("w/ Back Translation (D)", 438183),
    "bt_q": ("w/ Back Translation (Q)", 293811),
}

PUBLISHED_LENGTHS = {
    "none": None, "captions:1": 10.5, "captions:2": 21.0, "captions:3": 31.5, "captions:4": 42.0,
    "captions:5": 52.5, "narrative": 42.9, "whole": 95.3,
}

ACCURACY_COLUMNS = ["Yes/No", "Number", "Other", "Overall"]


def run_key(names: Sequence[str]) -> str:
    """Technique names of one run -> manifest/table key"""
    return "+".join(sorted(names))


def within_band(measured: int, published: Optional[int], tolerance: float = COUNT_TOLERANCE) -> Optional[bool]:
    if not published:
        return None
    return abs(measured - published) <= tolerance * published


# ========== MANIFESTS ========== #

def load_manifests(directory: str) -> List[Dict[str, Any]]:
    if not os.path.isdir(directory):
        return []
    manifests = []
    for name in sorted(os.listdir(directory)):
        if not name.endswith(".manifest.json"):
            continue
        with open(os.path.join(directory, name), "r", encoding="utf-8") as f:
            try:
                manifests.append(json.load(f))
            except json.JSONDecodeError as e:
                logger.warning(f"Skipping unreadable manifest {name}: {e}")
    return manifests


def augmentation_table(manifests: Sequence[Mapping[str, Any]],
                       reports: Optional[Mapping[str, AccuracyReport]] = None,
                       baseline: Optional[AccuracyReport] = None) -> pd.DataFrame:
    """Num. Synthetic / Num. Total per augmentation run, with the published
    counts beside them and accuracy columns when reports are given"""
    reports = reports or {}
    rows = []
    for manifest in manifests:
        if manifest.get("command") != "augment":
            continue
        key = manifest["run"]
        label, published = AUGMENTATION_ROWS.get(key, (f"w/ {key}", None))
        row = {
            "Input Data": label,
            "Run": key,
            "Num. Synthetic": manifest["synthetic"],
            "Num. Total": manifest["total"],
            "Published Synthetic": published,
            "Within ±20%": within_band(manifest["synthetic"], published),
        }
        row.update(_accuracy_columns(reports.get(key), baseline))
        rows.append(row)
    return pd.DataFrame(rows)


def _accuracy_columns(report: Optional[AccuracyReport], baseline: Optional[AccuracyReport]) -> Dict[str, Any]:
    if report is None:
        return {}
    columns = {"Yes/No": report.yes_no, "Number": report.number, "Other": report.other,
               "Overall": report.overall}
    if baseline is not None:
        columns["Gap"] = accuracy_gap(report, baseline)
    elif report.gap is not None:
        columns["Gap"] = report.gap
    return columns


def accuracy_table(reports: Mapping[str, AccuracyReport], baseline: Optional[AccuracyReport] = None) -> pd.DataFrame:
    rows = []
    for name, report in reports.items():
        row = {"Input Data": name}
        row.update(_accuracy_columns(report, baseline))
        rows.append(row)
    return pd.DataFrame(rows)


def question_type_table(report: AccuracyReport) -> pd.DataFrame:
    df = pd.DataFrame(sorted(report.per_question_type.items()), columns=["Question Type", "Accuracy"])
    return df.sort_values(by="Accuracy", ascending=False, kind="mergesort").reset_index(drop=True)


def length_table(rows: Sequence[Mapping[str, Any]]) -> pd.DataFrame:
    df = pd.DataFrame(rows)
    if df.empty:
        return df
    df["Published Length"] = df["Mode"].map(PUBLISHED_LENGTHS)
    return df


def overlap_table(report: OverlapReport) -> pd.DataFrame:
    ratios = report.ratios()
    labels = {
        "both_correct": "Both correct", "only_a_correct": "Only A correct",
        "only_b_correct": "Only B correct", "both_wrong": "Both wrong",
    }
    return pd.DataFrame([
        {"Outcome": labels[bucket], "Count": getattr(report, bucket), "Ratio": round(ratios[bucket], 4)}
        for bucket in labels
    ])


# ========== EXPORT / CHARTS ========== #

def export_xlsx(path: str, sheets: Mapping[str, pd.DataFrame]) -> None:
    if not sheets:
        raise DataError("Nothing to export")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with pd.ExcelWriter(path, engine="xlsxwriter") as writer:
        for name, df in sheets.items():
            df.to_excel(writer, sheet_name=name[:31], index=False)
    logger.info(f"Wrote {len(sheets)} sheet(s) to {path}")


def accuracy_figure(df: pd.DataFrame):
    columns = [c for c in ACCURACY_COLUMNS if c in df.columns]
    long = df.melt(id_vars=["Input Data"], value_vars=columns, var_name="Category", value_name="Accuracy")
    return px.bar(long, x="Category", y="Accuracy", color="Input Data", barmode="group",
                  title="Accuracy by answer type")


def length_figure(df: pd.DataFrame):
    return px.bar(df, x="Image Description", y="Length", title="Mean description length (tokens)")


def overlap_figure(report: OverlapReport):
    return px.pie(overlap_table(report), names="Outcome", values="Count", title="Answer overlap")
