"""Report serialization: ``report.json`` plus flat CSV side-files.

File set written by :func:`write_report`:

* ``report.json``: structured summary, both fitted trees, cluster models
* ``kpi_rules.csv`` / ``cause_rules.csv``: one rule per tree node
* ``confusion.csv``: KPI-tree confusion matrix (rows truth, columns prediction)
* ``anomalies.csv``: row id, labels, per-family flags, diagnosis
* ``cause_counts.csv``: composite-class, diagnosis and per-family counts
* ``scatter.csv``: RTT attribute vs KPI with a correct/anomalous marker

Every file is a deterministic function of the report, so reruns with the
same inputs are byte-identical.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .exceptions import UnknownRow
from .pipeline import UNSCORED, Report, composite_name

FORMAT = "netdiag-report/1"
REPORT_FILES = (
    "report.json",
    "kpi_rules.csv",
    "cause_rules.csv",
    "confusion.csv",
    "anomalies.csv",
    "cause_counts.csv",
    "scatter.csv",
)
RULE_FIELDS = ["node_id", "rule", "probability", "class", "support", "leaf", "low_support"]


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def report_to_dict(report: Report) -> dict:
    cfg = report.config.to_dict()
    cfg.pop("output_dir")
    return {
        "format": FORMAT,
        "config": cfg,
        "rows": {
            "total": report.n_rows,
            "classified": int(len(report.classified_ids)),
            "filtered_out": report.dropped["filtered"],
            "missing_kpi": report.dropped["missing_kpi"],
            "missing_rtt": report.dropped["missing_rtt"],
        },
        "split": {
            "low_q": report.split.low_q,
            "high_q": report.split.high_q,
            "low_threshold": report.split.low_threshold,
            "high_threshold": report.split.high_threshold,
        },
        "label_counts": report.label_counts,
        "kpi_tree": {
            "model": report.kpi_tree.to_dict(),
            "metrics": report.kpi_metrics.to_dict(),
            "holdout_metrics": None if report.holdout_metrics is None
            else report.holdout_metrics.to_dict(),
        },
        "anomaly_count": report.n_anomalies,
        "families": list(report.family_names),
        "clusters": {name: c.to_dict() for name, c in report.clusterings.items()},
        "cause_tree": {
            "model": report.cause_tree.to_dict(),
            "metrics": report.cause_metrics.to_dict(),
        },
        "cause_counts": report.cause_counts,
        "diagnosis_counts": report.diagnosis_counts,
        "family_problem_counts": report.family_counts,
    }


def _write_rows(path: Path, fields, rows):
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def _fmt(value: float) -> str:
    return repr(float(value))


def write_report(report: Report, out_dir, *, svg: bool = False) -> list:
    """Write the report file set into ``out_dir``; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / name for name in REPORT_FILES]
    text = json.dumps(report_to_dict(report), indent=2, default=_json_default)
    paths[0].write_text(text + "\n", encoding="utf-8")

    _write_rows(paths[1], RULE_FIELDS, report.kpi_rules.to_rows())
    _write_rows(paths[2], RULE_FIELDS, report.cause_rules.to_rows())

    classes = list(report.kpi_metrics.class_order)
    cm = report.kpi_metrics.confusion
    _write_rows(
        paths[3],
        ["true\\predicted"] + classes,
        [{"true\\predicted": c, **{p: int(cm[i, j]) for j, p in enumerate(classes)}}
         for i, c in enumerate(classes)],
    )

    names = list(report.family_names)
    fields = ["row_id", "true", "predicted"] + [f"{n}_flag" for n in names] + [
        "composite", "diagnosis", "cause_node", "probability"]
    rows = []
    for rec in report.anomalies:
        diag = report.diagnoses.get(rec.row_id)
        rows.append({
            "row_id": rec.row_id,
            "true": rec.true_label,
            "predicted": rec.predicted_label,
            **{f"{n}_flag": rec.flags.get(n, UNSCORED) for n in names},
            "composite": UNSCORED if rec.composite is None else composite_name(names, rec.composite),
            "diagnosis": UNSCORED if diag is None else diag.outcome,
            "cause_node": "" if diag is None else diag.rule.node_id,
            "probability": "" if diag is None else _fmt(diag.probability),
        })
    _write_rows(paths[4], fields, rows)

    counts = [{"source": "clustering", "cause": k, "count": v} for k, v in report.cause_counts.items()]
    counts += [{"source": "diagnosis", "cause": k, "count": v} for k, v in report.diagnosis_counts.items()]
    counts += [{"source": "family_problem", "cause": k, "count": v} for k, v in report.family_counts.items()]
    _write_rows(paths[5], ["source", "cause", "count"], counts)

    kpi_col = report.config.schema.kpi_column
    attr = report.config.scatter_attribute
    _write_rows(
        paths[6],
        ["row_id", attr, kpi_col, "true", "predicted", "marker"],
        [{**s, attr: _fmt(s[attr]), kpi_col: _fmt(s[kpi_col])} for s in report.scatter],
    )

    if svg:
        paths.extend(write_report_svgs(report, out))
    return paths


# --- figures --------------------------------------------------------------------------


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "netdiag"
    return plt


def _save_svg(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})


def write_report_svgs(report: Report, out: Path) -> list:
    plt = _pyplot()
    kpi_col = report.config.schema.kpi_column
    attr = report.config.scatter_attribute
    paths = []

    fig, ax = plt.subplots(figsize=(6, 4))
    for marker, color in (("correct", "black"), ("anomalous", "red")):
        pts = [s for s in report.scatter if s["marker"] == marker]
        ax.scatter([p[attr] for p in pts], [p[kpi_col] for p in pts], s=4, c=color, label=marker)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(attr)
    ax.set_ylabel(kpi_col)
    ax.legend()
    path = out / "kpi_scatter.svg"
    _save_svg(fig, path)
    plt.close(fig)
    paths.append(path)

    fig, ax = plt.subplots(figsize=(6, 4))
    by_row = {s["row_id"]: s for s in report.scatter}
    outcomes = sorted({d.outcome for d in report.diagnoses.values()})
    for outcome in outcomes:
        pts = [by_row[r] for r, d in sorted(report.diagnoses.items()) if d.outcome == outcome]
        ax.scatter([p[attr] for p in pts], [p[kpi_col] for p in pts], s=6, label=outcome)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(attr)
    ax.set_ylabel(kpi_col)
    ax.legend(fontsize="small")
    path = out / "cause_scatter.svg"
    _save_svg(fig, path)
    plt.close(fig)
    paths.append(path)
    return paths


def write_sweep_svg(scores, path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    depths = [s.depth for s in scores]
    ax.plot(depths, [s.mean for s in scores], marker="o", color="black")
    ax.fill_between(depths, [s.ci_low for s in scores], [s.ci_high for s in scores], alpha=0.3)
    ax.set_xlabel("tree depth")
    ax.set_ylabel("accuracy")
    _save_svg(fig, path)
    plt.close(fig)


# --- reading back ------------------------------------------------------------------------


def read_rows(path) -> list:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def explain(report_dir, row_id: int) -> str:
    """Human-readable diagnosis of one anomalous row from a written report."""
    report_dir = Path(report_dir)
    anomalies = {int(r["row_id"]): r for r in read_rows(report_dir / "anomalies.csv")}
    if row_id not in anomalies:
        raise UnknownRow(f"row {row_id} is not an anomaly in {report_dir}")
    rec = anomalies[row_id]
    lines = [f"row {row_id}: true {rec['true']}, predicted {rec['predicted']} (anomaly)"]
    flags = [f"{k[:-5]}={v}" for k, v in rec.items() if k.endswith("_flag")]
    lines.append("clustering flags: " + ", ".join(flags))
    if not rec["cause_node"]:
        lines.append("diagnosis: unscored (missing cause-tree attributes)")
        return "\n".join(lines)
    rules = {int(r["node_id"]): r for r in read_rows(report_dir / "cause_rules.csv")}
    rule = rules[int(rec["cause_node"])]
    text = rule["rule"]
    if text.startswith("If "):
        first, *rest = text.split(" and ")
        lines.append(first)
        lines.extend(f"  and {part}" for part in rest)
    else:
        lines.append(text)
    lines.append(f"diagnosis: {rec['diagnosis']}")
    lines.append(f"=> {rule['class']} (probability {rule['probability']}, support {rule['support']})")
    return "\n".join(lines)
