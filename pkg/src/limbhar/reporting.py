"""On-disk report tree for cross-validation sweeps.

Layout under the output directory::

    comparison.csv                 rows = architectures, columns = modalities
    comparison.json                the same numbers at full precision
    <ARCH>_<modality>/report.json  full CVReport
    <ARCH>_<modality>/confusion.svg (+ .csv)   pooled over folds
    <ARCH>_<modality>/fold<k>/metrics.json, history.csv, confusion.svg (+ .csv)

Nothing written here depends on wall-clock time, so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .metrics import ConfusionMatrix, render_confusion
from .models import ArchKind
from .records import MODALITIES


def pair_name(arch: str, modality: str) -> str:
    return f"{arch}_{modality}"


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def write_history_csv(path: Path, history: dict) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "val_loss", "val_macro_f1"])
        for rec in history["epochs"]:
            writer.writerow([rec["epoch"], repr(rec["train_loss"]), repr(rec["val_loss"]), repr(rec["val_macro_f1"])])


def write_pair(out_dir: Path, report: dict, class_names: Sequence[str]) -> Path:
    """Write one architecture/modality report dict (``CVReport.to_dict()`` plus activities)."""
    pair_dir = out_dir / pair_name(report["architecture"], report["modality"])
    pair_dir.mkdir(parents=True, exist_ok=True)
    report = dict(report, activities=list(class_names))
    write_json(pair_dir / "report.json", report)
    title = f"{report['architecture']} / {report['modality']}"
    for fold in report["folds"]:
        fold_dir = pair_dir / f"fold{fold['fold']}"
        fold_dir.mkdir(exist_ok=True)
        write_json(fold_dir / "metrics.json", {k: fold[k] for k in ("fold", "test_subjects", "val_subjects", "train_subjects", "error", "metrics")})
        if fold["history"] is not None:
            write_history_csv(fold_dir / "history.csv", fold["history"])
        if fold["metrics"] is not None:
            cm = ConfusionMatrix(np.array(fold["metrics"]["confusion"], dtype=np.int64))
            render_confusion(cm, class_names, fold_dir / "confusion.svg", f"{title} fold {fold['fold']}")
    if report["aggregate"] is not None:
        pooled = ConfusionMatrix(np.array(report["aggregate"]["pooled"]["confusion"], dtype=np.int64))
        render_confusion(pooled, class_names, pair_dir / "confusion.svg", f"{title} pooled")
    return pair_dir


def format_cell(agg: Optional[dict]) -> str:
    if agg is None:
        return "failed"
    return f"{agg['mean_macro_f1']:.4f} ± {agg['std_macro_f1']:.4f}"


def write_comparison(out_dir: Path, reports: Sequence[dict]) -> list:
    """Mean macro-F1 ± population std per architecture (rows) and modality (columns)."""
    cells = {(rep["architecture"], rep["modality"]): rep["aggregate"] for rep in reports}
    order = [k.value for k in ArchKind]
    archs = sorted({a for a, _ in cells}, key=lambda a: (order.index(a) if a in order else len(order), a))
    mods = sorted({m for _, m in cells}, key=lambda m: (MODALITIES.index(m) if m in MODALITIES else len(MODALITIES), m))
    rows = [["architecture", *mods]]
    for a in archs:
        rows.append([a, *(format_cell(cells[(a, m)]) if (a, m) in cells else "" for m in mods)])
    with open(out_dir / "comparison.csv", "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)
    full = [
        {
            "architecture": a,
            "modality": m,
            "mean_macro_f1": None if cells[(a, m)] is None else cells[(a, m)]["mean_macro_f1"],
            "std_macro_f1": None if cells[(a, m)] is None else cells[(a, m)]["std_macro_f1"],
            "mean_accuracy": None if cells[(a, m)] is None else cells[(a, m)]["mean_accuracy"],
            "pooled_macro_f1": None if cells[(a, m)] is None else cells[(a, m)]["pooled"]["macro_f1"],
        }
        for a in archs
        for m in mods
        if (a, m) in cells
    ]
    write_json(out_dir / "comparison.json", full)
    return rows


def read_reports(out_dir: Path) -> list:
    return [json.loads(p.read_text(encoding="utf-8")) for p in sorted(Path(out_dir).glob("*/report.json"))]


def format_table(rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows)
