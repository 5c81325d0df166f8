"""Report emission: per-epoch history CSV, final metrics JSON, confusion
matrix CSV, and the resolved-configuration run report.

All writers are deterministic byte-for-byte for identical inputs: floats
are rendered with repr (shortest round-trip), JSON keys are sorted, and no
timestamps or environment details are embedded.
"""

import json
from dataclasses import dataclass
from pathlib import Path

from .data import CLASSES

HISTORY_COLUMNS = (
    "epoch",
    "train_loss", "val_loss",
    "train_acc", "val_acc",
    "train_precision", "val_precision",
    "train_recall", "val_recall",
)


@dataclass(frozen=True)
class ReportBundle:
    """Everything the reporting surface emits after a run."""

    history: tuple       # tuple[EpochRecord, ...]
    final: object        # MetricsRecord
    confusion: object    # (3, 3) ndarray
    notes: tuple = ()    # flags such as zero-denominator warnings


def _fmt(x):
    return repr(float(x))


def history_csv_text(history):
    lines = [",".join(HISTORY_COLUMNS)]
    for rec in history:
        lines.append(",".join([
            str(rec.epoch),
            _fmt(rec.train_loss), _fmt(rec.val_loss),
            _fmt(rec.train_accuracy), _fmt(rec.val_accuracy),
            _fmt(rec.train_precision), _fmt(rec.val_precision),
            _fmt(rec.train_recall), _fmt(rec.val_recall),
        ]))
    return "\n".join(lines) + "\n"


def confusion_csv_text(cm):
    header = "true\\pred," + ",".join(CLASSES)
    lines = [header]
    for i, name in enumerate(CLASSES):
        lines.append(name + "," + ",".join(str(int(v)) for v in cm[i]))
    return "\n".join(lines) + "\n"


def final_metrics_json_text(record):
    payload = dict(record.to_json_dict())
    zero_flags = [
        name for name, vals in payload["per_class"].items()
        if vals["precision"] == 0.0 or vals["recall"] == 0.0
    ]
    if zero_flags:
        payload["zero_denominator_classes"] = sorted(zero_flags)
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def emit_report(bundle, out_dir):
    """Write history.csv, final_metrics.json, and confusion_matrix.csv.

    Returns the written paths. Emitting the same bundle twice produces
    byte-identical files.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "history": out / "history.csv",
        "final_metrics": out / "final_metrics.json",
        "confusion": out / "confusion_matrix.csv",
    }
    paths["history"].write_text(history_csv_text(bundle.history), encoding="utf-8")
    paths["final_metrics"].write_text(final_metrics_json_text(bundle.final), encoding="utf-8")
    paths["confusion"].write_text(confusion_csv_text(bundle.confusion), encoding="utf-8")
    return paths


def run_report_text(settings, dataset_summary, split_summary, history):
    """Human-readable record of every resolved setting plus per-epoch rows.

    ``settings`` is an ordered mapping of resolved config values (defaults
    included, so unstated choices are visible).
    """
    lines = ["# tumorgraph run report", "", "[settings]"]
    for key, value in settings.items():
        lines.append(f"{key} = {value}")
    lines += ["", "[dataset]", dataset_summary, split_summary, "", "[epochs]"]
    lines.append(" ".join(HISTORY_COLUMNS))
    for rec in history:
        lines.append(" ".join([
            str(rec.epoch),
            _fmt(rec.train_loss), _fmt(rec.val_loss),
            _fmt(rec.train_accuracy), _fmt(rec.val_accuracy),
            _fmt(rec.train_precision), _fmt(rec.val_precision),
            _fmt(rec.train_recall), _fmt(rec.val_recall),
        ]))
    if history:
        lines.append("")
        lines.append(f"epochs_run = {len(history)}")
    return "\n".join(lines) + "\n"


def write_run_report(path, settings, dataset_summary, split_summary, history):
    Path(path).write_text(
        run_report_text(settings, dataset_summary, split_summary, history),
        encoding="utf-8",
    )
