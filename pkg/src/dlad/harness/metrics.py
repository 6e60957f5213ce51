"""Metrics and summary CSV files."""

from __future__ import annotations

import csv
import io
import statistics
from dataclasses import dataclass

from ..aggregation import MODES
from ..errors import FormatError

METRICS_SCHEMA = "dlad-metrics/v1"
SUMMARY_SCHEMA = "dlad-summary/v1"
METRICS_COLUMNS = ("run_id", "stage", "entity_id", "epoch", "split", "loss", "accuracy")
SUMMARY_COLUMNS = ("run_id", "stage", "entity", "accuracy", "final_loss", "epochs_used", "short_run")
STAGES = ("client", "classifier", "global")
WINDOW = 10


@dataclass(frozen=True)
class MetricsRecord:
    run_id: str
    stage: str
    entity_id: str
    epoch: int
    split: str
    loss: float
    accuracy: float | None

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")
        if self.split not in ("train", "test"):
            raise ValueError(f"unknown split {self.split!r}")
        if self.accuracy is not None and not 0.0 <= self.accuracy <= 1.0:
            raise ValueError(f"accuracy {self.accuracy} outside [0, 1]")
        if self.loss < 0:
            raise ValueError(f"negative loss {self.loss}")


def fmt(x) -> str:
    return "" if x is None else f"{x:.9g}"


def entity_key(stage: str, entity: str):
    if stage == "global":
        return (0, MODES.index(entity) if entity in MODES else len(MODES), entity)
    try:
        return (0, int(entity), "")
    except ValueError:
        return (1, 0, entity)


def sort_key(r: MetricsRecord):
    return (r.run_id, STAGES.index(r.stage), entity_key(r.stage, r.entity_id), r.epoch, r.split)


def metrics_csv(records) -> str:
    rows = sorted(records, key=sort_key)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_COLUMNS)
    for r in rows:
        w.writerow([r.run_id, r.stage, r.entity_id, r.epoch, r.split, fmt(r.loss), fmt(r.accuracy)])
    return buf.getvalue()


def read_metrics(text: str) -> list[MetricsRecord]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if tuple(header or ()) != METRICS_COLUMNS:
        raise FormatError(f"metrics header must be {','.join(METRICS_COLUMNS)}")
    out = []
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(METRICS_COLUMNS):
            raise FormatError(f"metrics line {lineno}: expected {len(METRICS_COLUMNS)} fields")
        run_id, stage, entity, epoch, split, loss, acc = row
        out.append(MetricsRecord(run_id, stage, entity, int(epoch), split, float(loss), float(acc) if acc else None))
    return out


def emit_summary(records) -> list[dict]:
    """One row per (run, stage, entity) with test accuracies: median of the last ten epochs.

    Entities with fewer than ten test epochs use all of them and set
    ``short_run``. ``final_loss`` is the last training-split loss.
    """
    groups: dict = {}
    for r in sorted(records, key=sort_key):
        g = groups.setdefault((r.run_id, r.stage, r.entity_id), {"test": [], "train_loss": None})
        if r.split == "test" and r.accuracy is not None:
            g["test"].append(r.accuracy)
        elif r.split == "train":
            g["train_loss"] = r.loss
    rows = []
    for (run_id, stage, entity), g in groups.items():
        if not g["test"]:
            continue
        window = g["test"][-WINDOW:]
        rows.append(
            {
                "run_id": run_id,
                "stage": stage,
                "entity": entity,
                "accuracy": float(statistics.median(window)),
                "final_loss": g["train_loss"],
                "epochs_used": len(window),
                "short_run": int(len(g["test"]) < WINDOW),
            }
        )
    return rows


def summary_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for r in rows:
        w.writerow([r["run_id"], r["stage"], r["entity"], fmt(r["accuracy"]), fmt(r["final_loss"]),
                    r["epochs_used"], r["short_run"]])
    return buf.getvalue()


def read_summary(text: str) -> list[dict]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != SUMMARY_COLUMNS:
        raise FormatError(f"summary header must be {','.join(SUMMARY_COLUMNS)}")
    out = []
    for row in reader:
        row["accuracy"] = float(row["accuracy"])
        row["final_loss"] = float(row["final_loss"]) if row["final_loss"] else None
        row["epochs_used"] = int(row["epochs_used"])
        row["short_run"] = int(row["short_run"])
        out.append(row)
    return out
