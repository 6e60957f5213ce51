"""Server side: distill a global model from aggregated soft targets."""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field

import numpy as np

from .aggregation import MODES, SoftTargetSet, build_soft_targets, client_outputs
from .client import _eval_record
from .data import LabeledDataset, PartitionPlan, UnlabeledPool
from .errors import NotStochasticError, ShapeError
from .rng import stream
from .tensor import STOCHASTIC_TOL, ModelParams, ModelSpec, TrainingHyper, forward, init_params
from .training import fit

REPORT_WINDOW = 10


@dataclass(frozen=True, eq=False)
class GlobalModel:
    spec: ModelSpec
    params: ModelParams

    def predict(self, x) -> np.ndarray:
        return forward(self.spec, self.params, x)


@dataclass(eq=False)
class DistillationRun:
    mode: str
    hyper: TrainingHyper
    records: list[dict] = field(default_factory=list)
    model: GlobalModel | None = None

    def test_accuracies(self) -> list[float]:
        return [r["accuracy"] for r in self.records if r["split"] == "test"]

    def reported_accuracy(self) -> float:
        """Median test accuracy over the last ten epochs (or all, if fewer)."""
        return median_last(self.test_accuracies())


def median_last(values, window: int = REPORT_WINDOW) -> float:
    if not values:
        raise ValueError("no values to summarize")
    return float(statistics.median(list(values)[-window:]))


def _fit_global(x, target, spec, hyper, seed, test, entity):
    rng = stream(seed)
    params = init_params(spec, rng)
    records = []

    def on_epoch(epoch, p, mean_loss):
        records.append({"stage": "global", "entity": entity, "epoch": epoch, "split": "train",
                        "loss": mean_loss, "accuracy": None})
        if test is not None:
            records.append(_eval_record("global", entity, epoch, "test", spec, p, test))

    params, _ = fit(spec, params, x, target, hyper, rng, "soft_ce", on_epoch=on_epoch, what=f"global model ({entity})")
    return GlobalModel(spec, params), records


def _check_global_spec(spec: ModelSpec, n_classes: int):
    if spec.head != "softmax" or spec.output_dim != n_classes:
        raise ValueError(f"global model needs a softmax head with {n_classes} outputs")


def train_global(
    pool: UnlabeledPool,
    targets: SoftTargetSet,
    spec: ModelSpec,
    hyper: TrainingHyper,
    test: LabeledDataset | None,
    seed: int,
) -> tuple[GlobalModel, DistillationRun]:
    """Minimize soft cross-entropy between the targets and the global model over the pool."""
    t = targets.targets
    if t.shape[0] != len(pool):
        raise ShapeError(f"{t.shape[0]} target rows for a pool of {len(pool)}")
    if t.size and (t.min() < -STOCHASTIC_TOL or np.abs(t.sum(axis=1) - 1.0).max() > STOCHASTIC_TOL):
        raise NotStochasticError("soft targets are not row-stochastic")
    _check_global_spec(spec, t.shape[1])
    model, records = _fit_global(pool.features, t, spec, hyper, seed, test, targets.mode)
    return model, DistillationRun(targets.mode, hyper, records, model)


def supervised_distill(
    labeled_data: LabeledDataset,
    teacher,
    spec: ModelSpec,
    lam: float,
    hyper: TrainingHyper,
    seed: int,
) -> GlobalModel:
    """Imitate ``teacher`` on labeled data with an added ``lam`` x one-hot cross-entropy term.

    Both terms share the student's softmax, so the objective is a single soft
    cross-entropy against ``teacher(x) + lam * onehot(y)``.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    teacher_out = teacher.predict(labeled_data.features)
    if teacher_out.shape[1] != spec.output_dim:
        raise ShapeError(f"teacher emits {teacher_out.shape[1]} classes, student {spec.output_dim}")
    _check_global_spec(spec, labeled_data.n_classes)
    target = teacher_out + lam * labeled_data.one_hot()
    model, _ = _fit_global(labeled_data.features, target, spec, hyper, seed, None, "supervised")
    return model


def run_comparison(
    pool: UnlabeledPool,
    bundles,
    plan: PartitionPlan | None,
    modes,
    spec: ModelSpec,
    hyper: TrainingHyper,
    temperature: float,
    test: LabeledDataset | None,
    seed: int,
    outputs: np.ndarray | None = None,
) -> dict[str, DistillationRun]:
    """Train one global model per aggregation mode; only the soft targets differ between runs."""
    modes = list(modes)
    bad = [m for m in modes if m not in MODES]
    if bad:
        raise ValueError(f"unknown modes {bad}; expected a subset of {MODES}")
    bundles = list(bundles)
    if outputs is None:
        outputs = client_outputs(pool.features, bundles)
    runs = {}
    for mode in modes:
        targets = build_soft_targets(pool, bundles, mode, temperature, plan=plan, outputs=outputs)
        _, run = train_global(pool, targets, spec, hyper, test, seed)
        runs[mode] = run
    return runs
