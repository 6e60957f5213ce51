"""Client side: train each local model, then its data-vs-pool confidence classifier."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .data import LabeledDataset, UnlabeledPool
from .rng import stream
from .tensor import (
    LOG_EPS,
    ModelParams,
    ModelSpec,
    TrainingHyper,
    forward,
    init_layer,
    init_params,
)
from . import kernels
from .training import fit

POSITIVE_WEIGHT = 1.5


@dataclass(frozen=True, eq=False)
class ClientBundle:
    client_id: int
    model_spec: ModelSpec
    model_params: ModelParams
    class_probability: np.ndarray | None = None
    classifier_spec: ModelSpec | None = None
    classifier_params: ModelParams | None = None
    arch: str = ""
    train_accuracy: float = math.nan
    history: tuple[dict, ...] = field(default=(), repr=False)

    @property
    def has_classifier(self) -> bool:
        return self.classifier_params is not None

    def predict(self, x) -> np.ndarray:
        return forward(self.model_spec, self.model_params, x)

    def confidence(self, x) -> np.ndarray:
        """Classifier output C_i(x) for each row of ``x``."""
        if not self.has_classifier:
            raise ValueError(f"client {self.client_id} has no confidence classifier")
        return forward(self.classifier_spec, self.classifier_params, x)[:, 0]


def evaluate_accuracy(spec: ModelSpec, params: ModelParams, test: LabeledDataset) -> float:
    """Fraction of rows whose argmax (lowest index on ties) equals the label."""
    if len(test) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    pred = np.argmax(forward(spec, params, test.features), axis=1)
    return float(np.mean(pred == test.labels))


def _eval_record(stage, entity, epoch, split, spec, params, data: LabeledDataset):
    out = forward(spec, params, data.features)
    loss = kernels.soft_cross_entropy(data.one_hot(), out, LOG_EPS)
    acc = float(np.mean(np.argmax(out, axis=1) == data.labels))
    return {"stage": stage, "entity": entity, "epoch": epoch, "split": split, "loss": loss, "accuracy": acc}


def train_client(
    dataset: LabeledDataset,
    spec: ModelSpec,
    hyper: TrainingHyper,
    seed: int,
    *,
    client_id: int = 0,
    class_probability=None,
    test: LabeledDataset | None = None,
    arch: str = "",
) -> ClientBundle:
    """Stage 1: one-hot cross-entropy on the client's own data. Params come back frozen."""
    if spec.head != "softmax" or spec.output_dim != dataset.n_classes:
        raise ValueError(f"client model needs a softmax head with {dataset.n_classes} outputs")
    if len(dataset) == 0:
        raise ValueError("client dataset is empty")
    rng = stream(seed)
    params = init_params(spec, rng)
    records = []

    def on_epoch(epoch, p, mean_loss):
        rec = _eval_record("client", client_id, epoch, "train", spec, p, dataset)
        rec["loss"] = mean_loss
        records.append(rec)
        if test is not None:
            records.append(_eval_record("client", client_id, epoch, "test", spec, p, test))

    params, _ = fit(
        spec, params, dataset.features, dataset.one_hot(), hyper, rng, "soft_ce",
        on_epoch=on_epoch, what=f"client {client_id}",
    )
    params.freeze()
    return ClientBundle(
        client_id=client_id,
        model_spec=spec,
        model_params=params,
        class_probability=None if class_probability is None else np.asarray(class_probability, dtype=np.float64),
        arch=arch,
        train_accuracy=evaluate_accuracy(spec, params, dataset),
        history=tuple(records),
    )


def classifier_init(bundle: ClientBundle, rng: np.random.Generator) -> tuple[ModelSpec, ModelParams]:
    """Client body weights (copied) under a freshly drawn single sigmoid unit."""
    spec = bundle.model_spec.with_sigmoid_head()
    weights = [np.array(w) for w in bundle.model_params.weights[:-1]]
    biases = [np.array(b) for b in bundle.model_params.biases[:-1]]
    fan_in = spec.layer_sizes[-2]
    weights.append(init_layer(fan_in, 1, None, rng))
    biases.append(np.zeros(1))
    return spec, ModelParams(tuple(weights), tuple(biases))


def train_confidence_classifier(
    bundle: ClientBundle,
    client_features,
    pool: UnlabeledPool,
    hyper: TrainingHyper,
    seed: int,
    *,
    positive_weight: float = POSITIVE_WEIGHT,
) -> ClientBundle:
    """Stage 2: sigmoid classifier separating the client's data (label 1) from the pool (label 0).

    Positives carry ``positive_weight``, pool samples weight 1. Only pool
    features are read; the pool's labels are never touched.
    """
    x_pos = np.asarray(client_features, dtype=np.float64)
    x_neg = pool.features
    if len(x_neg) == 0:
        raise ValueError("distillation pool is empty")
    if positive_weight <= 0:
        raise ValueError("positive_weight must be positive")
    rng = stream(seed)
    spec, params = classifier_init(bundle, rng)
    x = np.concatenate([x_pos, x_neg])
    y = np.concatenate([np.ones(len(x_pos)), np.zeros(len(x_neg))])
    w = np.concatenate([np.full(len(x_pos), positive_weight), np.ones(len(x_neg))])
    records = []

    def on_epoch(epoch, p, mean_loss):
        acc = float(np.mean((forward(spec, p, x)[:, 0] >= 0.5) == (y == 1)))
        records.append(
            {"stage": "classifier", "entity": bundle.client_id, "epoch": epoch, "split": "train",
             "loss": mean_loss, "accuracy": acc}
        )

    params, _ = fit(spec, params, x, y, hyper, rng, "weighted_bce", weight=w, on_epoch=on_epoch,
                    what=f"classifier {bundle.client_id}")
    params.freeze()
    return replace(bundle, classifier_spec=spec, classifier_params=params, history=bundle.history + tuple(records))
