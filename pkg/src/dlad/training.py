"""Shared mini-batch Adam loop used by every training stage."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .errors import TrainingDivergedError
from .tensor import AdamState, ModelParams, ModelSpec, TrainingHyper, _loss_and_grads, adam_step

DIVERGENCE_LIMIT = 1e6


def fit(
    spec: ModelSpec,
    params: ModelParams,
    x: np.ndarray,
    target: np.ndarray,
    hyper: TrainingHyper,
    rng: np.random.Generator,
    loss: str,
    weight: np.ndarray | None = None,
    on_epoch: Callable[[int, ModelParams, float], None] | None = None,
    what: str = "model",
) -> tuple[ModelParams, list[float]]:
    """Run ``hyper.epochs`` shuffled passes over (x, target).

    ``rng`` is consumed only for the per-epoch permutation. ``on_epoch`` gets
    (1-based epoch, params after the epoch, mean training loss). Returns the
    final params and the per-epoch mean losses.
    """
    n = x.shape[0]
    state = AdamState.for_params(params, lr=hyper.lr)
    losses = []
    for epoch in range(1, hyper.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, hyper.batch_size):
            idx = order[start : start + hyper.batch_size]
            w = None if weight is None else weight[idx]
            value, grads = _loss_and_grads(spec, params, x[idx], loss, target[idx], w)
            if not math.isfinite(value) or value > DIVERGENCE_LIMIT:
                raise TrainingDivergedError(what, epoch, value)
            params, state = adam_step(params, grads, state)
            total += value * len(idx)
        mean = total / n
        losses.append(mean)
        if on_epoch is not None:
            on_epoch(epoch, params, mean)
    return params, losses
