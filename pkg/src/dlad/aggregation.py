"""Confidence-weighted aggregation of client outputs into soft targets.

Three weighting modes produce one probability row per pool sample:

* ``dlad``: temperature softmax over the clients' classifier outputs.
* ``average``: uniform weights.
* ``oracle``: temperature softmax over the ideal classifier outputs
  p_i / (p_dist + p_i), evaluated at class level from the sample's hidden
  label. This is the only mode that reads the pool's labels.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .data import PartitionPlan, UnlabeledPool, class_frequencies
from .errors import FormatError, ShapeError

MODES = ("dlad", "average", "oracle")
SIMPLEX_TOL = 1e-9


def optimal_confidence(p_i_mass: float, p_dist_mass: float) -> float:
    """Output of a perfectly trained data-vs-pool discriminator."""
    if p_i_mass < 0 or p_dist_mass < 0:
        raise ValueError("probability masses must be nonnegative")
    if p_dist_mass == 0:
        raise ValueError("sample must lie in the pool's support (p_dist_mass > 0)")
    return p_i_mass / (p_dist_mass + p_i_mass)


def _check_temperature(temperature: float) -> float:
    t = float(temperature)
    if not t > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    return t


def confidence_weights_batch(conf, temperature: float) -> np.ndarray:
    """Row-wise confidence_weights for an (m, N) matrix of confidences."""
    c = np.asarray(conf, dtype=np.float64)
    if c.ndim != 2 or c.shape[1] < 1:
        raise ShapeError(f"expected an (m, N>=1) confidence matrix, got {c.shape}")
    return kernels.temperature_softmax_rows(c, _check_temperature(temperature))


def confidence_weights(conf, temperature: float) -> np.ndarray:
    """w_i = exp(c_i / T) / sum_j exp(c_j / T), with max-subtraction."""
    c = np.asarray(conf, dtype=np.float64).reshape(1, -1)
    return confidence_weights_batch(c, temperature)[0]


def average_weights(n_clients: int) -> np.ndarray:
    if n_clients < 1:
        raise ValueError("need at least one client")
    return np.full(n_clients, 1.0 / n_clients)


def aggregate_targets_batch(weights, client_outputs) -> np.ndarray:
    """weights (m, N), client_outputs (N, m, L) -> (m, L) convex combinations."""
    w = np.asarray(weights, dtype=np.float64)
    out = np.asarray(client_outputs, dtype=np.float64)
    if out.ndim != 3 or w.shape != (out.shape[1], out.shape[0]):
        raise ShapeError(f"weights {w.shape} do not match client outputs {out.shape} (N, m, L)")
    return kernels.mix_rows(w, out)


def aggregate_targets(weights, client_outputs: Sequence) -> np.ndarray:
    """Convex combination sum_i w_i * M_i(x) for a single sample."""
    w = np.asarray(weights, dtype=np.float64)
    rows = [np.asarray(r, dtype=np.float64) for r in client_outputs]
    if len({r.shape for r in rows}) != 1 or rows[0].ndim != 1:
        raise ShapeError("every client must emit a probability vector over the same classes")
    if w.shape != (len(rows),):
        raise ShapeError(f"{w.shape[0]} weights for {len(rows)} clients")
    return aggregate_targets_batch(w[None, :], np.stack(rows)[:, None, :])[0]


def oracle_confidences(labels, plan: PartitionPlan, pool_freq) -> np.ndarray:
    """(m, N) ideal classifier outputs from class masses."""
    labels = np.asarray(labels, dtype=np.int64)
    freq = np.asarray(pool_freq, dtype=np.float64)
    if np.any(freq[labels] <= 0):
        raise ValueError("a sample's class has zero frequency in the pool")
    p = np.stack(plan.probabilities)  # (N, L)
    p_i = p[:, labels].T  # (m, N)
    p_dist = freq[labels][:, None]
    return p_i / (p_dist + p_i)


def oracle_weights(hidden_label: int, plan: PartitionPlan, pool_freq, temperature: float) -> np.ndarray:
    c = oracle_confidences([hidden_label], plan, pool_freq)
    return confidence_weights_batch(c, temperature)[0]


@dataclass(frozen=True)
class SoftTargetSet:
    targets: np.ndarray
    mode: str
    temperature: float
    weights: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.targets, dtype=np.float64)
        if t.ndim != 2:
            raise ShapeError(f"targets must be 2-D, got {t.shape}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        t.setflags(write=False)
        object.__setattr__(self, "targets", t)

    def __len__(self):
        return self.targets.shape[0]

    def max_simplex_error(self) -> float:
        return float(np.abs(self.targets.sum(axis=1) - 1.0).max()) if len(self) else 0.0


def client_outputs(pool_features, bundles) -> np.ndarray:
    """(N, m, L) stack of each client model's predictions on the pool."""
    outs = [b.predict(pool_features) for b in bundles]
    if len({o.shape for o in outs}) != 1:
        raise ShapeError("clients disagree on the number of output classes")
    return np.stack(outs)


def build_soft_targets(
    pool: UnlabeledPool,
    bundles,
    mode: str,
    temperature: float,
    plan: PartitionPlan | None = None,
    pool_freq=None,
    outputs: np.ndarray | None = None,
) -> SoftTargetSet:
    """Aggregate client predictions over the pool under one weighting mode.

    ``outputs`` may pass a precomputed :func:`client_outputs` stack so that
    several modes share one set of client forward passes. ``pool_freq`` is
    computed from the hidden labels when omitted in oracle mode.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    temperature = _check_temperature(temperature)
    bundles = list(bundles)
    if not bundles:
        raise ValueError("need at least one client")
    x = pool.features
    if outputs is None:
        outputs = client_outputs(x, bundles)
    m = len(pool)

    if mode == "dlad":
        missing = [b.client_id for b in bundles if not b.has_classifier]
        if missing:
            raise ValueError(f"dlad mode needs trained classifiers; missing for clients {missing}")
        conf = np.stack([b.confidence(x) for b in bundles], axis=1)
        weights = confidence_weights_batch(conf, temperature)
    elif mode == "average":
        weights = np.tile(average_weights(len(bundles)), (m, 1))
    else:
        if plan is None:
            raise ValueError("oracle mode needs the partition plan")
        if plan.n_clients != len(bundles):
            raise ValueError(f"plan has {plan.n_clients} clients, got {len(bundles)} bundles")
        if pool_freq is None:
            pool_freq = class_frequencies(pool)
        weights = confidence_weights_batch(oracle_confidences(pool.hidden_labels, plan, pool_freq), temperature)

    targets = aggregate_targets_batch(weights, outputs)
    return SoftTargetSet(targets, mode, temperature, weights)


def write_soft_targets(targets: SoftTargetSet, path) -> None:
    """Header ``m L mode T``, then one row of L probabilities per line."""
    m, n_classes = targets.targets.shape
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{m} {n_classes} {targets.mode} {targets.temperature!r}\n")
        for row in targets.targets:
            f.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_soft_targets(path) -> SoftTargetSet:
    with open(path, encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 4:
            raise FormatError(f"{path}: header must be 'm L mode T'")
        m, n_classes, mode, temperature = int(header[0]), int(header[1]), header[2], float(header[3])
        rows = np.empty((m, n_classes))
        for i in range(m):
            parts = f.readline().split()
            if len(parts) != n_classes:
                raise FormatError(f"{path}:{i + 2}: expected {n_classes} values, got {len(parts)}")
            rows[i] = [float(v) for v in parts]
    return SoftTargetSet(rows, mode, temperature)
