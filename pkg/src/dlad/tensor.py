"""Feed-forward MLP engine: forward pass, two losses, exact gradients and Adam.

Tensors are plain float64 numpy arrays in row-major order. Nothing in this
module draws random numbers except :func:`init_params`, which takes an
explicit generator.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import kernels
from .errors import NotStochasticError, ShapeError

LOG_EPS = 1e-12
STOCHASTIC_TOL = 1e-6

ACTIVATIONS = ("relu", "tanh")
HEADS = ("softmax", "sigmoid")
LOSSES = ("soft_ce", "weighted_bce")


@dataclass(frozen=True)
class ModelSpec:
    input_dim: int
    hidden: tuple[tuple[int, str], ...]
    output_dim: int
    head: str = "softmax"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple((int(w), str(a)) for w, a in self.hidden))
        if self.input_dim < 1 or self.output_dim < 1:
            raise ShapeError(f"input_dim and output_dim must be positive, got {self.input_dim}, {self.output_dim}")
        for width, act in self.hidden:
            if width < 1:
                raise ShapeError(f"hidden width must be positive, got {width}")
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}; expected one of {ACTIVATIONS}")
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}; expected one of {HEADS}")
        if self.head == "sigmoid" and self.output_dim != 1:
            raise ShapeError("a sigmoid head requires output_dim == 1")

    @property
    def layer_sizes(self) -> list[int]:
        return [self.input_dim] + [w for w, _ in self.hidden] + [self.output_dim]

    def with_sigmoid_head(self) -> "ModelSpec":
        """Same body, single sigmoid output unit."""
        return replace(self, output_dim=1, head="sigmoid")

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden": [list(h) for h in self.hidden],
            "output_dim": self.output_dim,
            "head": self.head,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(int(d["input_dim"]), tuple(tuple(h) for h in d["hidden"]), int(d["output_dim"]), d["head"])


@dataclass(frozen=True)
class ModelParams:
    """Per-layer weight matrices (fan_in x fan_out) and bias vectors."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    @classmethod
    def from_arrays(cls, arrays: Sequence[np.ndarray]) -> "ModelParams":
        return cls(tuple(arrays[0::2]), tuple(arrays[1::2]))

    def map(self, fn) -> "ModelParams":
        return ModelParams.from_arrays([fn(a) for a in self.arrays()])

    def copy(self) -> "ModelParams":
        return self.map(np.array)

    def freeze(self) -> "ModelParams":
        """Mark every array read-only in place and return self."""
        for a in self.arrays():
            a.setflags(write=False)
        return self

    def digest(self) -> str:
        h = hashlib.sha256()
        for a in self.arrays():
            h.update(str(a.shape).encode())
            h.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
        return h.hexdigest()

    def check(self, spec: ModelSpec) -> None:
        sizes = spec.layer_sizes
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ShapeError(f"expected {len(sizes) - 1} layers, got {len(self.weights)}")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[k], sizes[k + 1]) or b.shape != (sizes[k + 1],):
                raise ShapeError(
                    f"layer {k}: expected W{(sizes[k], sizes[k + 1])} b{(sizes[k + 1],)}, got W{w.shape} b{b.shape}"
                )


def zero_params(spec: ModelSpec) -> ModelParams:
    s = spec.layer_sizes
    return ModelParams(
        tuple(np.zeros((s[k], s[k + 1])) for k in range(len(s) - 1)),
        tuple(np.zeros(s[k + 1]) for k in range(len(s) - 1)),
    )


def init_layer(fan_in: int, fan_out: int, activation: str | None, rng: np.random.Generator) -> np.ndarray:
    # He scaling ahead of relu, Glorot-style 1/fan_in otherwise
    gain = 2.0 if activation == "relu" else 1.0
    return rng.normal(0.0, np.sqrt(gain / fan_in), size=(fan_in, fan_out))


def init_params(spec: ModelSpec, rng: np.random.Generator) -> ModelParams:
    """Fan-in scaled normal weights, zero biases."""
    s = spec.layer_sizes
    acts = [a for _, a in spec.hidden] + [None]
    weights = tuple(init_layer(s[k], s[k + 1], acts[k], rng) for k in range(len(s) - 1))
    biases = tuple(np.zeros(s[k + 1]) for k in range(len(s) - 1))
    return ModelParams(weights, biases)


def _check_batch(spec: ModelSpec, batch) -> np.ndarray:
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ShapeError(f"batch shape {x.shape} does not match input_dim={spec.input_dim}")
    return x


def _forward(spec: ModelSpec, params: ModelParams, x: np.ndarray):
    """Returns (head output, per-layer cache of (input, pre-activation, activation output))."""
    cache = []
    a = x
    n_layers = len(params.weights)
    for k in range(n_layers):
        z = a @ params.weights[k] + params.biases[k]
        if k < n_layers - 1:
            act = spec.hidden[k][1]
            out = kernels.relu(z) if act == "relu" else np.tanh(z)
        elif spec.head == "softmax":
            out = kernels.softmax_rows(z)
        else:
            out = kernels.sigmoid(z)
        cache.append((a, z, out))
        a = out
    return a, cache


def forward(spec: ModelSpec, params: ModelParams, batch) -> np.ndarray:
    """Evaluate the network on a (B, input_dim) batch; returns (B, output_dim)."""
    params.check(spec)
    x = _check_batch(spec, batch)
    return _forward(spec, params, x)[0]


def _check_stochastic(name: str, a: np.ndarray) -> None:
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    if a.size and (a.min() < -STOCHASTIC_TOL or np.abs(a.sum(axis=1) - 1.0).max() > STOCHASTIC_TOL):
        raise NotStochasticError(f"{name} rows are not probability vectors")


def soft_cross_entropy(target, pred) -> float:
    """Mean over rows of -sum(target * log(clamp(pred)))."""
    t = np.asarray(target, dtype=np.float64)
    p = np.asarray(pred, dtype=np.float64)
    if t.shape != p.shape:
        raise ShapeError(f"target shape {t.shape} != pred shape {p.shape}")
    _check_stochastic("target", t)
    _check_stochastic("pred", p)
    return kernels.soft_cross_entropy(t, p, LOG_EPS)


def _check_binary(pred, label, sample_weight):
    p = np.asarray(pred, dtype=np.float64).reshape(-1)
    y = np.asarray(label, dtype=np.float64).reshape(-1)
    w = np.ones_like(y) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64).reshape(-1)
    if not (p.shape == y.shape == w.shape):
        raise ShapeError(f"pred/label/weight lengths differ: {p.shape}, {y.shape}, {w.shape}")
    if np.any(w <= 0):
        raise ValueError("sample weights must be positive")
    if np.any((y != 0) & (y != 1)):
        raise ValueError("binary labels must be 0 or 1")
    return p, y, w


def weighted_binary_cross_entropy(pred, label, sample_weight=None) -> float:
    """Weighted mean BCE, normalized by the weight sum."""
    p, y, w = _check_binary(pred, label, sample_weight)
    return kernels.weighted_bce(p, y, w, LOG_EPS)


def _loss_and_grads(spec, params, x, loss, target, weight):
    out, cache = _forward(spec, params, x)
    if loss == "soft_ce":
        value = kernels.soft_cross_entropy(target, out, LOG_EPS)
        # exact for any nonnegative target, normalized or not
        delta = (out * target.sum(axis=1, keepdims=True) - target) / x.shape[0]
    else:
        p = out[:, 0]
        value = kernels.weighted_bce(p, target, weight, LOG_EPS)
        delta = ((weight * (p - target)) / weight.sum())[:, None]

    n_layers = len(params.weights)
    gw = [None] * n_layers
    gb = [None] * n_layers
    for k in range(n_layers - 1, -1, -1):
        a_in, z, _ = cache[k]
        gw[k] = a_in.T @ delta
        gb[k] = delta.sum(axis=0)
        if k > 0:
            da = delta @ params.weights[k].T
            _, z_prev, out_prev = cache[k - 1]
            if spec.hidden[k - 1][1] == "relu":
                delta = kernels.relu_backward(da, z_prev)
            else:
                delta = da * (1.0 - out_prev * out_prev)
    return value, ModelParams(tuple(gw), tuple(gb))


def backward(spec: ModelSpec, params: ModelParams, batch, loss: str, target, sample_weight=None):
    """Loss value and exact parameter gradients.

    ``loss="soft_ce"`` needs a softmax head and a row-stochastic (B, L) target.
    ``loss="weighted_bce"`` needs a sigmoid head, 0/1 labels of length B and
    optional positive weights. The log clamp is ignored by the gradient, so it
    is exact wherever the clamp is inactive.
    """
    params.check(spec)
    x = _check_batch(spec, batch)
    if loss == "soft_ce":
        if spec.head != "softmax":
            raise ValueError("soft_ce requires a softmax head")
        t = np.asarray(target, dtype=np.float64)
        if t.shape != (x.shape[0], spec.output_dim):
            raise ShapeError(f"target shape {t.shape} != {(x.shape[0], spec.output_dim)}")
        _check_stochastic("target", t)
        return _loss_and_grads(spec, params, x, loss, t, None)
    if loss == "weighted_bce":
        if spec.head != "sigmoid":
            raise ValueError("weighted_bce requires a sigmoid head")
        y = np.asarray(target, dtype=np.float64).reshape(-1)
        w = np.ones_like(y) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64).reshape(-1)
        _check_binary(np.full_like(y, 0.5), y, w)
        if y.shape[0] != x.shape[0]:
            raise ShapeError(f"{y.shape[0]} labels for a batch of {x.shape[0]}")
        return _loss_and_grads(spec, params, x, loss, y, w)
    raise ValueError(f"unknown loss {loss!r}; expected one of {LOSSES}")


@dataclass(frozen=True)
class AdamState:
    m: ModelParams
    v: ModelParams
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params: ModelParams, **hyper) -> "AdamState":
        zeros = params.map(np.zeros_like)
        return cls(zeros, params.map(np.zeros_like), **hyper)


def adam_step(params: ModelParams, grads: ModelParams, state: AdamState) -> tuple[ModelParams, AdamState]:
    """One bias-corrected Adam update. Inputs are not modified."""
    pa, ga, ma, va = params.arrays(), grads.arrays(), state.m.arrays(), state.v.arrays()
    if len(pa) != len(ga) or any(p.shape != g.shape for p, g in zip(pa, ga)):
        raise ShapeError("gradient shapes do not match parameter shapes")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(pa, ga, ma, va):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        new_p.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon))
        new_m.append(m)
        new_v.append(v)
    return ModelParams.from_arrays(new_p), replace(
        state, m=ModelParams.from_arrays(new_m), v=ModelParams.from_arrays(new_v), step=t
    )


@dataclass(frozen=True)
class TrainingHyper:
    epochs: int = 30
    batch_size: int = 64
    lr: float = 1e-3

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or not self.lr > 0:
            raise ValueError(f"invalid training hyperparameters {self}")
