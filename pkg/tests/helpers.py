"""Independent oracles shared by the unit and acceptance tests."""

import numpy as np

from dlad.tensor import ModelParams, ModelSpec, forward, soft_cross_entropy, weighted_binary_cross_entropy

# (input_dim, hidden, output_dim, head): three bodies x both heads
GRAD_SHAPES = [
    (3, (), 4, "softmax"),
    (4, ((5, "tanh"),), 3, "softmax"),
    (5, ((6, "relu"), (4, "tanh")), 4, "softmax"),
    (3, (), 1, "sigmoid"),
    (4, ((5, "tanh"),), 1, "sigmoid"),
    (5, ((6, "relu"), (4, "tanh")), 1, "sigmoid"),
]


def random_loss_inputs(spec: ModelSpec, rng, batch=6):
    x = rng.normal(size=(batch, spec.input_dim))
    if spec.head == "softmax":
        return x, "soft_ce", rng.dirichlet(np.ones(spec.output_dim), size=batch), None
    labels = rng.integers(0, 2, size=batch).astype(float)
    return x, "weighted_bce", labels, rng.uniform(0.5, 2.0, size=batch)


def loss_value(spec, params, x, loss, target, weight):
    out = forward(spec, params, x)
    if loss == "soft_ce":
        return soft_cross_entropy(target, out)
    return weighted_binary_cross_entropy(out[:, 0], target, weight)


def finite_difference_grads(spec, params, x, loss, target, weight, h=1e-5):
    """Central differences through the public forward pass and loss functions."""
    arrays = [np.array(a, dtype=np.float64) for a in params.arrays()]
    out = []
    for k, a in enumerate(arrays):
        g = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            orig = a[idx]
            a[idx] = orig + h
            up = loss_value(spec, ModelParams.from_arrays(arrays), x, loss, target, weight)
            a[idx] = orig - h
            down = loss_value(spec, ModelParams.from_arrays(arrays), x, loss, target, weight)
            a[idx] = orig
            g[idx] = (up - down) / (2 * h)
        out.append(g)
    return ModelParams.from_arrays(out)


def max_relative_error(analytic: ModelParams, numeric: ModelParams, floor=1e-7) -> float:
    worst = 0.0
    for a, n in zip(analytic.arrays(), numeric.arrays()):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float((np.abs(a - n) / denom).max()))
    return worst
