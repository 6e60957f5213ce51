"""Pure numpy versions of the compiled row kernels in ``_kernels.pyx``."""

import numpy as np


def softmax_rows(z):
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def temperature_softmax_rows(c, temperature):
    e = np.exp((c - c.max(axis=1, keepdims=True)) / temperature)
    return e / e.sum(axis=1, keepdims=True)


def sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def relu(z):
    return np.where(z > 0.0, z, 0.0)


def relu_backward(grad, z):
    return np.where(z > 0.0, grad, 0.0)


def soft_cross_entropy(target, pred, eps):
    p = np.clip(pred, eps, 1.0)
    return float(-(target * np.log(p)).sum(axis=1).mean())


def weighted_bce(pred, label, weight, eps):
    p = np.clip(pred, eps, 1.0 - eps)
    per = -(label * np.log(p) + (1.0 - label) * np.log(1.0 - p))
    return float((weight * per).sum() / weight.sum())


def mix_rows(weights, outputs):
    """weights (m, N), outputs (N, m, L) -> (m, L) with row i = sum_k w[i,k] out[k,i]."""
    return np.einsum("ik,kil->il", weights, outputs)
