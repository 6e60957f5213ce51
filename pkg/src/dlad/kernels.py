"""Backend selection for the row kernels.

The compiled extension ``dlad._kernels`` is used when it imports; otherwise
the numpy implementations in ``dlad._fallback`` are used. Set
``DLAD_KERNELS=python`` to force the fallback. ``BACKEND`` names the active
one ("cython" or "python").

All wrappers coerce inputs to C-contiguous float64 before dispatch.
"""

import os

import numpy as np

from . import _fallback

_impl = _fallback
BACKEND = "python"

if os.environ.get("DLAD_KERNELS", "").lower() not in ("python", "py", "fallback"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _fallback


def _c2(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def softmax_rows(z):
    return _impl.softmax_rows(_c2(z))


def temperature_softmax_rows(c, temperature):
    return _impl.temperature_softmax_rows(_c2(c), float(temperature))


def sigmoid(z):
    return _impl.sigmoid(_c2(z))


def relu(z):
    return _impl.relu(_c2(z))


def relu_backward(grad, z):
    return _impl.relu_backward(_c2(grad), _c2(z))


def soft_cross_entropy(target, pred, eps):
    return float(_impl.soft_cross_entropy(_c2(target), _c2(pred), float(eps)))


def weighted_bce(pred, label, weight, eps):
    return float(_impl.weighted_bce(_c2(pred).ravel(), _c2(label).ravel(), _c2(weight).ravel(), float(eps)))


def mix_rows(weights, outputs):
    return _impl.mix_rows(_c2(weights), _c2(outputs))
