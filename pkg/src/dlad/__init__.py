"""One-shot distillation of a global classifier from confidence-weighted client models.

Heterogeneous client models are trained on non-IID partitions, each client
also trains a data-vs-pool confidence classifier, and a global model is
distilled on unlabeled pool data from the confidence-weighted mixture of the
client predictions.
"""

from .kernels import BACKEND
from .rng import derive_seed

__version__ = "0.1.0"
__all__ = ["BACKEND", "derive_seed", "__version__"]
