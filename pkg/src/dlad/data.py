"""Datasets, the pool/client split, non-IID class schemes and client sampling."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError
from .rng import stream

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

SCHEMES = ("iid", "niid1", "niid2", "niid3")

# classes held by clients 5n+1 .. 5n+5 under each non-IID scheme (10 classes)
SCHEME_CLASSES = {
    "niid1": [(0, 1), (2, 3), (4, 5), (6, 7), (8, 9)],
    "niid2": [(0, 1, 2, 3, 4, 5), (0, 1, 2, 3, 4, 6), (0, 1, 2, 3, 4, 7), (0, 1, 2, 3, 4, 8), (0, 1, 2, 3, 4, 9)],
    "niid3": [(0, 1, 2, 3), (0, 4, 5, 6), (1, 4, 7, 8), (2, 5, 7, 9), (3, 6, 8, 9)],
}


class IdxMagicError(FormatError):
    pass


class IdxTruncatedError(FormatError):
    pass


class IdxCountMismatchError(FormatError):
    pass


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {x.shape}")
        if y.shape != (x.shape[0],):
            raise DataError(f"{y.shape[0] if y.ndim else 0} labels for {x.shape[0]} samples")
        if y.size and (y.min() < 0 or y.max() >= self.n_classes):
            raise DataError(f"labels must lie in 0..{self.n_classes - 1}")
        if not np.all(np.isfinite(x)):
            raise DataError("features contain non-finite values")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return self.labels.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "LabeledDataset":
        return LabeledDataset(self.features[idx], self.labels[idx], self.n_classes)

    def covers_all_classes(self) -> bool:
        return np.unique(self.labels).size == self.n_classes

    def one_hot(self) -> np.ndarray:
        out = np.zeros((len(self), self.n_classes))
        out[np.arange(len(self)), self.labels] = 1.0
        return out


@dataclass
class UnlabeledPool:
    """Distillation samples. Labels are kept only for oracle weights and audits.

    Every read of :attr:`hidden_labels` bumps :attr:`label_reads`, so a run can
    prove that a code path never looked at them.
    """

    features: np.ndarray
    _hidden_labels: np.ndarray = field(repr=False)
    n_classes: int
    label_reads: int = 0

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.features.setflags(write=False)
        self._hidden_labels = np.asarray(self._hidden_labels, dtype=np.int64)
        self._hidden_labels.setflags(write=False)

    def __len__(self):
        return self.features.shape[0]

    @property
    def hidden_labels(self) -> np.ndarray:
        self.label_reads += 1
        return self._hidden_labels


@dataclass(frozen=True)
class PartitionPlan:
    scheme: str
    n_clients: int
    probabilities: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.probabilities) != self.n_clients:
            raise ValueError("one class-probability row per client is required")
        for p in self.probabilities:
            check_class_probability(p)

    def holders(self, cls: int) -> list[int]:
        """0-based indices of clients with nonzero mass on ``cls``."""
        return [i for i, p in enumerate(self.probabilities) if p[cls] > 0]


def check_class_probability(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
        raise DataError(f"not a class-probability vector: {p}")
    return p


def _read_bytes(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _read_idx(path, magic, n_dims):
    raw = _read_bytes(path)
    header_len = 4 * (1 + n_dims)
    if len(raw) < 4:
        raise IdxTruncatedError(f"{path}: file too short for an IDX header")
    (got,) = struct.unpack(">I", raw[:4])
    if got != magic:
        raise IdxMagicError(f"{path}: magic 0x{got:08x}, expected 0x{magic:08x}")
    if len(raw) < header_len:
        raise IdxTruncatedError(f"{path}: file too short for an IDX header")
    dims = struct.unpack(f">{n_dims}I", raw[4:header_len])
    count = int(np.prod(dims))
    body = raw[header_len:]
    if len(body) < count:
        raise IdxTruncatedError(f"{path}: expected {count} data bytes, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8, count=count).reshape(dims)


def load_idx(images_path, labels_path, n_classes: int = 10) -> LabeledDataset:
    """Load an IDX image/label pair (optionally gzip-compressed), pixels scaled to [0, 1]."""
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise IdxCountMismatchError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    if labels.size and labels.max() >= n_classes:
        raise DataError(f"label {int(labels.max())} outside 0..{n_classes - 1}")
    features = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return LabeledDataset(features, labels.astype(np.int64), n_classes)


def write_idx(images_path, labels_path, images: np.ndarray, labels: np.ndarray) -> None:
    """Write uint8 images (n, rows, cols) and labels (n,) as uncompressed IDX."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, *images.shape))
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0]))
        f.write(labels.tobytes())


def write_columnar(dataset: LabeledDataset, path) -> None:
    """Header ``n d L``, then one sample per line: label followed by d floats."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{len(dataset)} {dataset.dim} {dataset.n_classes}\n")
        for label, row in zip(dataset.labels, dataset.features):
            f.write(" ".join([str(int(label))] + [repr(float(v)) for v in row]) + "\n")


def read_columnar(path) -> LabeledDataset:
    with open(path, encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 3:
            raise FormatError(f"{path}: header must be 'n d L'")
        n, d, n_classes = (int(v) for v in header)
        labels = np.empty(n, dtype=np.int64)
        features = np.empty((n, d))
        for i in range(n):
            parts = f.readline().split()
            if len(parts) != d + 1:
                raise FormatError(f"{path}:{i + 2}: expected {d + 1} fields, got {len(parts)}")
            labels[i] = int(parts[0])
            features[i] = [float(v) for v in parts[1:]]
        if f.readline().strip():
            raise FormatError(f"{path}: more rows than the header declares")
    return LabeledDataset(features, labels, n_classes)


def synth_blobs(n_classes: int, dim: int, per_class: int, spread: float, seed: int) -> LabeledDataset:
    """Isotropic Gaussian blob per class around a random center in [0.15, 0.85]^dim, clipped to [0, 1]."""
    if n_classes < 2 or per_class < 1 or dim < 1:
        raise ValueError("need n_classes >= 2, per_class >= 1, dim >= 1")
    rng = stream(seed)
    centers = rng.uniform(0.15, 0.85, size=(n_classes, dim))
    labels = np.repeat(np.arange(n_classes), per_class)
    noise = rng.normal(0.0, 1.0, size=(labels.size, dim))
    features = np.clip(centers[labels] + spread * noise, 0.0, 1.0)
    return LabeledDataset(features, labels, n_classes)


def split_pool(dataset: LabeledDataset, pool_fraction: float, seed: int) -> tuple[UnlabeledPool, LabeledDataset]:
    """Random split: the first ``pool_fraction`` of a permutation becomes the unlabeled pool."""
    if not 0.0 < pool_fraction < 1.0:
        raise ValueError(f"pool_fraction must be in (0, 1), got {pool_fraction}")
    n = len(dataset)
    k = int(round(pool_fraction * n))
    if k == 0 or k == n:
        raise DataError(f"pool_fraction={pool_fraction} leaves one side of a {n}-sample split empty")
    order = stream(seed).permutation(n)
    pool_idx, rest_idx = order[:k], order[k:]
    pool = UnlabeledPool(dataset.features[pool_idx], dataset.labels[pool_idx], dataset.n_classes)
    return pool, dataset.subset(rest_idx)


def scheme_probabilities(scheme: str, n_clients: int, n_classes: int = 10) -> PartitionPlan:
    """Per-client class probabilities; client i (1-based) uses row ((i-1) mod 5)."""
    scheme = scheme.lower()
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    if n_clients < 1:
        raise ValueError("n_clients must be >= 1")
    if scheme == "iid":
        rows = [np.full(n_classes, 1.0 / n_classes)] * n_clients
    else:
        if n_classes != 10:
            raise ValueError(f"{scheme} is defined for 10 classes, got {n_classes}")
        rows = []
        for i in range(n_clients):
            held = SCHEME_CLASSES[scheme][i % 5]
            p = np.zeros(n_classes)
            p[list(held)] = 1.0 / len(held)
            rows.append(p)
    return PartitionPlan(scheme, n_clients, tuple(np.array(r) for r in rows))


def sample_client_dataset(client_pool: LabeledDataset, p, size: int, seed: int) -> LabeledDataset:
    """Draw ``size`` samples with replacement: class ~ p, then uniform within that class."""
    p = check_class_probability(p)
    if p.shape[0] != client_pool.n_classes:
        raise DataError(f"class probability has {p.shape[0]} entries, dataset has {client_pool.n_classes} classes")
    by_class = [np.flatnonzero(client_pool.labels == c) for c in range(client_pool.n_classes)]
    for c in np.flatnonzero(p > 0):
        if by_class[c].size == 0:
            raise DataError(f"class {c} has positive probability but no samples in the client pool")
    rng = stream(seed)
    classes = rng.choice(client_pool.n_classes, size=size, p=p)
    idx = np.empty(size, dtype=np.int64)
    for c in np.unique(classes):
        where = np.flatnonzero(classes == c)
        idx[where] = by_class[c][rng.integers(0, by_class[c].size, size=where.size)]
    return client_pool.subset(idx)


def class_frequencies(pool: UnlabeledPool) -> np.ndarray:
    """Empirical class distribution of the pool's hidden labels."""
    counts = np.bincount(pool.hidden_labels, minlength=pool.n_classes)
    # integer counts over an integer total: each entry is a single correctly rounded division
    return counts.astype(np.float64) / float(counts.sum())
