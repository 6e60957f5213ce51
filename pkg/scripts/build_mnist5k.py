"""Rebuild the bundled 5k MNIST subset as gzipped IDX files.

The source is the 5000-sample MNIST extract (500 images per digit) that ships
inside the mlxtend wheel (BSD-3; MNIST itself is CC BY-SA 3.0). The first 400
images of each digit, in file order, become the training split and the
remaining 100 the test split.

    pip download mlxtend --no-deps -d /tmp/dl
    python scripts/build_mnist5k.py /tmp/dl/mlxtend-*.whl
"""

import argparse
import gzip
import struct
import zipfile
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "dlad" / "datasets" / "mnist5k"
TRAIN_PER_CLASS = 400


def write_idx(path, array):
    if array.ndim == 3:
        header = struct.pack(">IIII", 0x00000803, *array.shape)
    else:
        header = struct.pack(">II", 0x00000801, array.shape[0])
    # mtime=0 keeps the archive bytes reproducible
    with open(path, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as f:
        f.write(header)
        f.write(array.astype(np.uint8).tobytes())


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("wheel")
    args = parser.parse_args()

    with zipfile.ZipFile(args.wheel) as z:
        with z.open("mlxtend/data/data/mnist_5k.csv.gz") as f:
            rows = np.loadtxt(gzip.open(f), delimiter=",", dtype=np.int64)
    images = rows[:, :-1].reshape(-1, 28, 28)
    labels = rows[:, -1]

    rank = np.zeros(len(labels), dtype=np.int64)
    for c in range(10):
        idx = np.flatnonzero(labels == c)
        rank[idx] = np.arange(len(idx))
    train = rank < TRAIN_PER_CLASS

    OUT.mkdir(parents=True, exist_ok=True)
    write_idx(OUT / "train-images-idx3-ubyte.gz", images[train])
    write_idx(OUT / "train-labels-idx1-ubyte.gz", labels[train])
    write_idx(OUT / "t10k-images-idx3-ubyte.gz", images[~train])
    write_idx(OUT / "t10k-labels-idx1-ubyte.gz", labels[~train])
    print(f"wrote {train.sum()} train / {(~train).sum()} test samples to {OUT}")


if __name__ == "__main__":
    main()
