"""Compare the compiled row kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 20] [--end-to-end]

Prints median wall time per call for each kernel at pipeline-sized inputs
(a 3200-row pool, 10 classes, 10 clients, 64-wide hidden layer) and the
speedup. ``--end-to-end`` also times a synth-smoke run under each backend
in a subprocess (``DLAD_KERNELS=python`` forces the fallback there).
"""

import argparse
import os
import statistics
import subprocess
import sys
import tempfile
import time

import numpy as np

from dlad import _fallback

try:
    from dlad import _kernels
except ImportError:
    sys.exit("compiled extension not built; run `pip install -e . --no-build-isolation` first")


def cases(rng):
    n, k, m, h = 3200, 10, 10, 64
    logits = rng.normal(scale=4.0, size=(n, k))
    conf = rng.random((n, m))
    hidden = rng.normal(size=(n, h))
    grad = rng.normal(size=(n, h))
    target = rng.dirichlet(np.ones(k), n)
    pred = rng.dirichlet(np.ones(k), n)
    p, y, w = rng.random(n), rng.integers(0, 2, n).astype(float), rng.uniform(1, 1.5, n)
    weights = rng.dirichlet(np.ones(m), n)
    outputs = rng.dirichlet(np.ones(k), (m, n))
    return {
        "softmax_rows": (logits,),
        "temperature_softmax_rows": (conf, 0.05),
        "sigmoid": (hidden,),
        "relu": (hidden,),
        "relu_backward": (grad, hidden),
        "soft_cross_entropy": (target, pred, 1e-12),
        "weighted_bce": (p, y, w, 1e-12),
        "mix_rows": (weights, outputs),
    }


def timeit(fn, args, repeat):
    fn(*args)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def end_to_end():
    for backend in ("cython", "python"):
        env = dict(os.environ)
        if backend == "python":
            env["DLAD_KERNELS"] = "python"
        with tempfile.TemporaryDirectory() as out:
            t0 = time.perf_counter()
            subprocess.run([sys.executable, "-m", "dlad.harness.cli", "run", "--config", "preset:synth-smoke",
                            "--out", out], env=env, check=True, capture_output=True)
            print(f"synth-smoke end to end [{backend:6s}] {time.perf_counter() - t0:6.2f} s")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--end-to-end", action="store_true")
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    print(f"{'kernel':26s} {'cython us':>10s} {'numpy us':>10s} {'speedup':>8s}")
    for name, inputs in cases(rng).items():
        a = timeit(getattr(_kernels, name), inputs, args.repeat)
        b = timeit(getattr(_fallback, name), inputs, args.repeat)
        print(f"{name:26s} {a * 1e6:10.1f} {b * 1e6:10.1f} {b / a:7.2f}x")
    if args.end_to_end:
        end_to_end()


if __name__ == "__main__":
    main()
