"""End-to-end pipeline: split, partition, client stages, soft targets, distillation, artifacts."""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .. import checkpoint, kernels
from ..aggregation import build_soft_targets, client_outputs, write_soft_targets
from ..client import ClientBundle, train_client, train_confidence_classifier
from ..data import (
    LabeledDataset,
    class_frequencies,
    load_idx,
    sample_client_dataset,
    scheme_probabilities,
    split_pool,
    synth_blobs,
)
from ..distill import DistillationRun, train_global
from ..rng import derive_seed, stream
from .config import ExperimentConfig
from .metrics import METRICS_SCHEMA, SUMMARY_SCHEMA, MetricsRecord, emit_summary, metrics_csv, read_metrics, summary_csv

log = logging.getLogger(__name__)

MNIST5K_FILES = {
    "images": "train-images-idx3-ubyte.gz",
    "labels": "train-labels-idx1-ubyte.gz",
    "test_images": "t10k-images-idx3-ubyte.gz",
    "test_labels": "t10k-labels-idx1-ubyte.gz",
}


@dataclass
class RunResult:
    output_dir: Path
    summary: list[dict]
    manifest: dict
    bundles: dict[str, list[ClientBundle]] = field(default_factory=dict, repr=False)
    runs: dict[str, dict[str, DistillationRun]] = field(default_factory=dict, repr=False)

    def accuracy(self, entity: str, stage: str = "global", run_id: str | None = None) -> float:
        for row in self.summary:
            if row["stage"] == stage and row["entity"] == str(entity) and (run_id is None or row["run_id"] == run_id):
                return row["accuracy"]
        raise KeyError(f"no summary row for {stage}/{entity}")

    def client_accuracies(self, run_id: str | None = None) -> list[float]:
        return [r["accuracy"] for r in self.summary if r["stage"] == "client" and (run_id is None or r["run_id"] == run_id)]


def _bundled(name: str) -> Path:
    return Path(str(resources.files("dlad.datasets") / "mnist5k" / MNIST5K_FILES[name]))


def _subsample(ds: LabeledDataset, cap: int, seed: int) -> LabeledDataset:
    if cap <= 0 or cap >= len(ds):
        return ds
    idx = np.sort(stream(seed).permutation(len(ds))[:cap])
    return ds.subset(idx)


def load_datasets(config: ExperimentConfig, master_seed: int) -> tuple[LabeledDataset, LabeledDataset]:
    """Base training set and test set for the configured dataset."""
    if config.dataset == "mnist":
        paths = {k: getattr(config, k) or _bundled(k) for k in MNIST5K_FILES}
        train = load_idx(paths["images"], paths["labels"])
        test = load_idx(paths["test_images"], paths["test_labels"])
    else:
        full = synth_blobs(10, config.synth_dim, config.synth_per_class, config.spread(),
                           derive_seed(master_seed, "synth-data"))
        n_test = int(round(config.synth_test_fraction * len(full)))
        order = stream(derive_seed(master_seed, "synth-test-split")).permutation(len(full))
        test, train = full.subset(np.sort(order[:n_test])), full.subset(np.sort(order[n_test:]))
    train = _subsample(train, config.max_train, derive_seed(master_seed, "cap-train"))
    test = _subsample(test, config.max_test, derive_seed(master_seed, "cap-test"))
    return train, test


def _map(fn, items, workers):
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def _records(run_id, history):
    return [
        MetricsRecord(run_id, h["stage"], str(h["entity"]), h["epoch"], h["split"], h["loss"], h["accuracy"])
        for h in history
    ]


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _run_once(config: ExperimentConfig, run_id: str, master_seed: int, out: Path, manifest: dict):
    stages = manifest["stages"]
    train, test = load_datasets(config, master_seed)
    if not train.covers_all_classes():
        log.warning("base dataset misses some classes")
    pool, client_pool = split_pool(train, config.pool_fraction, derive_seed(master_seed, "pool-split"))
    plan = scheme_probabilities(config.scheme, config.n_clients, train.n_classes)
    size = config.client_size or len(client_pool) // 2
    archs = config.client_archs()
    workers = config.workers or min(config.n_clients, os.cpu_count() or 1)
    log.info("%s: %d pool / %d client-pool samples, %d clients x %d samples", run_id, len(pool),
             len(client_pool), config.n_clients, size)

    def stage1(i):
        p = plan.probabilities[i - 1]
        d_i = sample_client_dataset(client_pool, p, size, derive_seed(master_seed, "client-data", i))
        spec = config.spec_for(archs[i - 1], train.dim, train.n_classes)
        bundle = train_client(d_i, spec, config.client, derive_seed(master_seed, "client-train", i),
                              client_id=i, class_probability=p, test=test, arch=archs[i - 1])
        return bundle, d_i

    ids = list(range(1, config.n_clients + 1))
    stage1_out = _map(stage1, ids, workers)
    stages.append(f"{run_id}:clients")

    if "dlad" in config.modes:
        def stage2(item):
            bundle, d_i = item
            return train_confidence_classifier(bundle, d_i.features, pool, config.classifier,
                                               derive_seed(master_seed, "classifier", bundle.client_id),
                                               positive_weight=config.positive_weight)
        bundles = _map(stage2, stage1_out, workers)
        stages.append(f"{run_id}:classifiers")
    else:
        bundles = [b for b, _ in stage1_out]

    digests_before = [b.model_params.digest() for b in bundles]
    outputs = client_outputs(pool.features, bundles)
    pool_freq = None
    global_seed = derive_seed(master_seed, "global-train")
    global_spec = config.spec_for(config.global_arch, train.dim, train.n_classes)
    runs = {}
    reads = {}
    for mode in config.modes:
        before = pool.label_reads
        if mode == "oracle" and pool_freq is None:
            pool_freq = class_frequencies(pool)
        targets = build_soft_targets(pool, bundles, mode, config.temperature, plan=plan, pool_freq=pool_freq,
                                     outputs=outputs)
        if config.save_targets:
            write_soft_targets(targets, out / f"{run_id}-targets-{mode}.txt")
        _, run = train_global(pool, targets, global_spec, config.global_, test, global_seed)
        reads[mode] = pool.label_reads - before
        runs[mode] = run
        stages.append(f"{run_id}:global-{mode}")
        log.info("%s: global %s -> %.4f", run_id, mode, run.reported_accuracy())
    digests_after = [b.model_params.digest() for b in bundles]

    records = []
    for b in bundles:
        records.extend(_records(run_id, b.history))
    for run in runs.values():
        records.extend(_records(run_id, run.records))

    if config.checkpoints:
        ckpt = out / "checkpoints"
        ckpt.mkdir(exist_ok=True)
        for b in bundles:
            checkpoint.save(ckpt / f"{run_id}-client-{b.client_id:03d}.ckpt", b.model_spec, b.model_params,
                            {"client_id": b.client_id, "arch": b.arch})
            if b.has_classifier:
                checkpoint.save(ckpt / f"{run_id}-classifier-{b.client_id:03d}.ckpt", b.classifier_spec,
                                b.classifier_params, {"client_id": b.client_id})
        for mode, run in runs.items():
            checkpoint.save(ckpt / f"{run_id}-global-{mode}.ckpt", run.model.spec, run.model.params, {"mode": mode})

    manifest["runs"][run_id] = {
        "master_seed": master_seed,
        "scheme": plan.scheme,
        "n_clients": plan.n_clients,
        "client_archs": archs,
        "client_size": size,
        "pool_size": len(pool),
        "client_pool_size": len(client_pool),
        "test_size": len(test),
        "hidden_label_reads": reads,
        "clients_unchanged": digests_before == digests_after,
        "client_digests": digests_after,
    }
    return records, bundles, runs


def run_experiment(config: ExperimentConfig, *, out_dir=None, seed=None, modes=None) -> RunResult:
    """Run every repetition of an experiment and write metrics, summary, manifest and checkpoints.

    On failure the manifest is still written with ``status = "failed"`` and the
    list of completed stages, then the exception propagates.
    """
    if seed is not None:
        config = replace(config, master_seed=int(seed))
    if modes is not None:
        config = replace(config, modes=tuple(modes))
    out = Path(out_dir) if out_dir is not None else Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "status": "running",
        "source": config.source,
        "kernels": kernels.BACKEND,
        "metrics_schema": METRICS_SCHEMA,
        "summary_schema": SUMMARY_SCHEMA,
        "stages": [],
        "runs": {},
        "artifacts": {},
    }
    all_records, all_bundles, all_runs = [], {}, {}
    try:
        for rep in range(config.repetitions):
            if config.repetitions == 1:
                run_id, master = config.run_id, config.master_seed
            else:
                run_id, master = f"{config.run_id}-r{rep}", derive_seed(config.master_seed, "repetition", rep)
            records, bundles, runs = _run_once(config, run_id, master, out, manifest)
            all_records.extend(records)
            all_bundles[run_id] = bundles
            all_runs[run_id] = runs

        metrics_text = metrics_csv(all_records)
        # summary is rebuilt from the written CSV so both files agree to the printed digit
        summary = emit_summary(read_metrics(metrics_text))
        (out / "metrics.csv").write_text(metrics_text, encoding="utf-8")
        (out / "summary.csv").write_text(summary_csv(summary), encoding="utf-8")
        manifest["status"] = "complete"
    except BaseException as exc:
        manifest["status"] = "failed"
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        raise
    finally:
        for p in sorted(out.rglob("*")):
            if p.is_file() and p.name != "manifest.json":
                manifest["artifacts"][str(p.relative_to(out))] = _sha256(p)
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return RunResult(out, summary, manifest, all_bundles, all_runs)
