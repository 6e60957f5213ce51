"""Experiment configuration: a flat, sectioned key-value format.

Grammar, one item per line::

    # comment            (also ';' comments; blank lines ignored)
    [section]            experiment | data | client | classifier | global | runtime | arch.<name>
    key = value          value runs to end of line, surrounding whitespace stripped
    key = value  # note  '#' or ';' after whitespace starts a trailing comment

Keys outside a section, unknown sections, unknown keys and repeated keys are
errors. Every error carries the file and line it came from. Relative paths
are resolved against the config file's directory. ``preset:<name>`` names one
of the configs shipped in ``dlad/presets``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from ..aggregation import MODES
from ..data import SCHEMES
from ..errors import ConfigError
from ..tensor import ACTIVATIONS, ModelSpec, TrainingHyper

DATASETS = ("mnist", "synth-easy", "synth-hard")

ARCHITECTURES: dict[str, tuple[tuple[int, str], ...]] = {
    "linear": (),
    "small": ((32, "relu"),),
    "mlp": ((64, "relu"),),
    "mlp128": ((128, "relu"),),
    "deep": ((64, "relu"), (64, "relu"), (64, "relu")),
    "wide": ((256, "tanh"),),
}

SYNTH_DEFAULTS = {"synth-easy": 0.08, "synth-hard": 0.3}


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str
    scheme: str
    n_clients: int
    run_id: str = "run"
    client_arch_mix: tuple[tuple[str, float], ...] = (("mlp", 1.0),)
    global_arch: str = "mlp128"
    temperature: float = 0.05
    modes: tuple[str, ...] = MODES
    master_seed: int = 0
    output_dir: Path = Path("results")
    pool_fraction: float = 0.8
    repetitions: int = 1
    # data
    images: Path | None = None
    labels: Path | None = None
    test_images: Path | None = None
    test_labels: Path | None = None
    max_train: int = 0
    max_test: int = 0
    synth_dim: int = 20
    synth_per_class: int = 500
    synth_spread: float | None = None
    synth_test_fraction: float = 0.2
    client_size: int = 0
    # stages
    client: TrainingHyper = TrainingHyper(epochs=30, batch_size=64, lr=1e-3)
    classifier: TrainingHyper = TrainingHyper(epochs=10, batch_size=64, lr=1e-3)
    positive_weight: float = 1.5
    global_: TrainingHyper = TrainingHyper(epochs=50, batch_size=64, lr=1e-3)
    # runtime
    workers: int = 0
    checkpoints: bool = True
    save_targets: bool = False
    architectures: dict = field(default_factory=lambda: dict(ARCHITECTURES))
    source: str = "<config>"

    def spec_for(self, arch: str, input_dim: int, n_classes: int) -> ModelSpec:
        return ModelSpec(input_dim, self.architectures[arch], n_classes, "softmax")

    def client_archs(self) -> list[str]:
        """Architecture name per client (1..N), in contiguous blocks by mix order."""
        n = self.n_clients
        raw = [(name, share * n) for name, share in self.client_arch_mix]
        counts = [math.floor(v) for _, v in raw]
        # largest remainder, ties to the earlier entry
        order = sorted(range(len(raw)), key=lambda k: (-(raw[k][1] - counts[k]), k))
        for k in order[: n - sum(counts)]:
            counts[k] += 1
        out = []
        for (name, _), c in zip(self.client_arch_mix, counts):
            out.extend([name] * c)
        return out

    def spread(self) -> float:
        return self.synth_spread if self.synth_spread is not None else SYNTH_DEFAULTS.get(self.dataset, 0.08)


# key -> (section, field name, parser)
def _int(v):
    return int(v, 0)


def _bool(v):
    low = v.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _list(v):
    return tuple(s.strip() for s in v.split(",") if s.strip())


def _mix(v):
    out = []
    for part in _list(v):
        name, sep, share = part.partition(":")
        out.append((name.strip(), float(share) if sep else 1.0))
    return tuple(out)


_KEYS = {
    "experiment": {
        "run_id": str,
        "dataset": str.lower,
        "scheme": str.lower,
        "n_clients": _int,
        "client_arch_mix": _mix,
        "global_arch": str,
        "temperature": float,
        "modes": lambda v: tuple(m.lower() for m in _list(v)),
        "master_seed": _int,
        "output_dir": Path,
        "pool_fraction": float,
        "repetitions": _int,
    },
    "data": {
        "images": Path,
        "labels": Path,
        "test_images": Path,
        "test_labels": Path,
        "max_train": _int,
        "max_test": _int,
        "synth_dim": _int,
        "synth_per_class": _int,
        "synth_spread": float,
        "synth_test_fraction": float,
        "client_size": _int,
    },
    "client": {"epochs": _int, "batch_size": _int, "lr": float},
    "classifier": {"epochs": _int, "batch_size": _int, "lr": float, "positive_weight": float},
    "global": {"epochs": _int, "batch_size": _int, "lr": float},
    "runtime": {"workers": _int, "checkpoints": _bool, "save_targets": _bool},
}
_REQUIRED = ("dataset", "scheme", "n_clients")
_PATH_KEYS = {"images", "labels", "test_images", "test_labels", "output_dir"}


def _parse_hidden(value):
    layers = []
    for part in _list(value):
        bits = part.split()
        if len(bits) != 2 or bits[1] not in ACTIVATIONS:
            raise ValueError(f"layer {part!r} must be '<width> <relu|tanh>'")
        layers.append((int(bits[0]), bits[1]))
    return tuple(layers)


# '#' or ';' preceded by whitespace starts a comment; "a#b" stays a value
_INLINE_COMMENT = re.compile(r"(^|\s)[#;].*$")


def _read_items(text: str, source: str):
    """Yield (section, key, raw value, line number)."""
    section = None
    seen = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = _INLINE_COMMENT.sub("", line).strip()
        if not s or s[0] in "#;":
            continue
        if s.startswith("["):
            if not s.endswith("]"):
                raise ConfigError(f"malformed section header {s!r}", line=lineno, path=source)
            section = s[1:-1].strip().lower()
            if section not in _KEYS and not section.startswith("arch."):
                raise ConfigError(f"unknown section [{section}]", line=lineno, path=source)
            continue
        key, sep, value = s.partition("=")
        key = key.strip().lower()
        if not sep or not key:
            raise ConfigError(f"expected 'key = value', got {s!r}", line=lineno, path=source)
        if section is None:
            raise ConfigError(f"key {key!r} appears before any [section]", line=lineno, path=source, field=key)
        if (section, key) in seen:
            raise ConfigError(f"duplicate key {section}.{key}", line=lineno, path=source, field=key)
        seen.add((section, key))
        yield section, key, value.strip(), lineno


def parse_config_text(text: str, source: str = "<config>", base_dir: Path | None = None, overrides=None) -> ExperimentConfig:
    items = list(_read_items(text, source))
    for spec, value in (overrides or {}).items():
        section, _, key = spec.lower().partition(".")
        if not key:
            raise ConfigError(f"override {spec!r} must look like section.key", path="<override>")
        items = [it for it in items if (it[0], it[1]) != (section, key)]
        if section not in _KEYS and not section.startswith("arch."):
            raise ConfigError(f"unknown section [{section}]", path="<override>", field=key)
        items.append((section, key, str(value), None))

    values: dict = {}
    lines: dict = {}
    archs = dict(ARCHITECTURES)
    hypers = {name: {} for name in ("client", "classifier", "global")}
    for section, key, raw, lineno in items:
        where = {"line": lineno, "path": source if lineno is not None else "<override>", "field": key}
        if section.startswith("arch."):
            if key != "hidden":
                raise ConfigError(f"unknown key {key!r} in [{section}] (only 'hidden')", **where)
            try:
                archs[section[5:]] = _parse_hidden(raw)
            except ValueError as exc:
                raise ConfigError(f"{section}.hidden: {exc}", **where) from None
            continue
        parser = _KEYS[section].get(key)
        if parser is None:
            raise ConfigError(f"unknown key {key!r} in [{section}]", **where)
        try:
            value = parser(raw)
        except ValueError as exc:
            raise ConfigError(f"{section}.{key}: cannot parse {raw!r} ({exc})", **where) from None
        if key in _PATH_KEYS and base_dir is not None and not value.is_absolute():
            value = base_dir / value
        if section in hypers and key != "positive_weight":
            hypers[section][key] = value
        else:
            values[key] = value
        lines[key] = where

    for key in _REQUIRED:
        if key not in values:
            raise ConfigError(f"missing required key experiment.{key}", path=source, field=key)

    def fail(key, message):
        where = lines.get(key, {"path": source, "field": key})
        raise ConfigError(f"{key}: {message}", **where)

    if values["dataset"] not in DATASETS:
        fail("dataset", f"must be one of {DATASETS}, got {values['dataset']!r}")
    if values["scheme"] not in SCHEMES:
        fail("scheme", f"must be one of {SCHEMES}, got {values['scheme']!r}")
    if values["n_clients"] < 1:
        fail("n_clients", "must be >= 1")
    if "temperature" in values and not values["temperature"] > 0:
        fail("temperature", f"must be > 0, got {values['temperature']}")
    if "pool_fraction" in values and not 0 < values["pool_fraction"] < 1:
        fail("pool_fraction", "must lie strictly between 0 and 1")
    if "modes" in values:
        if not values["modes"]:
            fail("modes", "at least one mode is required")
        bad = [m for m in values["modes"] if m not in MODES]
        if bad:
            fail("modes", f"unknown modes {bad}; expected a subset of {MODES}")
    if "client_arch_mix" in values:
        mix = values["client_arch_mix"]
        if not mix or any(share < 0 for _, share in mix):
            fail("client_arch_mix", "shares must be nonnegative")
        if abs(sum(share for _, share in mix) - 1.0) > 1e-9:
            fail("client_arch_mix", f"proportions must sum to 1, got {sum(s for _, s in mix):g}")
        unknown = [name for name, _ in mix if name not in archs]
        if unknown:
            fail("client_arch_mix", f"unknown architectures {unknown}")
    if values.get("global_arch", "mlp128") not in archs:
        fail("global_arch", f"unknown architecture {values['global_arch']!r}")
    if values.get("repetitions", 1) < 1:
        fail("repetitions", "must be >= 1")
    if values.get("positive_weight", 1.5) <= 0:
        fail("positive_weight", "must be > 0")
    if "synth_spread" in values and values["synth_spread"] < 0:
        fail("synth_spread", "must be >= 0")
    for key in ("max_train", "max_test", "client_size", "workers"):
        if values.get(key, 0) < 0:
            fail(key, "must be >= 0")

    defaults = ExperimentConfig.__dataclass_fields__
    stage_hypers = {}
    for name, attr in (("client", "client"), ("classifier", "classifier"), ("global", "global_")):
        base = defaults[attr].default
        merged = {"epochs": base.epochs, "batch_size": base.batch_size, "lr": base.lr, **hypers[name]}
        try:
            stage_hypers[attr] = TrainingHyper(**merged)
        except ValueError:
            key = next(iter(hypers[name]), "epochs")
            raise ConfigError(
                f"[{name}] needs epochs >= 1, batch_size >= 1, lr > 0, got {merged}",
                **lines.get(key, {"path": source, "field": key}),
            ) from None

    return ExperimentConfig(**values, **stage_hypers, architectures=archs, source=source)


PRESET_PREFIX = "preset:"


def preset_names() -> list[str]:
    return sorted(p.name[:-4] for p in resources.files("dlad.presets").iterdir() if p.name.endswith(".cfg"))


def parse_config(path, overrides=None) -> ExperimentConfig:
    """Read and validate a config file (or ``preset:<name>``)."""
    path = str(path)
    if path.startswith(PRESET_PREFIX):
        name = path[len(PRESET_PREFIX):]
        res = resources.files("dlad.presets") / f"{name}.cfg"
        if not res.is_file():
            raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
        return parse_config_text(res.read_text(encoding="utf-8"), source=path, base_dir=None, overrides=overrides)
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {p}") from None
    return parse_config_text(text, source=str(p), base_dir=p.parent, overrides=overrides)
