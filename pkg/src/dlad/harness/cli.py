"""Command line entry point: ``dlad run | validate | summarize | presets``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..errors import ConfigError, DladError, FormatError, TrainingDivergedError
from .config import parse_config, preset_names
from .metrics import emit_summary, read_metrics, summary_csv
from .runner import run_experiment

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_TRAINING = 2
EXIT_IO = 3


def _overrides(pairs):
    out = {}
    for pair in pairs or ():
        key, sep, value = pair.partition("=")
        if not sep:
            raise ConfigError(f"--set expects section.key=value, got {pair!r}", path="<override>")
        out[key.strip()] = value.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dlad", description="Distill a global classifier from confidence-weighted client models.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment end to end")
    run.add_argument("--config", required=True, help="config file or preset:<name>")
    run.add_argument("--seed", type=int, help="override experiment.master_seed")
    run.add_argument("--out", help="override experiment.output_dir")
    run.add_argument("--modes", help="comma-separated subset of dlad,average,oracle")
    run.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config value")

    val = sub.add_parser("validate", help="parse and validate a config")
    val.add_argument("--config", required=True)
    val.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")

    summ = sub.add_parser("summarize", help="rebuild the summary CSV from a metrics CSV")
    summ.add_argument("--metrics", required=True)
    summ.add_argument("--out", help="write here instead of stdout")

    sub.add_parser("presets", help="list shipped presets")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "presets":
            print("\n".join(preset_names()))
            return EXIT_OK
        if args.command == "summarize":
            text = summary_csv(emit_summary(read_metrics(Path(args.metrics).read_text(encoding="utf-8"))))
            if args.out:
                Path(args.out).write_text(text, encoding="utf-8")
            else:
                sys.stdout.write(text)
            return EXIT_OK

        overrides = _overrides(args.set)
        if args.command == "run" and args.modes:
            overrides["experiment.modes"] = args.modes
        config = parse_config(args.config, overrides=overrides)
        if args.command == "validate":
            print(f"{args.config}: ok ({config.dataset}, {config.scheme}, N={config.n_clients}, modes={','.join(config.modes)})")
            return EXIT_OK
        result = run_experiment(config, out_dir=args.out, seed=args.seed)
        sys.stdout.write((result.output_dir / "summary.csv").read_text(encoding="utf-8"))
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDivergedError as exc:
        print(f"training failure: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except (OSError, FormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DladError as exc:
        print(f"training failure: {exc}", file=sys.stderr)
        return EXIT_TRAINING


if __name__ == "__main__":
    sys.exit(main())
