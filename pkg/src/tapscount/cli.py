"""Command-line front end: tapscount generate|train|eval|swiss|iht|compare.

Exit codes are category-coded: 0 success, 2 invalid configuration, 3 missing
or corrupt files, 4 shape mismatches, 5 numerical failures, 1 anything else.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .errors import (
    ConfigError,
    DivergenceError,
    FileFormatError,
    ShapeMismatchError,
    TapsCountError,
    ZeroEnergyError,
)
from .harness import (
    cmd_baseline,
    cmd_compare,
    cmd_eval,
    cmd_generate,
    cmd_train,
    load_config,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_SHAPE = 4
EXIT_NUMERIC = 5

COMMANDS = ("generate", "train", "eval", "swiss", "iht", "compare")


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tapscount",
        description="Identify the number of multipath channel taps from tx/rx pairs.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default=None, help="override the output directory")
    parser.add_argument("--checkpoint", default=None,
                        help="checkpoint path for eval/compare (default: <out>/checkpoint.tapn)")
    parser.add_argument("--split", default="test", choices=("train", "validation", "test"),
                        help="split part used by eval")
    parser.add_argument("--plot", action="store_true", help="also render SVG figures")
    return parser


def _dispatch(args) -> int:
    config = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.plot:
        overrides["plot"] = True
    if overrides:
        config = dataclasses.replace(config, **overrides)

    if args.command == "generate":
        path = cmd_generate(config)
        print(f"dataset written to {path}")
    elif args.command == "train":
        result = cmd_train(config)
        print(
            f"trained {result.epochs_run} epochs in {result.wall_seconds:.1f}s; "
            f"best validation accuracy {result.best_val_acc:.4f}"
        )
        print(f"checkpoint: {result.checkpoint_path}")
        print(f"curve: {result.curve_path}")
    elif args.command == "eval":
        report = cmd_eval(config, checkpoint_path=args.checkpoint, split_part=args.split)
        print(f"{args.split} accuracy: {report.accuracy:.4f} over {report.n_samples} samples")
        print(f"tolerance@1: {report.tolerance_accuracy.get(1, report.accuracy):.4f}")
    elif args.command in ("swiss", "iht"):
        result = cmd_baseline(config, args.command)
        print(
            f"{result.name}: accuracy {result.accuracy:.4f}, "
            f"tolerance@1 {result.tolerance1:.4f}, "
            f"{result.mean_runtime_s * 1e3:.3f} ms/sample over {result.n_samples} samples"
        )
    elif args.command == "compare":
        report = cmd_compare(config, checkpoint_path=args.checkpoint)
        for m in report.methods.values():
            print(
                f"{m.name:<6} accuracy {m.accuracy:.4f}  tolerance@1 {m.tolerance1:.4f}  "
                f"{m.mean_runtime_s * 1e3:.3f} ms/sample"
            )
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"error (config): {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, FileFormatError) as exc:
        print(f"error (missing/corrupt file): {exc}", file=sys.stderr)
        return EXIT_MISSING
    except ShapeMismatchError as exc:
        print(f"error (shape): {exc}", file=sys.stderr)
        return EXIT_SHAPE
    except (DivergenceError, ZeroEnergyError) as exc:
        print(f"error (numeric): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except TapsCountError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
