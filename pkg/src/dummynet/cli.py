"""Command-line entry point for the augmentation pipeline.

Subcommands mirror the pipeline stages: fit-poses, train-mask,
train-vae, train-gan, sample, augment, eval, ablate. Exit codes: 0 on
success, 2 for configuration errors, 3 for missing artifacts.
"""
from __future__ import annotations

import argparse
import sys

from .config import load_config
from .errors import ConfigError, MissingArtifact
from .experiment import ABLATION_MODES
from .pipeline import STAGES, StageRunner

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dummynet", description=__doc__)
    parser.add_argument("--config", default=None, help="path to an INI config file")
    parser.add_argument("--seed", type=int, default=None, help="override run.seed")
    parser.add_argument("--out-dir", default=None, help="override run.out_dir")
    parser.add_argument("--workers", type=int, default=None, help="override run.workers")
    sub = parser.add_subparsers(dest="stage", required=True)
    for stage in STAGES:
        p = sub.add_parser(stage)
        if stage == "ablate":
            p.add_argument("--mode", choices=ABLATION_MODES, default=None,
                           help="run a single ablation mode instead of all")
        if stage == "sample":
            p.add_argument("--count", type=int, default=8)
        if stage == "train-vae":
            p.add_argument("--max-brightness", type=float, default=None,
                           help="keep only appearance sources at or below this mean intensity")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["run"]["seed"] = args.seed
        if args.out_dir is not None:
            cfg["run"]["out_dir"] = args.out_dir
        if args.workers is not None:
            cfg["run"]["workers"] = args.workers
        if getattr(args, "max_brightness", None) is not None:
            cfg["data"]["max_brightness"] = args.max_brightness
        runner = StageRunner(cfg)
        if args.stage == "fit-poses":
            out = runner.fit_poses()
        elif args.stage == "train-mask":
            out = runner.train_mask()
        elif args.stage == "train-vae":
            out = runner.train_vae()
        elif args.stage == "train-gan":
            out = runner.train_gan()
        elif args.stage == "sample":
            out = runner.sample(n=args.count)
        elif args.stage == "augment":
            out = runner.augment()
        elif args.stage == "eval":
            out = runner.evaluate()
        elif args.stage == "ablate":
            out = runner.ablate(mode=args.mode)
        else:  # pragma: no cover - argparse restricts choices
            raise ConfigError(f"unknown stage {args.stage}")
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifact as err:
        print(f"missing artifact: {err}", file=sys.stderr)
        return EXIT_MISSING
    print(out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
