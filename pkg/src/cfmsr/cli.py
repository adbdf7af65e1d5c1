"""Command-line entry point: ``cfmsr <verb> [--config FILE] [--seed N] [--out DIR] [--force]``.

Exit codes: 0 success, 2 configuration or validation error, 3 runtime or
numeric error.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline
from .config import ConfigError, RunConfig, load_config
from .tensor_core import NumericError, ShapeError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("cfmsr")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI run config (sections: run, data, model, arch, path, solver, ...)")
    common.add_argument("--seed", type=int, help="master seed; overrides [run] seed")
    common.add_argument("--out", help="output directory; overrides [run] out")
    common.add_argument("--force", action="store_true", help="allow writing into a non-empty directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="cfmsr", description="Coupling flow matching for latent super-resolution")
    sub = p.add_subparsers(dest="verb", required=True)
    sub.add_parser("gen-data", parents=[common], help="generate a procedural dataset")
    t = sub.add_parser("train", parents=[common], help="train one model")
    t.add_argument("--data", required=True)
    t.add_argument("--resume", action="store_true", help="continue from <out>/model.ckpt")
    for verb in ("sample", "trajectory"):
        s = sub.add_parser(verb, parents=[common], help=f"two-stage {verb}")
        s.add_argument("--prior")
        s.add_argument("--upsampler")
        if verb == "trajectory":
            s.add_argument("--times", type=_floats, help="comma-separated times in [0, 1]")
    e = sub.add_parser("eval", parents=[common], help="metrics of a checkpoint on the test split")
    e.add_argument("--data", required=True)
    e.add_argument("--ckpt")
    a = sub.add_parser("ablate", parents=[common], help="sweep t_aug, nfe or upsample_method")
    a.add_argument("--data", required=True)
    a.add_argument("--axis", choices=("t_aug", "nfe", "upsample_method"))
    a.add_argument("--values", type=_items)
    a.add_argument("--ckpt", help="reuse this model for the nfe axis")
    return p


def _items(s: str):
    out = []
    for part in s.split(","):
        part = part.strip()
        if part:
            out.append(int(part) if part.lstrip("-").isdigit() else part)
    return out


def _floats(s: str):
    return [float(x) for x in s.split(",") if x.strip()]


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if args.out is not None:
        cfg = cfg.replace(out=args.out)
    return cfg


def run(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        if args.verb == "gen-data":
            pipeline.cmd_gen_data(cfg, cfg.out, args.force)
        elif args.verb == "train":
            pipeline.cmd_train(cfg, args.data, cfg.out, args.force, args.resume)
        elif args.verb == "sample":
            pipeline.cmd_sample(cfg, cfg.out, args.prior, args.upsampler, args.force)
        elif args.verb == "trajectory":
            pipeline.cmd_trajectory(cfg, cfg.out, args.prior, args.upsampler, args.times, args.force)
        elif args.verb == "eval":
            if cfg.eval.source == "model" and not args.ckpt:
                raise ConfigError("eval needs --ckpt (or eval.source = truth)")
            pipeline.cmd_eval(cfg, args.data, args.ckpt, cfg.out, args.force)
        elif args.verb == "ablate":
            pipeline.cmd_ablate(cfg, args.data, cfg.out, args.axis, args.values, args.ckpt, args.force)
    except (ConfigError, ShapeError, ValueError, KeyError) as e:
        log.error("%s", e)
        return EXIT_CONFIG
    except (NumericError, OSError, RuntimeError) as e:
        log.error("%s", e)
        return EXIT_RUNTIME
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
