"""Command line entry point: gen-data, train, eval, infer.

Exit status: 0 on success, 1 on usage errors, 2 on runtime failures.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint
from .config import ABLATIONS, TrainConfig
from .inference import evaluate, infer
from .synth import generate_dataset, load_dataset, read_sample, write_dataset
from .train import train

log = logging.getLogger("vodepth")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _size(text: str):
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like HxW, got {text!r}")
    if h <= 0 or w <= 0:
        raise argparse.ArgumentTypeError("size must be positive")
    return h, w


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vodepth", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="write a synthetic stereo + VO dataset")
    g.add_argument("--out", required=True, type=Path)
    g.add_argument("--count", required=True, type=int)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--density", type=float, default=0.005)
    g.add_argument("--noise", choices=("stereo", "mono"), default="stereo")
    g.add_argument("--size", type=_size, default=(64, 128))

    t = sub.add_parser("train", help="train on a dataset directory")
    t.add_argument("--data", required=True, type=Path)
    t.add_argument("--out", required=True, type=Path, help="checkpoint to write")
    t.add_argument("--epochs", required=True, type=int)
    t.add_argument("--ablation", action="append", choices=ABLATIONS, default=None)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--config", type=Path, default=None, help="key=value config file")
    t.add_argument("--resume", type=Path, default=None, help="checkpoint to continue from")
    t.add_argument("--log", type=Path, default=None, help="per-step loss CSV (default: OUT.log.csv)")

    e = sub.add_parser("eval", help="Eigen-protocol metrics on a dataset")
    e.add_argument("--ckpt", required=True, type=Path)
    e.add_argument("--data", required=True, type=Path)
    e.add_argument("--report", type=Path, default=None)
    e.add_argument("--pp", action="store_true", help="flip post-processing")

    i = sub.add_parser("infer", help="predict the left disparity of one sample file")
    i.add_argument("--ckpt", required=True, type=Path)
    i.add_argument("--sample", required=True, type=Path)
    i.add_argument("--pp", action="store_true")
    i.add_argument("--out", required=True, type=Path, help="output .npy (H x W disparity)")
    return p


def cmd_gen_data(args) -> None:
    if args.count < 1:
        raise UsageError("--count must be >= 1")
    if not 0 < args.density < 0.05:
        raise UsageError("--density must lie in (0, 0.05)")
    h, w = args.size
    samples = generate_dataset(args.count, args.seed, args.density, args.noise, (h, w))
    write_dataset(args.out, samples)
    log.info("wrote %d samples to %s", args.count, args.out)


def cmd_train(args) -> None:
    overrides = {"epochs": args.epochs}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.ablation:
        overrides["ablation"] = tuple(args.ablation)
    try:
        config = TrainConfig.from_file(args.config, **overrides) if args.config else TrainConfig(**overrides)
    except (OSError, ValueError, TypeError) as exc:
        raise UsageError(str(exc))
    dataset = load_dataset(args.data)
    log_path = args.log or args.out.with_name(args.out.name + ".log.csv")
    result = train(config, dataset, log_path=log_path, checkpoint_path=args.out, resume=args.resume)
    log.info("trained %d steps; checkpoint %s", result.step, args.out)


def cmd_eval(args) -> None:
    ckpt = load_checkpoint(args.ckpt)
    report = evaluate(ckpt, load_dataset(args.data), post_process_output=args.pp)
    line = report.to_csv()
    print(line)
    if args.report:
        args.report.write_text(line + "\n")


def cmd_infer(args) -> None:
    ckpt = load_checkpoint(args.ckpt)
    sample = read_sample(args.sample)
    disp = infer(ckpt, sample.left, sample.sd_left, post_process_output=args.pp)
    np.save(args.out, disp[0, 0].double().numpy())


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval, "infer": cmd_infer}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"vodepth {args.command}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, CheckpointError, FloatingPointError, RuntimeError) as exc:
        print(f"vodepth {args.command}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
