"""Command-line entry point: ``monotrans <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import data
from .config import ConfigError, load_config

log = logging.getLogger("monotrans")


def cmd_gen_data(args):
    cfg = data.SceneConfig(image_size=args.image_size)
    samples = data.generate_dataset(args.count, seed=args.seed, cfg=cfg)
    data.save_dataset(args.out, samples, num_classes=cfg.num_classes)
    print(f"wrote {len(samples)} samples to {args.out}")


def cmd_train(args):
    from .train import train
    cfg = load_config(args.config, args.override)
    if not cfg.data_dir:
        raise ConfigError("data_dir is not set (config file or --override data_dir=DIR)")
    samples = data.load_dataset(cfg.data_dir, image_size=cfg.model.encoder.image_size)
    res = train(cfg, samples, resume=args.resume)
    print(f"trained {res.steps[-1]['step'] if res.steps else 0} steps; checkpoint {res.checkpoint_path}")


def cmd_eval(args):
    from .evaluate import evaluate
    from .train import load_checkpoint
    ck = load_checkpoint(args.ckpt)
    samples = data.load_dataset(args.data, image_size=ck.model.image_size)
    report = evaluate(ck.model, samples, oracle=args.oracle)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(report.to_json() + "\n")
    print(report.to_json())


def cmd_predict(args):
    from .evaluate import predict_to_files
    from .train import load_checkpoint
    ck = load_checkpoint(args.ckpt)
    out = predict_to_files(ck.model, args.image, args.out, visualize=not args.no_viz)
    for p in out["paths"].values():
        print(p)


def cmd_plot(args):
    from .plotting import plot_metrics, read_inputs
    logs, reports = read_inputs(args.inputs)
    for p in plot_metrics(logs, reports, args.out):
        print(p)


def cmd_ablate(args):
    from .ablation import run_ablation, summary_rows
    from .train import set_determinism
    set_determinism(load_config())
    seeds = list(range(args.seeds))
    results = run_ablation(args.variants.split(","), seeds, extra=args.override)
    rows = summary_rows(results)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(json.dumps(rows, indent=2) + "\n")
    for r in rows:
        print(f"{r['variant']:>8}  N={r['num_iterations']}  rmse {r['rmse']:.4f}  iou {r['iou']:.4f}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="monotrans", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset directory")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--image-size", type=int, default=96)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", default=None)
    p.add_argument("--override", action="append", default=[], metavar="KEY=VAL")
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset directory")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--oracle", action="store_true", help="score ground truth against itself")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="predict depth and mask for one image")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-viz", action="store_true")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("plot", help="plot training logs (*.jsonl) and metric reports (*.json)")
    p.add_argument("--in", dest="inputs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("ablate", help="run the fusion / iteration ablation benchmark")
    p.add_argument("--variants", default="full,no_sgfm,n1")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--override", action="append", default=[], metavar="KEY=VAL")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except Exception as exc:  # one-line diagnostic, nonzero exit
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"monotrans {args.command}: error: {msg}", file=sys.stderr)
        if args.verbose:
            raise
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
