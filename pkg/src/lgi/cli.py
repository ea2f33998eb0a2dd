"""Command-line surface: generate-data, train, eval, gradcheck, baseline.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Training configuration comes from an optional JSON file plus per-field
``--key value`` overrides; the LGI_SEED environment variable overrides the
configured seed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path


from . import data as data_mod
from . import metrics as metrics_mod
from . import report as report_mod
from .config import TrainConfig
from .encoders import Vocabulary
from .errors import (
    ConfigInvalid,
    EmptyDataset,
    FormatError,
    InvariantViolation,
    LengthMismatch,
    NonFiniteGradient,
)
from .model import forward
from .train import evaluate_model, load_checkpoint, train
from .verification import check_primitives, full_model_config, full_model_error, full_model_matrix

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _add_config_overrides(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("config overrides")
    for field in dataclasses.fields(TrainConfig):
        flag = "--" + field.name.replace("_", "-")
        if field.type == "bool" or isinstance(field.default, bool):
            group.add_argument(flag, dest=field.name, type=_parse_bool, default=None)
        elif isinstance(field.default, int):
            group.add_argument(flag, dest=field.name, type=int, default=None)
        elif isinstance(field.default, float):
            group.add_argument(flag, dest=field.name, type=float, default=None)
        else:
            group.add_argument(flag, dest=field.name, type=str, default=None)


def _config_from_args(args: argparse.Namespace) -> TrainConfig:
    cfg = TrainConfig.from_file(args.config) if args.config else TrainConfig()
    overrides = {}
    for field in dataclasses.fields(TrainConfig):
        value = getattr(args, field.name, None)
        if value is not None:
            overrides[field.name] = value
    return cfg.replace(**overrides) if overrides else cfg.validate()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lgi", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate-data", help="write a synthetic corpus")
    gen.add_argument("--out", required=True)
    gen.add_argument("--n-train", type=int, default=2000)
    gen.add_argument("--n-val", type=int, default=400)
    gen.add_argument("--seed", type=int, default=7)
    gen.add_argument("--n-prototypes", type=int, default=12)
    gen.add_argument("--d-v", type=int, default=20)
    gen.add_argument("--t-raw-min", type=int, default=32)
    gen.add_argument("--t-raw-max", type=int, default=64)
    gen.add_argument("--noise-std", type=float, default=0.1)
    gen.add_argument("--phrases-min", type=int, default=1)
    gen.add_argument("--phrases-max", type=int, default=3)

    tr = sub.add_parser("train", help="train a model on a corpus directory")
    tr.add_argument("--data", required=True)
    tr.add_argument("--out", required=True)
    tr.add_argument("--config", default=None, help="JSON config file")
    tr.add_argument("--no-plots", action="store_true")
    _add_config_overrides(tr)

    ev = sub.add_parser("eval", help="evaluate a checkpoint on a corpus split")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--split", default="val", choices=("train", "val"))
    ev.add_argument("--out-dir", default=None,
                    help="write report.json/report.csv and figures here")
    ev.add_argument("--examples", type=int, default=3,
                    help="attention example figures to render (with --out-dir)")

    gc = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    gc.add_argument("--d", type=int, default=8)
    gc.add_argument("--t", type=int, default=6)
    gc.add_argument("--l", type=int, default=5)
    gc.add_argument("--n", type=int, default=2)
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--eps", type=float, default=1e-5)
    gc.add_argument("--tol", type=float, default=1e-4)
    gc.add_argument("--points", type=int, default=20,
                    help="random points per primitive")
    gc.add_argument("--quick", action="store_true",
                    help="single default model config instead of the full matrix")

    bl = sub.add_parser("baseline", help="score a reference predictor")
    bl.add_argument("--kind", required=True, choices=("random", "center_prior"))
    bl.add_argument("--data", required=True)
    bl.add_argument("--split", default="val", choices=("train", "val"))
    bl.add_argument("--seed", type=int, default=1)

    return parser


def cmd_generate_data(args: argparse.Namespace) -> int:
    config = data_mod.SynthConfig(
        n_prototypes=args.n_prototypes,
        d_v=args.d_v,
        t_raw_range=(args.t_raw_min, args.t_raw_max),
        phrases_per_query=(args.phrases_min, args.phrases_max),
        noise_std=args.noise_std,
        seed=args.seed,
    ).validate()
    train_set, val_set = data_mod.generate(config, args.n_train, args.n_val)
    manifest = data_mod.write_corpus(args.out, config, train_set, val_set)
    print(json.dumps({
        "out": str(args.out),
        "splits": manifest["splits"],
        "baselines": {
            "center_prior_val_recall_0.5":
                manifest["baselines"]["center_prior"]["val"]["recall_at"]["0.5"],
            "center_prior_expected_tiou_train":
                manifest["baselines"]["center_prior"]["expected_tiou_train"],
            "random_val_miou": manifest["baselines"]["random"]["val"]["miou"],
        },
    }, indent=2))
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    out_dir = Path(args.out)

    def log_fn(log):
        print(f"epoch {log.epoch:3d}  loss {log.total:8.4f} "
              f"(reg {log.l_reg:.4f} tag {log.l_tag:.4f} dqa {log.l_dqa:.4f})  "
              f"val R@0.5 {log.val_recall_05:6.2f}  mIoU {log.val_miou:6.2f}  "
              f"[{log.seconds:.1f}s]", flush=True)

    result = train(cfg, args.data, out_dir, log_fn=log_fn)
    if result.history and not args.no_plots:
        report_mod.save_loss_curves(result.history, out_dir / "loss_curves.png")
    if result.aborted:
        print(f"aborted: {result.aborted}", file=sys.stderr)
        return EXIT_NUMERIC
    if result.best_val is not None:
        print(f"best epoch {result.best_epoch}: "
              f"val R@0.5 {result.best_val.recall_at[0.5]:.2f}, "
              f"mIoU {result.best_val.miou:.2f}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    params, _, _, _, _ = load_checkpoint(args.checkpoint)
    samples = data_mod.load_split(args.data, args.split)
    vocab = Vocabulary.load(Path(args.data) / "vocab.json")
    report, preds = evaluate_model(params, samples, vocab)
    print(report.to_json())
    if args.out_dir:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "report.json", "w", encoding="utf-8") as fh:
            fh.write(report.to_json() + "\n")
        with open(out_dir / "report.csv", "w", encoding="utf-8") as fh:
            fh.write(report.csv_header() + "\n" + report.to_csv_line() + "\n")
        report_mod.save_tiou_histogram(report.tious, out_dir / "tiou_hist.png")
        for i, sample in enumerate(samples[:max(0, args.examples)]):
            out = forward(params, vocab.encode(sample.tokens), sample.features)
            qatt = out.phrases.attn.data if out.phrases is not None else None
            report_mod.save_attention_example(
                out_dir / f"attention_{sample.video_id}.png",
                out.prediction.attention.data, sample.gt, preds[i],
                query_attention=qatt, tokens=sample.tokens,
                video_id=sample.video_id)
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace) -> int:
    t0 = time.time()
    worst = check_primitives(seed=args.seed, points=args.points, eps=args.eps)
    prim_max = max(worst.values())
    print(f"primitives: {len(worst)} ops x {args.points} points, "
          f"max err {prim_max:.3e}")
    if args.quick:
        cfg = full_model_config(d=args.d, t=args.t, n_phrases=args.n)
        results = {"lgi/hadamard/resblock": full_model_error(
            cfg, length=args.l, seed=args.seed, eps=args.eps)}
    else:
        results = full_model_matrix(d=args.d, t=args.t, length=args.l,
                                    n_phrases=args.n, seed=args.seed, eps=args.eps)
    for key, err in results.items():
        print(f"  {key:<34s} {err:.3e}")
    overall = max(prim_max, max(results.values()))
    print(f"max relative error {overall:.3e} (tol {args.tol:g}), "
          f"{time.time() - t0:.1f}s")
    return EXIT_OK if overall < args.tol else EXIT_NUMERIC


def cmd_baseline(args: argparse.Namespace) -> int:
    samples = data_mod.load_split(args.data, args.split)
    gts = [s.gt for s in samples]
    if args.kind == "center_prior":
        train_gts = [s.gt for s in data_mod.load_split(args.data, "train")]
        preds = metrics_mod.baseline_predict("center_prior", len(samples),
                                             reference_gts=train_gts)
    else:
        preds = metrics_mod.baseline_predict("random", len(samples), seed=args.seed)
    report = metrics_mod.evaluate(preds, gts)
    print(report.to_json())
    return EXIT_OK


_HANDLERS = {
    "generate-data": cmd_generate_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "baseline": cmd_baseline,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return _HANDLERS[args.command](args)
    except ConfigInvalid as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, InvariantViolation, EmptyDataset, LengthMismatch,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NonFiniteGradient, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def entry() -> None:  # console-script entry point
    raise SystemExit(main())


if __name__ == "__main__":
    raise SystemExit(main())
