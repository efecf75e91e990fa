"""Command-line interface.

Subcommands: prepare, train, evaluate, predict, compare, report, synth.
Exit codes: 0 success, 1 validation/config error, 2 IO error, 3 numeric
failure during training.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .data import (
    NormStats,
    build_splits,
    compute_norm_stats,
    load_records,
    read_split_manifest,
    subsample_training,
    write_split_manifest,
)
from .errors import NumericError, SteelSegError, ValidationError
from .experiment import (
    compare,
    emit_plot_data,
    load_config,
    run_experiment,
    write_comparison,
)
from .metrics import read_report_csv, write_report_csv, write_summary_json
from .synthetic import generate_records, write_corpus
from .training import TrainingHistory, evaluate, predict
from .weights import load_checkpoint


def _cmd_prepare(args) -> int:
    cfg = load_config(args.config)
    cfg.validate()
    out_dir = Path(args.out or Path(cfg.output_dir) / cfg.label)
    out_dir.mkdir(parents=True, exist_ok=True)
    image_dir, annotations = cfg.resolve_paths()
    records = load_records(image_dir, annotations.read_text(encoding="utf-8"))
    split = build_splits(records, seed=cfg.train.seed)
    split = subsample_training(split, cfg.data_fraction)
    write_split_manifest(split, out_dir / "split_manifest.txt")
    stats = compute_norm_stats(split.train)
    (out_dir / "norm_stats.json").write_text(
        json.dumps({"mean": stats.mean.tolist(), "std": stats.std.tolist()}, indent=2)
        + "\n",
        encoding="utf-8",
    )
    print(f"wrote split manifest and norm stats to {out_dir}")
    return 0


def _cmd_train(args) -> int:
    cfg = load_config(args.config)
    artifacts = run_experiment(cfg)
    for name, path in artifacts.items():
        print(f"{name}: {path}")
    return 0


def _load_norm_stats(path) -> NormStats:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return NormStats(mean=np.array(payload["mean"]), std=np.array(payload["std"]))


def _cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    run_dir = Path(args.run_dir)
    model = load_checkpoint(run_dir / "checkpoint.npz")
    stats = _load_norm_stats(run_dir / "norm_stats.json")
    sections = read_split_manifest(run_dir / "split_manifest.txt")
    image_dir, annotations = cfg.resolve_paths()
    records = load_records(image_dir, annotations.read_text(encoding="utf-8"))
    wanted = set(sections.get(args.partition.upper(), []))
    subset = [rec for rec in records if rec.image_id in wanted]
    if not subset:
        raise ValidationError(f"no records in partition {args.partition!r}")
    report = evaluate(model, subset, cfg.loss, norm_stats=stats,
                      batch_size=cfg.train.batch_size)
    write_report_csv(report, run_dir / f"report_{args.partition}.csv")
    write_summary_json(report, run_dir / f"summary_{args.partition}.json")
    print(f"MLA {report.mla:.4f}  mean DICE {report.mean_dice():.4f}  "
          f"macro AUC {report.auc_macro:.4f}")
    return 0


def _cmd_predict(args) -> int:
    model = load_checkpoint(args.checkpoint)
    stats = _load_norm_stats(args.norm_stats)
    result = predict(model, args.image, stats)
    payload = {
        "labels": result["labels"].tolist(),
        "class_probs": [float(p) for p in result["class_probs"]],
        "rle": {str(k): v for k, v in result["rle"].items()},
    }
    text = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return 0


def _cmd_compare(args) -> int:
    report_a = read_report_csv(args.report_a)
    report_b = read_report_csv(args.report_b)
    cmp = compare(report_a, report_b)
    write_comparison(cmp, args.out, name=args.name)
    print(f"improved fraction {cmp.improved_fraction:.3f}  "
          f"mean delta {cmp.mean_delta:+.4f}")
    return 0


def _cmd_report(args) -> int:
    histories, reports = {}, {}
    for run_dir in map(Path, args.run_dirs):
        label = run_dir.name
        histories[label] = TrainingHistory.from_csv(run_dir / "history.csv")
        reports[label] = read_report_csv(run_dir / "report.csv")
    emit_plot_data(histories, reports, args.out)
    print(f"wrote plot data for {len(reports)} run(s) to {args.out}")
    return 0


def _cmd_synth(args) -> int:
    height, width = (int(v) for v in args.size.split("x"))
    records = generate_records(args.count, height, width, seed=args.seed)
    csv_path = write_corpus(args.out, records)
    print(f"wrote {args.count} images and {csv_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="steelseg", description="Steel surface defect detection experiments"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="build splits and normalization stats")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_prepare)

    p = sub.add_parser("train", help="run one experiment end to end")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="re-evaluate a finished run")
    p.add_argument("--config", required=True)
    p.add_argument("--run-dir", required=True)
    p.add_argument("--partition", default="test", choices=("train", "val", "test"))
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("predict", help="segment and classify one image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--norm-stats", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("compare", help="DICE-difference comparison of two reports")
    p.add_argument("--report-a", required=True)
    p.add_argument("--report-b", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--name", default="comparison")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("report", help="regenerate plot data from saved runs")
    p.add_argument("run_dirs", nargs="+")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("synth", help="generate a synthetic defect corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--size", default="64x64")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except (OSError, IOError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2
    except SteelSegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
