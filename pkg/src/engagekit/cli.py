"""Command-line interface.

Exit codes are a stable contract: 0 success, 1 usage error, 2 data error,
3 internal failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import pipeline, synthgen
from .config import load_config
from .datamodel import DataError, parse_video_record
from .ensemble import fused_model_from_json, fused_model_to_json, predict_engagement_batch

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse defaults to exit code 2; we reserve that
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="engagekit", description=__doc__)
    parser.add_argument("--config", help="JSON config file overriding any default")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("features", help="extract per-video features for a manifest")
    p.add_argument("manifest")
    p.add_argument("-o", "--output", required=True, help="feature store CSV to write")
    p.add_argument("--workers", type=int, help="worker process count")

    p = sub.add_parser("train", help="train the fused model on a feature store")
    p.add_argument("store")
    p.add_argument("-o", "--output", required=True, help="model JSON to write")
    p.add_argument("--split", type=float, default=0.8,
                   help="train fraction; the held-out remainder is scored (default 0.8)")
    p.add_argument("--all", action="store_true", help="train on every labeled row, no held-out")

    p = sub.add_parser("eval", help="evaluate a model on a feature store")
    p.add_argument("store")
    p.add_argument("model")

    p = sub.add_parser("cv", help="stratified k-fold cross-validation")
    p.add_argument("store")
    p.add_argument("-k", type=int, default=10)

    p = sub.add_parser("ablate", help="accuracy of each fusion strategy on one split")
    p.add_argument("store")

    p = sub.add_parser("bench", help="sequential vs parallel extraction timings")
    p.add_argument("manifest")
    p.add_argument("--batches", default=",".join(str(b) for b in pipeline.DEFAULT_BENCH_BATCHES))
    p.add_argument("--workers", type=int, help="worker process count")
    p.add_argument("-o", "--output", help="also write the report as JSON")

    p = sub.add_parser("report", help="human-readable summary of one interchange file")
    p.add_argument("video")
    p.add_argument("--model", help="model JSON for an engagement prediction")
    p.add_argument("--dump-physio", metavar="CSV",
                   help="also write the pulse-chain debug table (t_s,bvp,filtered,peaks)")

    p = sub.add_parser("synth", help="generate a labeled synthetic corpus")
    p.add_argument("spec", help="JSON file mirroring the synth spec (may be {})")
    p.add_argument("-o", "--output", required=True, help="corpus output directory")
    return parser


def _cmd_features(args, cfg) -> int:
    if args.workers:
        cfg = dataclasses.replace(cfg, worker_count=args.workers)
    store = pipeline.extract_features(args.manifest, cfg)
    pipeline.save_store_csv(store, args.output)
    n_err = sum(not r.ok for r in store.rows)
    print(f"wrote {args.output}: {len(store)} videos, {n_err} failed")
    return EXIT_OK


def _cmd_train(args, cfg) -> int:
    store = pipeline.load_store_csv(args.store)
    if args.all:
        model = pipeline.train_full(store, cfg)
        print(f"trained on all {len(store.labeled_rows())} labeled rows")
    else:
        train_ids, test_ids = pipeline.split_train_eval(store, args.split, cfg.seed)
        model = pipeline.train_full(store, cfg, train_ids)
        model.metadata["holdout_ids"] = sorted(test_ids)
        if test_ids:
            vx, px, y = pipeline.training_matrices(store, test_ids)
            report = pipeline.evaluate(predict_engagement_batch(model, vx, px).tolist(), y.tolist())
            print(f"trained on {len(train_ids)} rows; held-out accuracy {report.accuracy:.4f}")
    Path(args.output).write_text(fused_model_to_json(model), encoding="utf-8")
    print(f"wrote {args.output}")
    return EXIT_OK


def _cmd_eval(args, cfg) -> int:
    store = pipeline.load_store_csv(args.store)
    model = fused_model_from_json(Path(args.model).read_text(encoding="utf-8"))
    holdout = model.metadata.get("holdout_ids")
    index = store.by_id()
    if holdout:
        ids = [v for v in holdout if v in index and index[v].ok and index[v].label is not None]
        scope = "held-out rows recorded in the model"
    else:
        ids = [r.video_id for r in store.labeled_rows()]
        scope = "all labeled rows"
    if not ids:
        raise DataError("no evaluable rows: store and model holdout do not overlap")
    vx, px, y = pipeline.training_matrices(store, ids)
    report = pipeline.evaluate(predict_engagement_batch(model, vx, px).tolist(), y.tolist())
    print(f"evaluating {len(ids)} videos ({scope})")
    print(report.format())
    return EXIT_OK


def _cmd_cv(args, cfg) -> int:
    store = pipeline.load_store_csv(args.store)
    report = pipeline.cross_validate(store, args.k, cfg)
    print(report.format())
    return EXIT_OK


def _cmd_ablate(args, cfg) -> int:
    store = pipeline.load_store_csv(args.store)
    print(pipeline.format_ablation(pipeline.ablate(store, cfg)))
    return EXIT_OK


def _cmd_bench(args, cfg) -> int:
    try:
        batches = [int(b) for b in args.batches.split(",") if b.strip()]
    except ValueError:
        raise DataError(f"--batches must be comma-separated integers, got {args.batches!r}") from None
    report = pipeline.bench_parallel(args.manifest, batches, args.workers or 0, cfg)
    print(report.format())
    if args.output:
        doc = {
            "workers": report.workers,
            "cpu_count": report.cpu_count,
            "entries": [dataclasses.asdict(e) for e in report.entries],
            "config": cfg.to_dict(),
        }
        Path(args.output).write_text(json.dumps(doc, indent=1), encoding="utf-8")
    return EXIT_OK


def _cmd_report(args, cfg) -> int:
    try:
        text = Path(args.video).read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read video file {args.video}: {e}") from e
    record = parse_video_record(text)
    model = None
    if args.model:
        model = fused_model_from_json(Path(args.model).read_text(encoding="utf-8"))
    print(pipeline.report_video(record, cfg, model))
    if args.dump_physio:
        from .physio import debug_table

        Path(args.dump_physio).write_text(debug_table(record.trace, cfg.physio), encoding="utf-8")
        print(f"wrote physio debug table to {args.dump_physio}")
    return EXIT_OK


def _cmd_synth(args, cfg) -> int:
    try:
        text = Path(args.spec).read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read synth spec {args.spec}: {e}") from e
    spec = synthgen.load_synth_spec(text)
    manifest = synthgen.gen_labeled_corpus(spec, args.output)
    print(f"wrote {spec.n_videos} videos under {args.output} (manifest: {manifest})")
    return EXIT_OK


_COMMANDS = {
    "features": _cmd_features,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "cv": _cmd_cv,
    "ablate": _cmd_ablate,
    "bench": _cmd_bench,
    "report": _cmd_report,
    "synth": _cmd_synth,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        cfg = load_config(args.config)
        return _COMMANDS[args.command](args, cfg)
    except DataError as e:
        print(f"engagekit: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # pragma: no cover - internal failures
        print(f"engagekit: internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
