"""Command-line entry point: gen-synthetic, train, predict, mask-merge,
attack, report.

Exit codes: 0 success, 1 domain error (no feasible region, ingestion failure,
bad weights, backend failures), 2 usage error. Diagnostics go to stderr,
results to files and stdout.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from . import attack, imaging, report, signs
from .errors import StickerForgeError
from .victim import backends, cnn, weights

WORKERS_ENV = "STICKER_FORGE_WORKERS"


def _backend_arg(text: str):
    try:
        return backends.parse_backend_spec(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stickerforge",
        description="Universal black/white sticker attacks on sign classifiers",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="render a synthetic labeled sign dataset")
    p.add_argument("--out", required=True, help="output directory (train/ + test/)")
    p.add_argument("--train-per-class", type=int, default=100)
    p.add_argument("--test-per-class", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scene-size", type=int, default=384)

    p = sub.add_parser("train", help="train the built-in CNN on a sign directory")
    p.add_argument("--train-dir", required=True)
    p.add_argument("--test-dir", default=None)
    p.add_argument("--out", required=True, help="weight file to write")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("predict", help="classify images and print NDJSON verdicts")
    p.add_argument("--backend", required=True, type=_backend_arg)
    p.add_argument("images", nargs="+")

    p = sub.add_parser("mask-merge", help="write the merged mask for a sign directory")
    p.add_argument("--signs", required=True, dest="signs_dir")
    p.add_argument("--out", required=True, help="merged mask PNG path")

    p = sub.add_parser("attack", help="run the universal sticker sweep end to end")
    p.add_argument("--config", required=True)
    p.add_argument("--backend", type=_backend_arg, default=None)
    p.add_argument("--out", default=None, help="output directory override")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--stride", type=float, default=None, help="anchor stride (percent)")
    p.add_argument("--overlay-marker", action="store_true",
                   help="draw the illustrative cross-mark on attack images")

    p = sub.add_parser("report", help="re-render tables/images from a summary.json")
    p.add_argument("--summary", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--signs", default=None, dest="signs_dir",
                   help="sign directory for annotated images (default: config echo)")
    return parser


def _resolve_workers(flag_value: int | None, config_value) -> int:
    if flag_value is not None:
        return max(1, flag_value)
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise StickerForgeError(f"{WORKERS_ENV} must be an integer, got {env!r}") from exc
    if config_value is not None:
        return max(1, int(config_value))
    return 1


def _cmd_gen_synthetic(args) -> int:
    total = args.train_per_class + args.test_per_class
    scenes = signs.generate_scenes(
        signs.DEFAULT_CLASSES, total, seed=args.seed, scene_size=args.scene_size
    )
    per_class: dict[str, list] = {}
    for scene in scenes:
        per_class.setdefault(scene.annotation.label, []).append(scene)
    train_scenes, test_scenes = [], []
    for label in sorted(per_class):
        train_scenes.extend(per_class[label][: args.train_per_class])
        test_scenes.extend(per_class[label][args.train_per_class :])
    out = Path(args.out)
    signs.write_scenes(train_scenes, out / "train")
    signs.write_scenes(test_scenes, out / "test")
    print(f"wrote {len(train_scenes)} train / {len(test_scenes)} test scenes to {out}")
    return 0


def _cmd_train(args) -> int:
    train_set = signs.ingest_dir(args.train_dir)
    cfg = cnn.TrainConfig(
        learning_rate=args.lr, epochs=args.epochs, batch_size=args.batch_size,
        seed=args.seed,
    )
    print(f"training on {len(train_set.records)} signs, "
          f"{len(train_set.class_names)} classes", file=sys.stderr)
    bundle = cnn.train(
        [r.image for r in train_set.records],
        train_set.labels_as_ids(),
        train_set.class_names,
        cfg=cfg,
    )
    weights.save_weights(bundle, args.out)
    train_acc = cnn.accuracy(bundle, [r.image for r in train_set.records],
                             train_set.labels_as_ids())
    line = f"train_accuracy={train_acc:.4f}"
    if args.test_dir:
        test_set = signs.ingest_dir(args.test_dir)
        labels = [test_set.class_names.index(r.true_label) for r in test_set.records]
        test_acc = cnn.accuracy(bundle, [r.image for r in test_set.records], labels)
        line += f" test_accuracy={test_acc:.4f}"
    print(line + f" weights={args.out}")
    return 0


def _cmd_predict(args) -> int:
    classifier = backends.materialize(args.backend)
    try:
        for path in args.images:
            verdict = classifier.predict(imaging.load_image(path))
            print(json.dumps({
                "path": str(path),
                "label_id": verdict.label_id,
                "label_name": verdict.label_name,
                "confidence_pct": verdict.confidence_pct,
                "probs": list(verdict.probs),
            }))
    finally:
        if hasattr(classifier, "close"):
            classifier.close()
    return 0


def _cmd_mask_merge(args) -> int:
    sign_set = signs.ingest_dir(args.signs_dir)
    merged = attack.merged_mask(sign_set)
    imaging.save_image(imaging.mask_to_image(merged), args.out)
    print(f"merged_true_fraction={merged.true_fraction:.4f} out={args.out}")
    return 0


def _load_attack_config(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise StickerForgeError(f"cannot read attack config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise StickerForgeError(f"attack config {path} must be a JSON object")
    return cfg


def _cmd_attack(args) -> int:
    cfg = _load_attack_config(args.config)
    signs_dir = cfg.get("signs_dir")
    if signs_dir is None:
        raise StickerForgeError("attack config needs a signs_dir")
    backend_text = cfg.get("backend")
    spec = args.backend
    if spec is None:
        if backend_text is None:
            raise StickerForgeError("no backend: pass --backend or set it in the config")
        try:
            spec = backends.parse_backend_spec(str(backend_text))
        except ValueError as exc:
            raise StickerForgeError(str(exc)) from exc

    patterns = cfg.get("patterns", ["black"])
    sizes = cfg.get("sizes", list(attack.DEFAULT_SIZES))
    stride = args.stride if args.stride is not None else cfg.get(
        "stride_pct", attack.DEFAULT_STRIDE_PCT)
    gap = cfg.get("gap_pct", attack.DEFAULT_GAP_PCT)
    min_area = cfg.get("min_area_pct", attack.DEFAULT_MIN_AREA_PCT)
    workers = _resolve_workers(args.workers, cfg.get("workers"))
    outdir = Path(args.out if args.out is not None else cfg.get("out_dir", "attack_out"))
    seed = args.seed if args.seed is not None else cfg.get("seed")

    sign_set = signs.ingest_dir(signs_dir)
    for name in patterns:
        attack.pattern_colors(name)  # fail fast on bad config

    classifier = backends.materialize(spec)
    timings: dict = {"workers": workers, "per_pattern_s": {}}
    started = time.perf_counter()
    try:
        baseline = []
        for record in sign_set.records:
            img = record.image
            size = getattr(classifier, "input_size", None)
            if size:
                img = imaging.resize_image(img, size, size)
            baseline.append(report.BaselineEntry(
                sign_id=record.id,
                true_label=record.true_label,
                verdict=classifier.predict(img),
            ))

        outcomes = {}
        for name in patterns:
            t0 = time.perf_counter()
            best, grid = attack.search(
                sign_set,
                attack.pattern_colors(name),
                classifier=spec if workers > 1 else classifier,
                sizes=sizes,
                stride_pct=stride,
                gap_pct=gap,
                min_area_pct=min_area,
                workers=workers,
            )
            outcomes[name] = report.PatternOutcome(best=best, grid=grid)
            timings["per_pattern_s"][name] = time.perf_counter() - t0
            status = "ok" if outcomes[name].succeeded else "no flip"
            print(f"pattern {name}: {status}", file=sys.stderr)
    finally:
        if hasattr(classifier, "close"):
            classifier.close()
    timings["total_s"] = time.perf_counter() - started

    # workers and out_dir stay out of the config echo: they must not change
    # summary bytes (determinism across worker counts); workers is recorded
    # in the timings subtree instead.
    echo = {
        "signs_dir": str(signs_dir),
        "patterns": list(patterns),
        "sizes": [float(s) for s in sizes],
        "stride_pct": float(stride),
        "gap_pct": float(gap),
        "min_area_pct": float(min_area),
        "backend": backend_text if args.backend is None else _spec_text(spec),
        "seed": seed,
    }
    summary = report.RunSummary(
        config=echo, baseline=tuple(baseline), patterns=outcomes, timings=timings,
    )
    report.write_report(summary, outdir, signs=sign_set,
                        overlay_marker=args.overlay_marker)
    print(f"summary={outdir / 'summary.json'}")
    return 0


def _spec_text(spec) -> str:
    if isinstance(spec, backends.BuiltinSpec):
        return f"builtin:{spec.path}"
    return f"external:{spec.cmd}"


def _cmd_report(args) -> int:
    summary = report.load_summary(args.summary)
    signs_dir = args.signs_dir or summary.config.get("signs_dir")
    sign_set = None
    if signs_dir and Path(signs_dir).is_dir():
        sign_set = signs.ingest_dir(signs_dir)
    report.write_report(summary, args.out, signs=sign_set)
    print(f"report written to {args.out}")
    return 0


_COMMANDS = {
    "gen-synthetic": _cmd_gen_synthetic,
    "train": _cmd_train,
    "predict": _cmd_predict,
    "mask-merge": _cmd_mask_merge,
    "attack": _cmd_attack,
    "report": _cmd_report,
}


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except StickerForgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main(argv=None) -> int:
    return run(argv)


if __name__ == "__main__":
    sys.exit(main())
