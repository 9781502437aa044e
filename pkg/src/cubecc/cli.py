"""Command-line entry point: the whole pipeline as subcommands.

Exit codes: 0 success, 1 data/runtime error, 2 usage error.  Every command
that draws random numbers takes one explicit --seed; there is no hidden
entropy, so repeated runs produce byte-identical artifacts.  Output files are
written to a temporary name and renamed into place.
"""

from __future__ import annotations

import argparse
import contextlib
import os
import sys
from pathlib import Path

from . import analysis, augment, baselines, inference, nncore, patches, train as train_mod
from .errors import CubeccError
from .imageio import apply_roi, infer_saturation, load_manifest, make_image_loader

MEDIAN_RULE = ("Medians over even-length lists take the lower middle element "
               "(deterministic, no interpolation).")


@contextlib.contextmanager
def _atomic(path: Path):
    """Yield a temporary path, rename onto the target on success."""
    tmp = path.with_name(path.name + ".tmp")
    try:
        yield tmp
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def _sides(text: str) -> tuple[int, ...]:
    try:
        vals = tuple(int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"sides must be comma-separated integers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("sides must be non-empty")
    return vals


def cmd_analyze(args) -> int:
    manifest = load_manifest(args.manifest)
    base = Path(args.manifest).parent
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    rows = analysis.scatter_export(manifest, args.which)
    with _atomic(out / "scatter.csv") as tmp:
        analysis.write_scatter_csv(rows, tmp)

    loader = make_image_loader(base)
    images = [loader(rec.image_path) for rec in manifest]
    hist = analysis.max_histogram(images, bin_width=args.bin_width)
    with _atomic(out / "maxhist.csv") as tmp:
        analysis.write_maxhist_csv(hist, tmp)

    clusters = analysis.saturation_clusters(
        [infer_saturation(img) for img in images], tolerance=args.cluster_tol)
    with _atomic(out / "clusters.csv") as tmp:
        analysis.write_clusters_csv(clusters, tmp)

    print(f"wrote scatter.csv ({len(rows)} rows), maxhist.csv ({len(hist)} bins), "
          f"clusters.csv ({len(clusters)} clusters) to {out}")
    return 0


def cmd_patches(args) -> int:
    manifest = load_manifest(args.manifest)
    if args.mode == "train":
        cfg = patches.ExtractConfig(count=args.count, sides=args.sides,
                                    roi_x=args.roi_x, seed=args.seed)
        tensors = patches.extract_training_set(manifest, args.images, cfg)
    else:
        tensors = patches.extract_validation_set(manifest, args.images, args.seed,
                                                 side=max(args.sides), roi_x=args.roi_x)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with _atomic(out) as tmp:
        patches.tensor_file_write(tmp, tensors)
    print(len(tensors))
    return 0


def cmd_train(args) -> int:
    train_patches = patches.tensor_file_read(args.train)
    val_patches = patches.tensor_file_read(args.val)
    results = []
    for run in range(args.runs):
        seed = args.seed + run
        model = nncore.build_cerberus(seed=seed)
        cfg = train_mod.TrainConfig(
            batch_size=args.batch, drop_worst_frac=args.drop_worst,
            drop_best_frac=args.drop_best, l2=args.l2, epochs=args.epochs,
            learning_rate=args.lr, optimizer=args.optimizer, seed=seed)
        result = train_mod.train(model, train_patches, val_patches, cfg)
        print(f"run {run} (seed {seed}): final val median "
              f"{result.final_val_median:.4f} deg", file=sys.stderr)
        results.append(result)
    best = train_mod.select_best(results, val_patches)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with _atomic(out) as tmp:
        nncore.checkpoint_save(best.model, tmp)
    with _atomic(out.parent / "history.csv") as tmp:
        train_mod.write_history_csv(best.history, tmp)
    print(f"saved {out} ({best.model.param_count} parameters)")
    return 0


def _make_estimator(args) -> inference.Estimator:
    spec = args.estimator
    if spec == "grayworld":
        return lambda img: baselines.gray_world(
            apply_roi(img, min(inference.DEFAULT_ROI_X, img.width)))
    if spec == "constant":
        return lambda img: baselines.constant_estimator()
    if spec.startswith("model:"):
        model = nncore.load_model(spec[len("model:"):])
        return inference.model_estimator(model, k_patches=args.k_patches, seed=args.seed)
    raise CubeccError(
        f"estimator must be grayworld, constant or model:<path>, got {spec!r}")


def cmd_eval(args) -> int:
    manifest = load_manifest(args.manifest)
    estimator = _make_estimator(args)
    stats, rows = inference.evaluate(manifest, args.images, estimator)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with _atomic(out / "report.csv") as tmp:
        inference.write_report_csv(rows, tmp)
    summary = inference.summary_json(stats)
    with _atomic(out / "summary.json") as tmp:
        tmp.write_text(summary + "\n", encoding="utf-8")
    print(summary)
    return 0


def cmd_augment(args) -> int:
    manifest = load_manifest(args.manifest)
    policy = {"reject": "reject", "clamp": "clamp",
              "skip": "skip_saturated_images"}[args.sat_policy]
    cfg = augment.AugmentConfig(gain_min=args.gain_min, gain_max=args.gain_max,
                                max_chroma_shift_deg=args.max_shift_deg,
                                saturation_policy=policy, seed=args.seed)
    combined, skipped = augment.augment_manifest(manifest, args.images, args.out,
                                                 args.per_image, cfg)
    n_new = len(combined) - len(manifest)
    print(f"wrote {n_new} augmented images ({len(skipped)} skipped) "
          f"and manifest.csv to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cubecc",
        description="Color constancy toolkit: dataset analysis, augmentation, "
                    "patch extraction, training, and evaluation.",
        epilog=MEDIAN_RULE)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="export chromaticity scatter, channel-max "
                                       "histogram, and saturation clusters as CSV")
    p.add_argument("--manifest", required=True,
                   help="dataset CSV; image paths resolve relative to its directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--which", choices=("dominant", "left", "right"), default="dominant")
    p.add_argument("--bin-width", type=float, default=100.0)
    p.add_argument("--cluster-tol", type=float, default=64.0)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("patches", help="extract a deterministic patch tensor file")
    p.add_argument("--manifest", required=True)
    p.add_argument("--images", required=True, help="directory holding the PPM files")
    p.add_argument("--out", required=True, help="output .ccpt path")
    p.add_argument("--mode", choices=("train", "val"), required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--count", type=int, default=100, help="patches per image (train mode)")
    p.add_argument("--roi-x", type=int, default=1900,
                   help="keep columns x < ROI-X (clamped to the image width)")
    p.add_argument("--sides", type=_sides, default=(768, 1152, 1536),
                   help="comma-separated patch sides, multiples of 64; "
                        "val mode uses the largest")
    p.set_defaults(func=cmd_patches)

    p = sub.add_parser("train", help="train one or more networks, keep the one "
                                     "with the best validation median")
    p.add_argument("--train", required=True, help="training .ccpt file")
    p.add_argument("--val", required=True, help="validation .ccpt file")
    p.add_argument("--out", required=True, help="output .ccnn checkpoint path")
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--l2", type=float, default=1e-5)
    p.add_argument("--batch", type=int, default=256)
    p.add_argument("--drop-worst", type=float, default=0.2)
    p.add_argument("--drop-best", type=float, default=0.01)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--optimizer", choices=train_mod.OPTIMIZERS, default="sgd_momentum")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score an estimator; writes report.csv and "
                                    "summary.json", epilog=MEDIAN_RULE)
    p.add_argument("--manifest", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--estimator", required=True,
                   help="grayworld | constant | model:<checkpoint path>")
    p.add_argument("--k-patches", type=int, default=1,
                   help="patches per image for model estimators")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("augment", help="write color-gained image copies plus a "
                                       "combined manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--per-image", type=int, required=True)
    p.add_argument("--gain-min", type=float, default=0.8)
    p.add_argument("--gain-max", type=float, default=1.25)
    p.add_argument("--max-shift-deg", type=float, default=10.0)
    p.add_argument("--sat-policy", choices=("reject", "clamp", "skip"), default="skip")
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_augment)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CubeccError as exc:
        print(f"cubecc: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"cubecc: error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
