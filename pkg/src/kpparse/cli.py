"""Command-line entry point: ``kpparse <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np
from PIL import Image

from . import io, synth
from .core import LabelMask
from .evaluation import confusion_over, iou_report
from .pipeline import (
    PipelineConfig,
    RegionScorerProvider,
    StaticScoreProvider,
    _map,
    _prepare_job,
    prepare_image,
    refine_iteratively,
    solve,
    test_time_refine,
)
from .scorer import correlation_fuse, predict_scores

log = logging.getLogger("kpparse")

EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser, manifest: bool = True) -> None:
    p.add_argument("--config", type=Path, help="pipeline config JSON (defaults if omitted)")
    if manifest:
        p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kpparse", description="Keypoint-supervised human part pseudo masks.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("superpixels", help="write superpixel region maps and boundary images")
    _common(p)

    p = sub.add_parser("pseudo-mask", help="keypoint-only graph-cut pseudo masks")
    _common(p)
    p.add_argument("--use-scores", action="store_true", help="add manifest score maps as a unary term")

    p = sub.add_parser("refine", help="iterative refinement with the region scorer")
    _common(p)
    p.add_argument("--iterations", type=int, help="override config iterations")
    p.add_argument("--external-scores", action="store_true", help="use manifest score maps instead of the scorer")

    p = sub.add_parser("test-refine", help="graph cut over test-time keypoints plus score maps")
    _common(p)
    p.add_argument("--model", type=Path, help="scorer model JSON; otherwise manifest score maps are used")

    p = sub.add_parser("evaluate", help="IoU report of predicted masks against ground truth")
    _common(p)
    p.add_argument("--pred-dir", type=Path, required=True)

    p = sub.add_parser("overlay", help="palette overlays of masks on their images")
    _common(p)
    p.add_argument("--pred-dir", type=Path, required=True)

    p = sub.add_parser("synth-fixture", help="generate the synthetic stick-figure dataset")
    _common(p, manifest=False)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--size", type=int, default=128)
    return parser


def _config(args) -> PipelineConfig:
    return io.load_config(args.config) if args.config else PipelineConfig()


def _dataset(args, config):
    records = io.load_manifest(args.manifest)
    return records, io.load_dataset(records, config)


def _write_masks(out: Path, names, masks) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for name, mask in zip(names, masks):
        io.save_mask(mask, out / f"{name}.png")


def _write_report(path: Path, report) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["class", "iou"])
        for name, value in report.rows():
            writer.writerow([name, f"{value:.6f}"])


def _report_if_gt(out: Path, samples, masks, config) -> None:
    if samples and all(s.gt is not None for s in samples):
        matrix = confusion_over(zip(masks, (s.gt for s in samples)), config.num_labels)
        _write_report(out / "report.csv", iou_report(matrix, config.taxonomy))


def cmd_superpixels(args) -> None:
    config = _config(args)
    records, samples = _dataset(args, config)
    contexts = _map(_prepare_job, [(s.image, config) for s in samples], args.jobs)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for s, ctx in zip(samples, contexts):
        region_of = ctx.partition.region_of
        Image.fromarray(region_of.astype(np.uint16)).save(args.out_dir / f"{s.name}_regions.png")
        edge = np.zeros(region_of.shape, bool)
        edge[:, 1:] |= region_of[:, 1:] != region_of[:, :-1]
        edge[1:, :] |= region_of[1:, :] != region_of[:-1, :]
        px = s.image.pixels.copy()
        px[edge] = (255, 255, 0)
        Image.fromarray(px).save(args.out_dir / f"{s.name}_boundaries.png")
        rows.append((s.name, ctx.partition.region_count, ctx.graph.edge_count))
    with open(args.out_dir / "superpixels.csv", "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["image", "regions", "edges"])
        writer.writerows(rows)


def cmd_pseudo_mask(args) -> None:
    config = _config(args)
    _, samples = _dataset(args, config)
    if args.use_scores and any(s.scores is None for s in samples):
        raise io.DataError("--use-scores needs a score map for every manifest record")
    contexts = _map(_prepare_job, [(s.image, config) for s in samples], args.jobs)
    masks = [
        solve(ctx, s.persons, config, s.scores if args.use_scores else None).mask
        for s, ctx in zip(samples, contexts)
    ]
    _write_masks(args.out_dir / "masks", [s.name for s in samples], masks)
    _report_if_gt(args.out_dir, samples, masks, config)


def cmd_refine(args) -> None:
    config = _config(args)
    if args.iterations is not None:
        config = PipelineConfig.from_dict({**config.to_dict(), "iterations": args.iterations})
    _, samples = _dataset(args, config)
    if args.external_scores:
        if any(s.scores is None for s in samples):
            raise io.DataError("--external-scores needs a score map for every manifest record")
        provider = StaticScoreProvider([s.scores for s in samples])
    else:
        provider = RegionScorerProvider(config)
    contexts = _map(_prepare_job, [(s.image, config) for s in samples], args.jobs)
    result = refine_iteratively(samples, config, provider, jobs=args.jobs, contexts=contexts)

    out = args.out_dir
    names = [s.name for s in samples]
    for t, masks in enumerate(result.history, start=1):
        _write_masks(out / f"iter_{t}", names, masks)
    _write_masks(out / "masks", names, result.masks)
    with open(out / "metrics.csv", "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["iteration", "mean_iou", "object_iou", "flagged"])
        for m in result.metrics:
            fmt = lambda v: "" if v is None else f"{v:.6f}"
            writer.writerow([m.iteration, fmt(m.mean_iou), fmt(m.object_iou), int(m.flagged)])
    if result.model is not None and not args.external_scores:
        io.save_model(result.model, out / "model.json")
        (out / "scores").mkdir(exist_ok=True)
        for s, ctx in zip(samples, contexts):
            part, obj = predict_scores(result.model, ctx.partition, ctx.features.matrix())
            io.save_scores(correlation_fuse(part, obj).normalized, out / "scores" / f"{s.name}.f32")
    _report_if_gt(out, samples, result.masks, config)
    (out / "run.json").write_text(json.dumps({"seed": args.seed, "config": config.to_dict()}, indent=1) + "\n")


def cmd_test_refine(args) -> None:
    config = _config(args)
    _, samples = _dataset(args, config)
    model = io.load_model(args.model) if args.model else None
    masks = []
    for s in samples:
        ctx = prepare_image(s.image, config)
        if model is not None:
            part, obj = predict_scores(model, ctx.partition, ctx.features.matrix())
            scores = correlation_fuse(part, obj).normalized
        elif s.scores is not None:
            scores = s.scores
        else:
            raise io.DataError(f"{s.name}: no score map in the manifest and no --model given")
        masks.append(test_time_refine(s.image, s.persons, scores, config, context=ctx))
    _write_masks(args.out_dir / "masks", [s.name for s in samples], masks)
    _report_if_gt(args.out_dir, samples, masks, config)


def _predictions(args, samples, config) -> list[LabelMask]:
    preds = []
    for s in samples:
        path = args.pred_dir / f"{s.name}.png"
        if not path.exists():
            raise io.DataError(f"missing prediction {path}")
        pred = io.load_mask(path, config.num_labels)
        if pred.shape != s.image.shape:
            raise io.DataError(f"{path}: size {pred.shape} does not match image {s.image.shape}")
        preds.append(pred)
    return preds


def cmd_evaluate(args) -> None:
    config = _config(args)
    _, samples = _dataset(args, config)
    if any(s.gt is None for s in samples):
        raise io.DataError("every manifest record needs a gt_mask to evaluate")
    preds = _predictions(args, samples, config)
    report = iou_report(confusion_over(zip(preds, (s.gt for s in samples)), config.num_labels), config.taxonomy)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    _write_report(args.out_dir / "report.csv", report)
    sys.stdout.write((args.out_dir / "report.csv").read_text())


def cmd_overlay(args) -> None:
    config = _config(args)
    _, samples = _dataset(args, config)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    for s, pred in zip(samples, _predictions(args, samples, config)):
        io.save_overlay(s.image, pred, args.out_dir / f"{s.name}.png")


def cmd_synth_fixture(args) -> None:
    if args.count < 1 or args.size < 32:
        raise UsageError("--count must be >= 1 and --size >= 32")
    config = _config(args)
    out = args.out_dir
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "gt").mkdir(exist_ok=True)
    samples = synth.make_dataset(args.count, args.size, args.seed)
    records, persons = [], {}
    for s in samples:
        image, gt = f"images/{s.name}.png", f"gt/{s.name}.png"
        io.save_image(s.image, out / image)
        io.save_mask(s.gt, out / gt)
        persons[image] = s.persons
        records.append({"image": image, "gt_mask": gt})
    (out / "keypoints.json").write_text(io.dump_keypoints("pascal", persons) + "\n")
    manifest = {"keypoints": "keypoints.json", "records": records}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    io.save_config(config, out / "config.json")


COMMANDS = {
    "superpixels": cmd_superpixels,
    "pseudo-mask": cmd_pseudo_mask,
    "refine": cmd_refine,
    "test-refine": cmd_test_refine,
    "evaluate": cmd_evaluate,
    "overlay": cmd_overlay,
    "synth-fixture": cmd_synth_fixture,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.jobs < 1:
        print("kpparse: error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"kpparse: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (io.DataError, FileNotFoundError, ValueError) as exc:
        print(f"kpparse: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
