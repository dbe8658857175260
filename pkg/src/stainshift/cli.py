"""Command-line orchestration of the full pipeline.

Subcommands: prepare, train-translation, translate, segment, evaluate,
detect-positive, report. Each invocation writes its artifacts plus exactly
one run record into its output directory. Exit codes: 0 success, 2 config
error, 3 data error, 4 backend error, 5 training diverged.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import __version__
from .errors import DataError, StainShiftError
from .evaluation import evaluate_dataset, format_table, render_overlay
from .imaging import (IMAGE_EXTENSIONS, extract_patch, read_image,
                      read_label_map, sample_patches, write_image,
                      write_label_map)
from .manifest import (DOMAIN_HE, DOMAIN_IHC, DatasetManifest, ManifestEntry,
                       sha256_file)
from .pipeline import (PipelineConfig, RunRecord, make_run_id, utc_now)
from .positivity import detect_positive_cells, positivity_report, \
    write_submission
from .segmentation import SegmenterDescriptor, create_segmenter
from .validation import check_rgb

STAGE_DIRS = {
    "prepare": "manifests",
    "train-translation": "checkpoints",
    "translate": "virtual_he",
    "segment": "masks",
    "evaluate": "metrics",
    "detect-positive": "detections",
    "report": "reports",
}


def _list_images(directory: Path) -> list[Path]:
    if not directory.is_dir():
        raise DataError(f"not a directory: {directory}")
    paths = sorted(p for p in directory.iterdir()
                   if p.suffix.lower() in IMAGE_EXTENSIONS)
    if not paths:
        raise ValueError(f"no images found in {directory}")
    return paths


def _dir_checksum(directory: Path) -> str:
    if not directory.is_dir():
        raise DataError(f"not a directory: {directory}")
    digest = hashlib.sha256()
    for path in sorted(directory.iterdir()):
        if path.is_file():
            digest.update(path.name.encode())
            digest.update(sha256_file(path).encode())
    return "sha256:" + digest.hexdigest()


def _resolve_out(args, stage: str, config: dict) -> tuple[Path, str]:
    run_id = make_run_id(config)
    if args.out:
        out = Path(args.out)
    else:
        out = Path(args.workspace) / STAGE_DIRS[stage] / run_id
    out.mkdir(parents=True, exist_ok=True)
    return out, run_id


def _load_config(args) -> PipelineConfig:
    config = PipelineConfig.from_file(args.config) if args.config \
        else PipelineConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.deterministic:
        overrides["deterministic"] = True
    if overrides:
        config = replace(config,
                         translation=replace(config.translation, **overrides))
    return config


def _parallel_map(func, items, jobs: int):
    if jobs <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, items))


def _finish_record(record: RunRecord, out_dir: Path):
    record.finished = utc_now()
    record.outputs = sorted(
        str(p.relative_to(out_dir)) for p in out_dir.rglob("*")
        if p.is_file() and p.name != "run_record.json")
    record.save(out_dir)


def _segment_via_exchange(segmenter, images, out_dir) -> list[str]:
    """One directory-level exchange run, then validate and relabel masks."""
    import tempfile

    from .imaging import relabel_sequential
    from .segmentation import run_exchange

    with tempfile.TemporaryDirectory(prefix="stainshift-segment-") as tmp:
        staged = Path(tmp) / "input"
        staged.mkdir()
        shapes = {}
        for path in images:
            image = read_image(path)
            check_rgb(image, str(path))
            shapes[path.stem] = image.shape[:2]
            write_image(staged / (path.stem + ".png"), image)
        raw = Path(tmp) / "output"
        run_exchange(segmenter.contract(), staged, raw)
        names = []
        for path in images:
            mask_name = path.stem + ".png"
            labels = read_label_map(raw / mask_name)
            if labels.shape != shapes[path.stem]:
                raise DataError(
                    f"backend returned {labels.shape} mask for {path.name}")
            write_label_map(out_dir / mask_name, relabel_sequential(labels))
            names.append(mask_name)
    return names


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_prepare(args) -> int:
    config = _load_config(args)
    domain = DOMAIN_IHC if args.domain.lower() == "ihc" else DOMAIN_HE
    seed = config.translation.seed
    patch_size = args.patch_size
    resolved = {"command": "prepare", "domain": domain,
                "patch_size": patch_size, "count": args.count,
                "seed": seed, "whole": args.whole,
                "min_saturation": args.min_saturation}
    out_dir, run_id = _resolve_out(args, "prepare", resolved)
    record = RunRecord(run_id=run_id, command=sys.argv[1:], config=resolved,
                       started=utc_now())

    input_dir = Path(args.input)
    images = _list_images(input_dir)
    patch_dir = out_dir / "patches"
    entries: list[ManifestEntry] = []
    for image_path in images:
        image = read_image(image_path)
        if args.whole:
            check_rgb(image, str(image_path))
            rel = f"patches/{image_path.stem}.png"
            write_image(out_dir / rel, image)
            entries.append(ManifestEntry(
                source=str(image_path), file=rel,
                checksum=sha256_file(out_dir / rel), patch=None))
            continue
        specs = sample_patches(image, patch_size, args.count,
                               seed, args.min_saturation)
        for i, spec in enumerate(specs):
            patch = extract_patch(image, spec)
            rel = f"patches/{image_path.stem}_p{i:03d}.png"
            write_image(out_dir / rel, patch)
            entries.append(ManifestEntry(
                source=str(image_path), file=rel,
                checksum=sha256_file(out_dir / rel), patch=spec))

    manifest = DatasetManifest(domain=domain, entries=entries)
    manifest_path = manifest.save(out_dir / "manifest.json")
    record.inputs = {str(input_dir): _dir_checksum(input_dir)}
    _finish_record(record, out_dir)
    print(f"wrote {len(entries)} entries to {manifest_path}")
    print(f"run directory: {out_dir}")
    return 0


def cmd_train_translation(args) -> int:
    from .errors import ConfigError
    from .translation import train

    config = _load_config(args)
    tconfig = config.translation
    for name in ("epochs", "batch_size", "patch_size", "base_channels",
                 "n_res_blocks", "checkpoint_every"):
        value = getattr(args, name)
        if value is not None:
            tconfig = replace(tconfig, **{name: value})

    manifest_a = DatasetManifest.load(args.manifest_a)
    manifest_b = DatasetManifest.load(args.manifest_b)
    if manifest_a.domain != DOMAIN_IHC or manifest_b.domain != DOMAIN_HE:
        raise ConfigError(
            f"domain-tag mismatch: manifest A is {manifest_a.domain!r} "
            f"(need {DOMAIN_IHC!r}), manifest B is {manifest_b.domain!r} "
            f"(need {DOMAIN_HE!r})")

    resolved = {"command": "train-translation", **tconfig.__dict__}
    out_dir, run_id = _resolve_out(args, "train-translation", resolved)
    record = RunRecord(run_id=run_id, command=sys.argv[1:], config=resolved,
                       started=utc_now(),
                       inputs={str(args.manifest_a): manifest_a.checksum(),
                               str(args.manifest_b): manifest_b.checksum()})

    checkpoint = train(tconfig, manifest_a, manifest_b,
                       checkpoint_dir=out_dir,
                       history_csv=out_dir / "loss_history.csv")
    checkpoint_path = checkpoint.save(out_dir / "checkpoint.zip")
    _finish_record(record, out_dir)
    print(f"checkpoint: {checkpoint_path}")
    return 0


def cmd_translate(args) -> int:
    from .translation import CycleGanTranslator, translate_tiled

    config = _load_config(args)
    resolved = {"command": "translate", "checkpoint": str(args.checkpoint),
                "tile_size": args.tile_size, "overlap": args.overlap}
    out_dir, run_id = _resolve_out(args, "translate", resolved)
    record = RunRecord(run_id=run_id, command=sys.argv[1:], config=resolved,
                       started=utc_now())

    translator = CycleGanTranslator.from_checkpoint(args.checkpoint)
    input_dir = Path(args.input)
    images = _list_images(input_dir)
    record.inputs = {str(input_dir): _dir_checksum(input_dir),
                     str(args.checkpoint): sha256_file(args.checkpoint)}

    def run_one(path: Path) -> str:
        image = read_image(path)
        virtual = translate_tiled(translator, image,
                                  tile_size=args.tile_size,
                                  overlap=args.overlap)
        out_path = out_dir / (path.stem + ".png")
        write_image(out_path, virtual)
        return out_path.name

    names = _parallel_map(run_one, images, args.jobs)
    _finish_record(record, out_dir)
    print(f"translated {len(names)} images into {out_dir}")
    return 0


def cmd_segment(args) -> int:
    config = _load_config(args)
    seg = config.segmentation
    backend = args.backend or seg.backend
    if backend == "classical":
        params = {f: getattr(seg.classical, f)
                  for f in ("smoothing_sigma", "min_area", "footprint",
                            "invert")}
    else:
        params = {}
        if seg.exchange_command:
            params["command"] = seg.exchange_command
        params["timeout"] = seg.exchange_timeout
    descriptor = SegmenterDescriptor(backend=backend, name=backend,
                                     version=__version__, params=params)
    segmenter = create_segmenter(descriptor)  # fail fast on unknown backend

    resolved = {"command": "segment", "backend": backend, "params": params}
    out_dir, run_id = _resolve_out(args, "segment", resolved)
    record = RunRecord(run_id=run_id, command=sys.argv[1:], config=resolved,
                       started=utc_now())

    input_dir = Path(args.input)
    images = _list_images(input_dir)
    record.inputs = {str(input_dir): _dir_checksum(input_dir)}

    source_dir = Path(args.source_dir) if args.source_dir else None
    mask_sources = {}

    if backend == "exchange":
        names = _segment_via_exchange(segmenter, images, out_dir)
    else:
        def run_one(path: Path) -> str:
            image = read_image(path)
            labels = segmenter.predict(check_rgb(image, str(path)))
            if labels.shape != image.shape[:2]:
                raise DataError(
                    f"backend returned {labels.shape} mask for {path.name}")
            mask_name = path.stem + ".png"
            write_label_map(out_dir / mask_name, labels)
            return mask_name

        names = _parallel_map(run_one, images, args.jobs)
    for path, mask_name in zip(images, names):
        source = path
        if source_dir is not None:
            for ext in IMAGE_EXTENSIONS:
                candidate = source_dir / (path.stem + ext)
                if candidate.exists():
                    source = candidate
                    break
        mask_sources[mask_name] = str(source)
    record.config["mask_sources"] = mask_sources
    _finish_record(record, out_dir)
    print(f"segmented {len(names)} images into {out_dir}")
    return 0


def cmd_evaluate(args) -> int:
    config = _load_config(args)
    ev = config.evaluation
    threshold = args.threshold if args.threshold is not None \
        else ev.iou_threshold
    start = args.iou_start if args.iou_start is not None else ev.curve_start
    stop = args.iou_stop if args.iou_stop is not None else ev.curve_stop
    step = args.iou_step if args.iou_step is not None else ev.curve_step

    resolved = {"command": "evaluate", "threshold": threshold,
                "curve": [start, stop, step], "label": args.label}
    out_dir, run_id = _resolve_out(args, "evaluate", resolved)
    record = RunRecord(run_id=run_id, command=sys.argv[1:], config=resolved,
                       started=utc_now(),
                       inputs={str(args.pred): _dir_checksum(Path(args.pred)),
                               str(args.gt): _dir_checksum(Path(args.gt))})

    report = evaluate_dataset(args.pred, args.gt, threshold=threshold,
                              curve_start=start, curve_stop=stop,
                              curve_step=step,
                              label=args.label or run_id)
    with open(out_dir / "metrics.json", "w") as fh:
        json.dump(report.as_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")
    with open(out_dir / "table.txt", "w") as fh:
        fh.write(format_table([report]))
    with open(out_dir / "curve.csv", "w") as fh:
        fh.write("threshold,accuracy\n")
        for point in report.curve:
            fh.write(f"{point.threshold},{point.accuracy}\n")
    overlay_dir = out_dir / "overlays"
    for name in sorted(p.name for p in Path(args.pred).glob("*.png")):
        pred = read_label_map(Path(args.pred) / name)
        gt = read_label_map(Path(args.gt) / name)
        write_image(overlay_dir / name, render_overlay(pred > 0, gt > 0))
    _finish_record(record, out_dir)
    print(format_table([report]))
    print(f"metrics written to {out_dir}")
    return 0


def cmd_detect_positive(args) -> int:
    config = _load_config(args)
    thresholds = config.positivity
    overrides = {}
    for name in ("hue_low", "hue_high", "min_saturation", "max_intensity",
                 "min_fraction"):
        value = getattr(args, name)
        if value is not None:
            overrides[name] = value
    if overrides:
        thresholds = replace(thresholds, **overrides)

    resolved = {"command": "detect-positive", **thresholds.__dict__}
    out_dir, run_id = _resolve_out(args, "detect-positive", resolved)
    record = RunRecord(run_id=run_id, command=sys.argv[1:], config=resolved,
                       started=utc_now())

    ihc_dir, mask_dir = Path(args.ihc), Path(args.masks)
    ihc_names = {p.stem: p for p in _list_images(ihc_dir)}
    mask_names = {p.stem: p for p in sorted(mask_dir.glob("*.png"))}
    missing_masks = sorted(set(ihc_names) - set(mask_names))
    missing_ihc = sorted(set(mask_names) - set(ihc_names))
    if missing_masks or missing_ihc:
        raise DataError(
            f"IHC/mask basename mismatch; masks missing: {missing_masks}; "
            f"IHC missing: {missing_ihc}")
    record.inputs = {str(ihc_dir): _dir_checksum(ihc_dir),
                     str(mask_dir): _dir_checksum(mask_dir)}

    detections = []
    full_report = []
    for stem in sorted(ihc_names):
        image = read_image(ihc_names[stem])
        labels = read_label_map(mask_names[stem])
        detections += detect_positive_cells(image, labels, thresholds,
                                            image_id=stem)
        full_report += positivity_report(image, labels, thresholds,
                                         image_id=stem)
    write_submission(detections, out_dir / "submission.csv")
    with open(out_dir / "full_report.json", "w") as fh:
        json.dump({"thresholds": thresholds.__dict__,
                   "cells": full_report}, fh, indent=1, sort_keys=True)
        fh.write("\n")
    _finish_record(record, out_dir)
    positives = sum(1 for d in detections if d.positive)
    print(f"{positives} positive cells of {len(detections)} -> "
          f"{out_dir / 'submission.csv'}")
    return 0


def cmd_report(args) -> int:
    rows = []
    for run_dir in args.runs:
        record = RunRecord.load(run_dir)
        metrics_path = Path(run_dir) / "metrics.json"
        if not metrics_path.exists():
            raise DataError(f"{run_dir} has no metrics.json "
                            "(expected an evaluate run)")
        with open(metrics_path) as fh:
            metrics = json.load(fh)
        rows.append((record.run_id, metrics))
    rows.sort(key=lambda r: r[0])

    header = "Method | Dice Score | Accuracy | Precision | Recall | F1 Score"
    lines = [header, "-" * len(header)]
    for run_id, metrics in rows:
        micro = metrics["instance_micro"]
        label = metrics.get("label") or run_id
        cells = [f"{metrics['dice_macro']:.2f}", f"{micro['accuracy']:.2f}",
                 f"{micro['precision']:.2f}", f"{micro['recall']:.2f}",
                 f"{micro['f1']:.2f}"]
        lines.append(" | ".join([label] + cells))
    table = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w") as fh:
            fh.write(table)
    print(table, end="")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stainshift",
        description="Label-free nuclei segmentation for IHC images via "
                    "virtual H&E staining.")
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None,
                        help="JSON pipeline configuration file")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--deterministic", action="store_true")
    common.add_argument("--jobs", type=int, default=1,
                        help="parallel workers for per-image stages")
    common.add_argument("--workspace", default="runs",
                        help="root for auto-named output directories")
    common.add_argument("--out", default=None,
                        help="explicit output directory for this run")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", parents=[common],
                       help="sample training patches and write a manifest")
    p.add_argument("--input", required=True)
    p.add_argument("--domain", required=True,
                   choices=("ihc", "he", "IHC", "HE"))
    p.add_argument("--patch-size", type=int, default=256, dest="patch_size")
    p.add_argument("--count", type=int, default=10,
                   help="patches per source image")
    p.add_argument("--whole", action="store_true",
                   help="register whole images instead of sampling patches")
    p.add_argument("--min-saturation", type=float, default=None,
                   dest="min_saturation",
                   help="optional tissue filter on mean patch saturation")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train-translation", parents=[common],
                       help="train the IHC->H&E translator")
    p.add_argument("--manifest-a", required=True, dest="manifest_a",
                   help="IHC manifest")
    p.add_argument("--manifest-b", required=True, dest="manifest_b",
                   help="H&E manifest")
    for name in ("epochs", "batch-size", "patch-size", "base-channels",
                 "n-res-blocks", "checkpoint-every"):
        p.add_argument(f"--{name}", type=int, default=None,
                       dest=name.replace("-", "_"))
    p.set_defaults(func=cmd_train_translation)

    p = sub.add_parser("translate", parents=[common],
                       help="produce virtual H&E images")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--tile-size", type=int, default=256, dest="tile_size")
    p.add_argument("--overlap", type=int, default=32)
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("segment", parents=[common],
                       help="segment nuclei in a directory of images")
    p.add_argument("--backend", default=None,
                   help="classical or exchange (default from config)")
    p.add_argument("--input", required=True)
    p.add_argument("--source-dir", default=None, dest="source_dir",
                   help="original IHC images the masks belong to")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("evaluate", parents=[common],
                       help="score predicted masks against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--threshold", type=float, default=None,
                   help="IoU threshold for the headline metrics")
    p.add_argument("--iou-start", type=float, default=None, dest="iou_start")
    p.add_argument("--iou-stop", type=float, default=None, dest="iou_stop")
    p.add_argument("--iou-step", type=float, default=None, dest="iou_step")
    p.add_argument("--label", default="",
                   help="method name for the comparison table")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("detect-positive", parents=[common],
                       help="classify stained cells and export centroids")
    p.add_argument("--ihc", required=True)
    p.add_argument("--masks", required=True)
    p.add_argument("--hue-low", type=float, default=None, dest="hue_low")
    p.add_argument("--hue-high", type=float, default=None, dest="hue_high")
    p.add_argument("--min-saturation", type=float, default=None,
                   dest="min_saturation")
    p.add_argument("--max-intensity", type=float, default=None,
                   dest="max_intensity")
    p.add_argument("--min-fraction", type=float, default=None,
                   dest="min_fraction")
    p.set_defaults(func=cmd_detect_positive)

    p = sub.add_parser("report", parents=[common],
                       help="consolidate evaluate runs into one table")
    p.add_argument("--runs", nargs="+", required=True,
                   help="run directories to tabulate")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except StainShiftError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
