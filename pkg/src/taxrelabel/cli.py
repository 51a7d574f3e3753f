"""Command-line entry point.

Subcommands: ``gen`` (synthetic fixture dataset), ``train`` (self-training
experiment), ``relabel`` (offline pipeline over a pseudo-label directory),
``automap`` (map collection/finalization from patch data), ``eval``
(IoU metrics), ``render`` (palette PPM visualization). Every subcommand is
deterministic given its config and seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import automap as automap_mod
from .config import ConfigError, RunConfig
from .detect import (
    detections_from_jsonl,
    detections_to_jsonl,
    extract_patches,
    filter_by_score,
    group_by_image,
    nms,
)
from .metrics import (
    ConfusionMatrix,
    MIoUSpec,
    accumulate_confusion,
    format_iou_table,
    iou_per_class,
    mean_iou,
)
from .raster import (
    constant_confidence,
    read_confidence,
    read_raster,
    write_confidence,
    write_raster,
)
from .relabel import RelabelReport, apply_csi
from .render import render_ppm
from .sim import presets
from .sim.experiment import run_experiment
from .sim.oracles import derive_seed, simulate_classifier, simulate_detector
from .sim.world import generate_scene
from .taxonomy import (
    ConversionTable,
    MapEntry,
    MapOrigin,
    RelabelMap,
    convert_label_space,
    format_taxonomy_document,
    map_to_json,
)
from .zsfilter import (
    build_concept_index,
    classifications_from_jsonl,
    classifications_to_jsonl,
    classify_patch,
    precheck_contains_from,
)


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="taxrelabel",
        description="Pseudo-label relabeling across inconsistent class taxonomies",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic fixture dataset")
    _common_flags(gen)
    gen.set_defaults(func=cmd_gen)

    train = sub.add_parser("train", help="run a self-training experiment")
    _common_flags(train)
    train.add_argument("--csi", choices=["on", "off"], default=None,
                       help="override relabeling on/off")
    train.set_defaults(func=cmd_train)

    relabel = sub.add_parser("relabel", help="relabel a directory of pseudo-labels")
    _common_flags(relabel)
    relabel.add_argument("--emit-patches", metavar="PATH", default=None,
                         help="write the extracted-patch manifest (JSONL) and skip relabeling")
    relabel.set_defaults(func=cmd_relabel)

    auto = sub.add_parser("automap", help="collect candidate counts and finalize a map")
    _common_flags(auto)
    auto.set_defaults(func=cmd_automap)

    ev = sub.add_parser("eval", help="evaluate predictions against ground truth")
    _common_flags(ev)
    ev.set_defaults(func=cmd_eval)

    render = sub.add_parser("render", help="render label rasters to PPM images")
    render.add_argument("inputs", nargs="+", help="input .csil files")
    render.add_argument("--out", required=True, help="output directory")
    render.set_defaults(func=cmd_render)

    return parser


def _common_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", required=True, help="TOML run configuration")
    sub.add_argument("--out", required=True, help="output directory")
    sub.add_argument("--seed", type=int, default=None, help="override the config seed")
    sub.add_argument("--workers", type=int, default=1, help="parallel workers where supported")


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# gen

_GEN_WORLD_TAG = 11
_GEN_DET_TAG = 12
_GEN_CLS_TAG = 13


def _gen_one_world(index: int, seed: int):
    """Build one fixture world; module-level so worker processes can run it."""
    scene = presets.demo_scene_config()
    world = generate_scene(scene, derive_seed(seed, _GEN_WORLD_TAG, index))
    # the pseudo-label fixture plants the studied confusion: every new class
    # is labeled as its confusable source partner
    confusion = ConversionTable(
        pairs=(
            (presets.ROAD, presets.ROAD),
            (presets.BUILDING, presets.BUILDING),
            (presets.VEGETATION, presets.VEGETATION),
            (presets.TERRAIN, presets.VEGETATION),
            (presets.CAR, presets.CAR),
            (presets.TRUCK, presets.CAR),
            (presets.BUS, presets.BUS),
            (presets.TRAIN, presets.BUS),
        )
    )
    pseudo = convert_label_space(world.gt_labels, confusion)
    return world, pseudo


def cmd_gen(args) -> int:
    config = RunConfig.load(args.config)
    options = config.gen_options()
    seed = args.seed if args.seed is not None else options["seed"]
    noise = config.noise()
    out = _outdir(args)
    for sub in ("worlds", "gt", "pseudo", "conf"):
        (out / sub).mkdir(exist_ok=True)

    target = presets.demo_target_taxonomy()
    source = presets.demo_source_taxonomy()
    scene = presets.demo_scene_config()
    thresholds = presets.demo_thresholds()
    new_classes = sorted(target.ids - source.ids)
    concept_index = build_concept_index(
        target, (presets.VEGETATION, presets.TERRAIN, presets.CAR,
                 presets.TRUCK, presets.BUS, presets.TRAIN)
    )

    indices = list(range(options["num_worlds"]))
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            built = list(pool.map(_gen_one_world, indices, [seed] * len(indices)))
    else:
        built = [_gen_one_world(i, seed) for i in indices]

    det_lines = []
    cls_lines = []
    manifest = {"seed": seed, "num_worlds": len(indices), "images": []}
    for index, (world, pseudo) in zip(indices, built):
        image_id = f"world_{index:03d}"
        np.savez(
            out / "worlds" / f"{image_id}.npz",
            features=world.features.astype(np.float32),
            labels=world.gt_labels.data,
            seed=world.rng_seed,
        )
        (out / "gt" / f"{image_id}.csil").write_bytes(write_raster(world.gt_labels))
        (out / "pseudo" / f"{image_id}.csil").write_bytes(write_raster(pseudo))
        conf = constant_confidence(world.width, world.height, 1.0)
        (out / "conf" / f"{image_id}.csif").write_bytes(write_confidence(conf))

        dets = []
        for query in new_classes:
            dets.extend(
                simulate_detector(
                    world, query, image_id, target, scene, noise,
                    derive_seed(seed, _GEN_DET_TAG, index, query),
                )
            )
        det_lines.append(detections_to_jsonl(dets, target))

        kept = nms(filter_by_score(dets, thresholds.detector), thresholds.detector.nms_iou)
        scores = []
        for patch in extract_patches(pseudo, kept, image_id):
            scores.append(
                simulate_classifier(
                    patch, world, concept_index, scene, noise,
                    derive_seed(seed, _GEN_CLS_TAG, index, len(scores)),
                )
            )
        cls_lines.append(classifications_to_jsonl(scores))
        manifest["images"].append(image_id)

    (out / "detections.jsonl").write_text("".join(det_lines), encoding="utf-8")
    (out / "classifications.jsonl").write_text("".join(cls_lines), encoding="utf-8")
    (out / "source_taxonomy.toml").write_text(format_taxonomy_document(source), encoding="utf-8")
    (out / "target_taxonomy.toml").write_text(format_taxonomy_document(target), encoding="utf-8")
    predefined = presets.demo_predefined_map()
    (out / "map.json").write_text(map_to_json(predefined, source, target), encoding="utf-8")
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    print(f"wrote {len(indices)} worlds to {out}")
    return 0


# ---------------------------------------------------------------------------
# train


def cmd_train(args) -> int:
    config = RunConfig.load(args.config)
    csi = None if args.csi is None else (args.csi == "on")
    experiment = config.experiment(seed_override=args.seed, csi_override=csi)
    out = _outdir(args)
    report = run_experiment(experiment)
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2), encoding="utf-8")
    if report.auto_map_entries is not None:
        auto = RelabelMap(
            entries=tuple(MapEntry(f, t) for f, t in report.auto_map_entries),
            origin=MapOrigin.AUTO_CONFIGURED,
        )
        (out / "map.json").write_text(
            map_to_json(auto, experiment.source_taxonomy, experiment.target_taxonomy),
            encoding="utf-8",
        )
    names = report.class_names
    print(f"final common-class mIoU: {report.common_miou():.4f}")
    for cid in report.new_class_ids:
        print(f"final IoU {names[cid]}: {report.final_ious[cid]:.4f}")
    return 0


# ---------------------------------------------------------------------------
# relabel


def _iter_pseudo_labels(pseudo_dir: Path):
    for path in sorted(pseudo_dir.glob("*.csil")):
        yield path.stem, read_raster(path.read_bytes())


def cmd_relabel(args) -> int:
    config = RunConfig.load(args.config)
    source, target = config.load_taxonomies()
    relabel_map = config.load_map(source, target)
    thresholds = config.thresholds(target)
    schedule = config.schedule()
    options = config.relabel_options()
    out = _outdir(args)

    dets_by_image = group_by_image(
        detections_from_jsonl(config.path("detections").read_text(encoding="utf-8"), target)
    )
    conf_dir = config.path("confidences", required=False)
    pseudo_dir = config.path("pseudo_labels")

    if args.emit_patches:
        manifest_lines = []
        for image_id, pseudo in _iter_pseudo_labels(pseudo_dir):
            dets = dets_by_image.get(image_id, [])
            kept = nms(filter_by_score(dets, thresholds.detector), thresholds.detector.nms_iou)
            for patch in extract_patches(pseudo, kept, image_id):
                if not precheck_contains_from(patch, relabel_map):
                    continue
                manifest_lines.append(json.dumps({
                    "patch_id": patch.patch_id,
                    "image_id": image_id,
                    "box": list(patch.box.as_tuple()),
                    "query_class": target.class_by_id(patch.detection.query_class).name,
                    "concept": patch.detection.concept,
                    "score": patch.detection.score,
                }))
        Path(args.emit_patches).write_text(
            "".join(line + "\n" for line in manifest_lines), encoding="utf-8"
        )
        print(f"emitted {len(manifest_lines)} patch records to {args.emit_patches}")
        return 0

    scores_by_patch = None
    if options["classifier_filter"]:
        records = classifications_from_jsonl(
            config.path("classifications").read_text(encoding="utf-8")
        )
        scores_by_patch = {r.patch_id: r for r in records}

    totals = RelabelReport()
    for image_id, pseudo in _iter_pseudo_labels(pseudo_dir):
        if conf_dir is not None and (conf_dir / f"{image_id}.csif").exists():
            confidence = read_confidence((conf_dir / f"{image_id}.csif").read_bytes())
        else:
            confidence = constant_confidence(pseudo.width, pseudo.height, 1.0)
        new_label, new_conf, report = apply_csi(
            options["step"], pseudo, confidence,
            dets_by_image.get(image_id, []), scores_by_patch, relabel_map, target,
            thresholds, schedule, options["relabel_confidence"],
        )
        totals = totals.merged(report)
        (out / f"{image_id}.csil").write_bytes(write_raster(new_label))
        (out / f"{image_id}.csif").write_bytes(write_confidence(new_conf))

    (out / "report.json").write_text(json.dumps(totals.to_dict(), indent=2), encoding="utf-8")
    for line in totals.summary_lines():
        print(line)
    return 0


# ---------------------------------------------------------------------------
# automap


def cmd_automap(args) -> int:
    config = RunConfig.load(args.config)
    source, target = config.load_taxonomies()
    predefined = config.load_map(source, target, required=False)
    if predefined is None:
        predefined = RelabelMap(entries=(), origin=MapOrigin.PREDEFINED)
    thresholds = config.thresholds(target)
    schedule = config.schedule()
    auto_config = config.automap_config()
    out = _outdir(args)

    dets_by_image = group_by_image(
        detections_from_jsonl(config.path("detections").read_text(encoding="utf-8"), target)
    )
    records = classifications_from_jsonl(
        config.path("classifications").read_text(encoding="utf-8")
    )
    scores_by_patch = {r.patch_id: r for r in records}

    counts = automap_mod.CandidateCounts.empty(
        (schedule.collect_start_step, schedule.relabel_start_step)
    )
    open_query_ids = {
        cid for cid in (d.query_class for dets in dets_by_image.values() for d in dets)
        if cid not in predefined.to_ids
    }
    for image_id, pseudo in _iter_pseudo_labels(config.path("pseudo_labels")):
        dets = dets_by_image.get(image_id, [])
        kept = nms(filter_by_score(dets, thresholds.detector), thresholds.detector.nms_iou)
        for patch in extract_patches(pseudo, kept, image_id):
            if patch.detection.query_class not in open_query_ids:
                continue
            scores = scores_by_patch.get(patch.patch_id)
            if scores is None:
                continue
            verdict = classify_patch(
                scores, patch.detection.query_class, target, thresholds.classifier
            )
            if not verdict.accepted:
                continue
            vote = automap_mod.collect_candidates(patch, source, auto_config)
            if vote is not None:
                counts.add(*vote)

    final_map = automap_mod.finalize_map(counts, source, target, predefined)
    (out / "counts.json").write_text(
        automap_mod.counts_to_json(counts, source, target), encoding="utf-8"
    )
    (out / "map.json").write_text(map_to_json(final_map, source, target), encoding="utf-8")
    for entry in final_map.entries:
        print(
            f"map: {source.class_by_id(entry.from_id).name} -> "
            f"{target.class_by_id(entry.to_id).name}"
        )
    return 0


# ---------------------------------------------------------------------------
# eval


def _confusion_for_file(pred_path: str, gt_path: str, num_classes: int) -> np.ndarray:
    pred = read_raster(Path(pred_path).read_bytes())
    gt = read_raster(Path(gt_path).read_bytes())
    matrix = ConfusionMatrix.zeros(num_classes)
    accumulate_confusion(pred, gt, matrix)
    return matrix.counts


def cmd_eval(args) -> int:
    config = RunConfig.load(args.config)
    _, target = config.load_taxonomies()
    num_classes = max(target.ids) + 1
    pred_dir = config.path("predictions")
    gt_dir = config.path("ground_truth")
    out = _outdir(args)

    pairs = []
    for gt_path in sorted(gt_dir.glob("*.csil")):
        pred_path = pred_dir / gt_path.name
        if not pred_path.exists():
            raise ConfigError(f"no prediction for {gt_path.name}")
        pairs.append((str(pred_path), str(gt_path)))
    if not pairs:
        raise ConfigError(f"no .csil rasters under {gt_dir}")

    matrix = ConfusionMatrix.zeros(num_classes)
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            for counts in pool.map(
                _confusion_for_file,
                [p for p, _ in pairs], [g for _, g in pairs],
                [num_classes] * len(pairs),
            ):
                matrix.counts += counts
    else:
        for pred_path, gt_path in pairs:
            matrix.counts += _confusion_for_file(pred_path, gt_path, num_classes)

    ious = iou_per_class(matrix)
    subset_names, zero_names = config.metric_spec_names()
    if not subset_names:
        subset_names = [
            c.name for c in target.classes
            if c.name not in set(zero_names) and not np.isnan(ious[c.id])
        ]
    spec = MIoUSpec(
        class_subset=tuple(target.class_by_name(n).id for n in subset_names),
        zero_fill=tuple(target.class_by_name(n).id for n in zero_names),
    )
    miou = mean_iou(ious, spec)

    report = {
        "per_class_iou": {
            target.class_by_id(cid).name: (None if np.isnan(ious[cid]) else float(ious[cid]))
            for cid in sorted(target.ids)
        },
        "miou": miou,
        "subset": subset_names,
        "zero_fill": zero_names,
        "confusion_matrix": matrix.counts.tolist(),
        "images": len(pairs),
    }
    (out / "report.json").write_text(json.dumps(report, indent=2), encoding="utf-8")
    print(format_iou_table(ious, target))
    print(f"mIoU ({len(spec.class_subset)} classes + {len(spec.zero_fill)} zero-filled): {miou:.4f}")
    return 0


# ---------------------------------------------------------------------------
# render


def cmd_render(args) -> int:
    out = _outdir(args)
    for source in args.inputs:
        path = Path(source)
        raster = read_raster(path.read_bytes())
        (out / f"{path.stem}.ppm").write_bytes(render_ppm(raster))
    print(f"rendered {len(args.inputs)} raster(s) to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
