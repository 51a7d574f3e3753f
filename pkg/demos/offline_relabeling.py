"""Walk one synthetic scene through the offline relabeling pipeline.

Builds a scene whose new classes (terrain, truck, train) are pseudo-labeled
as their confusable source classes, detects the new classes with the
simulated zero-shot detector, filters the patches, relabels, and writes
before/after PPM renders next to this script.
"""

from pathlib import Path

from taxrelabel import (
    apply_csi,
    constant_confidence,
    convert_label_space,
    class_histogram,
    MapEntry,
    RelabelMap,
    RelabelSchedule,
)
from taxrelabel.render import render_ppm
from taxrelabel.sim import NoiseConfig, generate_scene, simulate_classifier, simulate_detector
from taxrelabel.sim import presets
from taxrelabel.taxonomy import ConversionTable
from taxrelabel.zsfilter import build_concept_index


def main():
    out_dir = Path(__file__).parent / "out"
    out_dir.mkdir(exist_ok=True)

    target = presets.demo_target_taxonomy()
    scene = presets.demo_scene_config()
    world = generate_scene(scene, seed=42)
    print(f"scene: {world.width}x{world.height}, classes present:")
    for cid, count in sorted(class_histogram(world.gt_labels).items()):
        print(f"  {target.class_by_id(cid).name:<11} {count:>5} px")

    # the studied failure mode: every new class is pseudo-labeled as its
    # nearest source-class lookalike
    confusion = ConversionTable(pairs=(
        (presets.ROAD, presets.ROAD), (presets.BUILDING, presets.BUILDING),
        (presets.VEGETATION, presets.VEGETATION), (presets.TERRAIN, presets.VEGETATION),
        (presets.CAR, presets.CAR), (presets.TRUCK, presets.CAR),
        (presets.BUS, presets.BUS), (presets.TRAIN, presets.BUS),
    ))
    pseudo = convert_label_space(world.gt_labels, confusion)
    mistakes = int((pseudo.data != world.gt_labels.data).sum())
    print(f"\npseudo-label plants {mistakes} wrong pixels "
          f"(terrain->vegetation, truck->car, train->bus)")

    relabel_map = RelabelMap(entries=presets.demo_predefined_map().entries
                             + (MapEntry(presets.BUS, presets.TRAIN),))
    thresholds = presets.demo_thresholds()
    noise = NoiseConfig()
    concept_index = build_concept_index(
        target, (presets.VEGETATION, presets.TERRAIN, presets.CAR,
                 presets.TRUCK, presets.BUS, presets.TRAIN))

    dets = []
    for query in (presets.TERRAIN, presets.TRUCK, presets.TRAIN):
        dets += simulate_detector(world, query, "demo", target, scene, noise, seed=1)
    print(f"\ndetector proposed {len(dets)} boxes for the three new classes")

    def scores(patch):
        return simulate_classifier(patch, world, concept_index, scene, noise, seed=2)

    schedule = RelabelSchedule(relabel_start_step=0, collect_start_step=0, total_steps=1)
    fixed, confidence, report = apply_csi(
        0, pseudo, constant_confidence(world.width, world.height), dets, scores,
        relabel_map, target, thresholds, schedule,
    )
    print("\nrelabeling report:")
    for line in report.summary_lines():
        print(f"  {line}")
    remaining = int((fixed.data != world.gt_labels.data).sum())
    print(f"\nwrong pixels after relabeling: {remaining} (was {mistakes})")

    (out_dir / "ground_truth.ppm").write_bytes(render_ppm(world.gt_labels))
    (out_dir / "pseudo_before.ppm").write_bytes(render_ppm(pseudo))
    (out_dir / "pseudo_after.ppm").write_bytes(render_ppm(fixed))
    print(f"\nrenders written to {out_dir}/ (ground_truth / pseudo_before / pseudo_after)")


if __name__ == "__main__":
    main()
