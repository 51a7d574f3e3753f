"""How the open-taxonomy map entry is discovered from patch votes.

The train class has no predefined mapping. Scenes are pseudo-labeled with
train systematically confused as bus; detecting train and tallying the
dominant source class inside each accepted patch recovers bus -> train.
"""

from taxrelabel import extract_patches, filter_by_score, nms
from taxrelabel.automap import AutoMapConfig, CandidateCounts, collect_candidates, finalize_map
from taxrelabel.sim import NoiseConfig, generate_scene, simulate_classifier, simulate_detector
from taxrelabel.sim import presets
from taxrelabel.taxonomy import ConversionTable, convert_label_space
from taxrelabel.zsfilter import build_concept_index, classify_patch


def main():
    source = presets.demo_source_taxonomy()
    target = presets.demo_target_taxonomy()
    scene = presets.demo_scene_config()
    thresholds = presets.demo_thresholds()
    noise = NoiseConfig()
    confusion = ConversionTable(pairs=(
        (presets.ROAD, presets.ROAD), (presets.BUILDING, presets.BUILDING),
        (presets.VEGETATION, presets.VEGETATION), (presets.TERRAIN, presets.VEGETATION),
        (presets.CAR, presets.CAR), (presets.TRUCK, presets.CAR),
        (presets.BUS, presets.BUS), (presets.TRAIN, presets.BUS),
    ))
    concept_index = build_concept_index(
        target, (presets.VEGETATION, presets.TERRAIN, presets.CAR,
                 presets.TRUCK, presets.BUS, presets.TRAIN))

    counts = CandidateCounts.empty((400, 600))
    for index in range(6):
        world = generate_scene(scene, seed=100 + index)
        pseudo = convert_label_space(world.gt_labels, confusion)
        image_id = f"scene{index}"
        dets = simulate_detector(world, presets.TRAIN, image_id, target, scene, noise,
                                 seed=200 + index)
        kept = nms(filter_by_score(dets, thresholds.detector), thresholds.detector.nms_iou)
        for patch in extract_patches(pseudo, kept, image_id):
            scores = simulate_classifier(patch, world, concept_index, scene, noise,
                                         seed=300 + index)
            verdict = classify_patch(scores, presets.TRAIN, target, thresholds.classifier)
            vote = collect_candidates(patch, source, AutoMapConfig())
            status = "accepted" if verdict.accepted else "rejected"
            print(f"{patch.patch_id}: classifier {status}, dominant source class "
                  f"{source.class_by_id(vote[1]).name if vote else 'n/a'}")
            if verdict.accepted and vote is not None:
                counts.add(*vote)

    print("\ncollected votes for train:")
    for from_id, n in sorted(counts.counts.get(presets.TRAIN, {}).items()):
        print(f"  {source.class_by_id(from_id).name}: {n}")

    final = finalize_map(counts, source, target, presets.demo_predefined_map())
    print("\nfinal map (predefined + auto-configured):")
    for entry in final.entries:
        print(f"  {source.class_by_id(entry.from_id).name} -> "
              f"{target.class_by_id(entry.to_id).name}")


if __name__ == "__main__":
    main()
