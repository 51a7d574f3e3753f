"""Scene generation and the simulated detector/classifier oracles."""

from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from taxrelabel import class_histogram, connected_components, softmax
from taxrelabel.sim import (
    NoiseConfig,
    SceneConfig,
    ScenePlacementError,
    derive_seed,
    generate_scene,
    simulate_classifier,
    simulate_detector,
)
from taxrelabel.sim import presets
from taxrelabel.detect import extract_patches
from taxrelabel.zsfilter import build_concept_index

SCENE = presets.demo_scene_config()


class TestSceneConfig:
    def test_confusable_pair_distance_enforced(self):
        with pytest.raises(ValueError, match="confusable"):
            dataclasses.replace(SCENE, confusable_eps=0.5)

    def test_missing_prototype_rejected(self):
        with pytest.raises(ValueError, match="prototype"):
            SceneConfig(
                prototypes={0: (0.0, 0.0)},
                background_class=0,
                object_classes=(1,),
            )


class TestGenerateScene:
    def test_zero_objects_gives_all_background(self):
        config = dataclasses.replace(SCENE, objects_per_scene=(0, 0))
        world = generate_scene(config, seed=3)
        assert (world.gt_labels.data == SCENE.background_class).all()

    def test_same_seed_is_bitwise_identical(self):
        a = generate_scene(SCENE, seed=11)
        b = generate_scene(SCENE, seed=11)
        assert a.gt_labels == b.gt_labels
        assert (a.features == b.features).all()

    def test_different_seeds_differ(self):
        a = generate_scene(SCENE, seed=11)
        b = generate_scene(SCENE, seed=12)
        assert a.gt_labels != b.gt_labels

    def test_single_fixed_size_object_pixel_count(self):
        config = dataclasses.replace(
            SCENE, object_classes=(presets.TRUCK,), objects_per_scene=(1, 1),
            size_range=(3, 3),
        )
        world = generate_scene(config, seed=5)
        assert class_histogram(world.gt_labels)[presets.TRUCK] == 9

    def test_impossible_placement_raises(self):
        config = dataclasses.replace(
            SCENE, width=8, height=8, objects_per_scene=(9, 9), size_range=(6, 6),
        )
        with pytest.raises(ScenePlacementError):
            generate_scene(config, seed=0)

    def test_every_object_class_appears(self):
        world = generate_scene(SCENE, seed=21)
        present = set(class_histogram(world.gt_labels))
        assert set(SCENE.object_classes) <= present

    def test_objects_never_touch(self):
        # a 1px gap means per-class components equal placed objects
        world = generate_scene(SCENE, seed=22)
        data = world.gt_labels.data
        not_background = data != SCENE.background_class
        for y, x in zip(*np.nonzero(not_background)):
            for ny, nx in ((y + 1, x), (y, x + 1)):
                if 0 <= ny < data.shape[0] and 0 <= nx < data.shape[1]:
                    if not_background[ny, nx]:
                        assert data[ny, nx] == data[y, x]


class TestSimulateDetector:
    def test_zero_noise_reproduces_component_boxes(self, target_taxonomy):
        world = generate_scene(SCENE, seed=31)
        for query in (presets.TRUCK, presets.TRAIN, presets.TERRAIN):
            dets = simulate_detector(
                world, query, "img", target_taxonomy, SCENE, NoiseConfig(), seed=1
            )
            expected = connected_components(world.gt_labels, query)
            assert [d.box for d in dets] == expected
            assert all(d.score == 1.0 for d in dets)
            assert all(d.query_class == query for d in dets)

    def test_rate_one_fires_on_every_confusable_component(self, target_taxonomy):
        world = generate_scene(SCENE, seed=32)
        noise = NoiseConfig(false_positive_rate=1.0)
        dets = simulate_detector(
            world, presets.TRUCK, "img", target_taxonomy, SCENE, noise, seed=1
        )
        true_boxes = connected_components(world.gt_labels, presets.TRUCK)
        car_boxes = connected_components(world.gt_labels, presets.CAR)
        assert [d.box for d in dets] == true_boxes + car_boxes

    def test_jitter_stays_within_chebyshev_distance(self, target_taxonomy):
        world = generate_scene(SCENE, seed=33)
        noise = NoiseConfig(box_jitter_px=1)
        dets = simulate_detector(
            world, presets.TRUCK, "img", target_taxonomy, SCENE, noise, seed=2
        )
        tight = connected_components(world.gt_labels, presets.TRUCK)
        assert len(dets) == len(tight)
        for det, box in zip(dets, tight):
            deltas = np.abs(np.array(det.box.as_tuple()) - np.array(box.as_tuple()))
            assert deltas.max() <= 1

    def test_same_seed_same_output(self, target_taxonomy):
        world = generate_scene(SCENE, seed=34)
        noise = NoiseConfig(false_positive_rate=0.4, box_jitter_px=2,
                            score_range=(0.3, 1.0))
        a = simulate_detector(world, presets.TRAIN, "img", target_taxonomy, SCENE, noise, 7)
        b = simulate_detector(world, presets.TRAIN, "img", target_taxonomy, SCENE, noise, 7)
        assert a == b

    def test_detections_carry_the_first_concept(self, target_taxonomy):
        world = generate_scene(SCENE, seed=35)
        dets = simulate_detector(
            world, presets.TRAIN, "img", target_taxonomy, SCENE, NoiseConfig(), 1
        )
        assert all(d.concept == "train" for d in dets)


class TestSimulateClassifier:
    def _patch_over_first(self, world, query, target_taxonomy):
        dets = simulate_detector(
            world, query, "img", target_taxonomy, SCENE, NoiseConfig(), seed=1
        )
        teacher_view = world.gt_labels  # content does not matter here
        return extract_patches(teacher_view, dets[:1], "img")[0]

    def test_correct_mode_boosts_the_dominant_class(self, target_taxonomy):
        world = generate_scene(SCENE, seed=41)
        index = build_concept_index(
            target_taxonomy, (presets.CAR, presets.TRUCK, presets.BUS, presets.TRAIN)
        )
        patch = self._patch_over_first(world, presets.TRUCK, target_taxonomy)
        scores = simulate_classifier(patch, world, index, SCENE, NoiseConfig(), seed=5)
        assert max(scores.logits, key=scores.logits.get) == "truck"
        probs = softmax(list(scores.logits.values()))
        assert probs.max() >= 0.5

    def test_incorrect_mode_boosts_the_confusable_partner(self, target_taxonomy):
        world = generate_scene(SCENE, seed=42)
        index = build_concept_index(
            target_taxonomy, (presets.CAR, presets.TRUCK, presets.BUS, presets.TRAIN)
        )
        noise = NoiseConfig(classifier_correct_prob=0.0)
        patch = self._patch_over_first(world, presets.TRUCK, target_taxonomy)
        scores = simulate_classifier(patch, world, index, SCENE, noise, seed=5)
        assert max(scores.logits, key=scores.logits.get) == "car"

    def test_same_seed_identical_logits(self, target_taxonomy):
        world = generate_scene(SCENE, seed=43)
        index = build_concept_index(target_taxonomy, (presets.TRUCK, presets.TRAIN))
        patch = self._patch_over_first(world, presets.TRAIN, target_taxonomy)
        a = simulate_classifier(patch, world, index, SCENE, NoiseConfig(), seed=9)
        b = simulate_classifier(patch, world, index, SCENE, NoiseConfig(), seed=9)
        assert a == b

    def test_concept_set_matches_the_index(self, target_taxonomy):
        world = generate_scene(SCENE, seed=44)
        classes = (presets.VEGETATION, presets.TERRAIN, presets.CAR,
                   presets.TRUCK, presets.BUS, presets.TRAIN)
        index = build_concept_index(target_taxonomy, classes)
        patch = self._patch_over_first(world, presets.TERRAIN, target_taxonomy)
        scores = simulate_classifier(patch, world, index, SCENE, NoiseConfig(), seed=3)
        assert list(scores.logits) == [concept for _, concept in index]


class TestDeriveSeed:
    def test_distinct_inputs_distinct_streams(self):
        seeds = {derive_seed(1, tag, i) for tag in range(4) for i in range(10)}
        assert len(seeds) == 40

    def test_stable_across_calls(self):
        assert derive_seed(42, 1, 2, 3) == derive_seed(42, 1, 2, 3)
