"""Patch relabeling and the full per-image pipeline step."""

from __future__ import annotations

import numpy as np
import pytest

from taxrelabel import (
    BBox,
    ConceptScores,
    ConfidenceRaster,
    Detection,
    LabelRaster,
    MapEntry,
    Patch,
    RelabelMap,
    RelabelReport,
    RelabelSchedule,
    ScoreLookupError,
    apply_csi,
    class_histogram,
    constant_confidence,
    relabel_patch,
)
from taxrelabel.sim import presets

from conftest import make_raster

MAP = presets.demo_predefined_map()  # vegetation->terrain, car->truck
FULL_MAP = RelabelMap(entries=MAP.entries + (MapEntry(presets.BUS, presets.TRAIN),))
THRESHOLDS = presets.demo_thresholds()
SCHEDULE = RelabelSchedule()  # 12000 / 8000 / 40000


def patch_for(rows, box, query, score=0.9, image_id="img", ordinal=0):
    label = make_raster(rows)
    det = Detection(image_id=image_id, query_class=query, concept="x", box=box, score=score)
    return Patch(patch_id=f"{image_id}#{ordinal}", detection=det,
                 cropped_label=label, image_crop_ref=(image_id, box))


def accepting_scores(target_taxonomy):
    """Score source that always confirms the detection's query class."""

    def scores(patch):
        name = target_taxonomy.class_by_id(patch.detection.query_class).concepts[0]
        return ConceptScores(patch.patch_id, {name: 8.0, "road": 0.0})

    return scores


class TestSchedule:
    def test_ordering_enforced(self):
        with pytest.raises(ValueError):
            RelabelSchedule(relabel_start_step=100, collect_start_step=200, total_steps=300)
        with pytest.raises(ValueError):
            RelabelSchedule(relabel_start_step=400, collect_start_step=200, total_steps=300)

    def test_phase_queries(self):
        sched = RelabelSchedule(relabel_start_step=10, collect_start_step=5, total_steps=20)
        assert not sched.in_collection_window(4)
        assert sched.in_collection_window(5)
        assert not sched.in_collection_window(10)
        assert sched.in_relabel_phase(10)
        assert not sched.in_relabel_phase(9)


class TestReport:
    def test_counter_arithmetic_enforced(self):
        with pytest.raises(ValueError):
            RelabelReport(patches_extracted=3, patches_prechecked_out=1,
                          patches_filtered_out=1, patches_applied=2)
        RelabelReport(patches_extracted=3, patches_prechecked_out=1,
                      patches_filtered_out=1, patches_applied=1)

    def test_merge_adds_counters(self):
        a = RelabelReport(patches_extracted=2, patches_applied=2,
                          pixels_relabeled_per_class={5: 10})
        b = RelabelReport(patches_extracted=1, patches_prechecked_out=1,
                          pixels_relabeled_per_class={5: 3, 7: 1})
        merged = a.merged(b)
        assert merged.patches_extracted == 3
        assert merged.pixels_relabeled_per_class == {5: 13, 7: 1}


class TestRelabelPatch:
    def test_from_pixels_become_query_class(self):
        patch = patch_for(
            [[presets.CAR, presets.CAR], [presets.ROAD, presets.CAR]],
            BBox(0, 0, 2, 2), presets.TRUCK,
        )
        out = relabel_patch(patch, MAP)
        assert out.cropped_label.data.tolist() == [
            [presets.TRUCK, presets.TRUCK], [presets.ROAD, presets.TRUCK]
        ]

    def test_patch_without_from_pixels_unchanged(self):
        patch = patch_for([[presets.ROAD, presets.BUS]], BBox(0, 0, 2, 1), presets.TRUCK)
        assert relabel_patch(patch, MAP).cropped_label == patch.cropped_label

    def test_other_entries_do_not_apply(self):
        patch = patch_for(
            [[presets.VEGETATION, presets.BUILDING]], BBox(0, 0, 2, 1), presets.TERRAIN
        )
        out = relabel_patch(patch, MAP)
        assert out.cropped_label.data.tolist() == [[presets.TERRAIN, presets.BUILDING]]

    def test_query_without_entry_rejected(self):
        patch = patch_for([[presets.BUS]], BBox(0, 0, 1, 1), presets.TRAIN)
        with pytest.raises(ValueError, match="not a to-id"):
            relabel_patch(patch, MAP)

    def test_multiple_entries_to_same_target_all_apply(self):
        shared = RelabelMap(entries=(
            MapEntry(presets.CAR, presets.TRUCK),
            MapEntry(presets.BUS, presets.TRUCK),
        ))
        patch = patch_for([[presets.CAR, presets.BUS]], BBox(0, 0, 2, 1), presets.TRUCK)
        out = relabel_patch(patch, shared)
        assert out.cropped_label.data.tolist() == [[presets.TRUCK, presets.TRUCK]]

    def test_idempotent_on_random_pairs(self):
        rng = np.random.default_rng(0)
        for i in range(200):
            rows = rng.integers(0, 8, size=(5, 6), dtype=np.uint8)
            query = int(rng.choice([presets.TERRAIN, presets.TRUCK, presets.TRAIN]))
            patch = patch_for(rows, BBox(0, 0, 6, 5), query, ordinal=i)
            once = relabel_patch(patch, FULL_MAP)
            assert relabel_patch(once, FULL_MAP).cropped_label == once.cropped_label


class TestApplyCsi:
    def _world(self):
        # 6x6 pseudo-label: a 2x2 car block at (1,1), bus block at (3,3)
        data = np.full((6, 6), presets.ROAD, dtype=np.uint8)
        data[1:3, 1:3] = presets.CAR
        data[3:5, 3:5] = presets.BUS
        return LabelRaster(data)

    def _conf(self, value=0.5):
        return ConfidenceRaster(np.full((6, 6), np.float32(value), dtype=np.float32))

    def test_before_start_step_is_identity(self, target_taxonomy):
        pseudo = self._world()
        conf = self._conf()
        dets = [Detection("img", presets.TRUCK, "truck", BBox(1, 1, 3, 3), 0.9)]
        out_label, out_conf, report = apply_csi(
            11999, pseudo, conf, dets, accepting_scores(target_taxonomy),
            MAP, target_taxonomy, THRESHOLDS, SCHEDULE,
        )
        assert out_label == pseudo
        assert out_conf == conf
        assert report.patches_extracted == 0
        assert report.patches_applied == 0
        assert report.pixels_relabeled_per_class == {}

    def test_accepted_patch_relabels_and_sets_confidence(self, target_taxonomy):
        pseudo = self._world()
        conf = self._conf(0.5)
        dets = [Detection("img", presets.TRUCK, "truck", BBox(1, 1, 3, 3), 0.9)]
        out_label, out_conf, report = apply_csi(
            12000, pseudo, conf, dets, accepting_scores(target_taxonomy),
            MAP, target_taxonomy, THRESHOLDS, SCHEDULE,
        )
        expected = pseudo.data.copy()
        expected[1:3, 1:3] = presets.TRUCK
        assert out_label.data.tolist() == expected.tolist()
        assert (out_conf.data[1:3, 1:3] == 1.0).all()
        assert (out_conf.data[0] == 0.5).all()
        assert report.patches_applied == 1
        assert report.pixels_relabeled_per_class == {presets.TRUCK: 4}

    def test_overlapping_patches_last_paste_wins(self, target_taxonomy):
        # truck patch (score 0.9) pastes first, train patch (0.8) second;
        # the train patch's crop was taken before any paste, so overlap
        # pixels revert to the original pseudo-label content
        data = np.full((6, 6), presets.ROAD, dtype=np.uint8)
        data[1:3, 1:4] = presets.CAR   # car region under both boxes
        data[3:5, 3:5] = presets.BUS
        pseudo = LabelRaster(data)
        dets = [
            Detection("img", presets.TRUCK, "truck", BBox(0, 0, 4, 4), 0.9),
            Detection("img", presets.TRAIN, "train", BBox(2, 0, 6, 6), 0.8),
        ]
        out_label, _, report = apply_csi(
            12000, pseudo, self._conf(), dets, accepting_scores(target_taxonomy),
            FULL_MAP, target_taxonomy, THRESHOLDS, SCHEDULE,
        )
        # outside the train box: car -> truck stands
        assert (out_label.data[1:3, 1:2] == presets.TRUCK).all()
        # inside the overlap: the later (train) paste restored the car pixels
        assert (out_label.data[1:3, 2:4] == presets.CAR).all()
        # the train patch itself relabeled its bus pixels
        assert (out_label.data[3:5, 3:5] == presets.TRAIN).all()
        assert report.patches_applied == 2

    def test_empty_detections_is_identity(self, target_taxonomy):
        pseudo = self._world()
        conf = self._conf()
        out_label, out_conf, report = apply_csi(
            20000, pseudo, conf, [], accepting_scores(target_taxonomy),
            MAP, target_taxonomy, THRESHOLDS, SCHEDULE,
        )
        assert out_label == pseudo and out_conf == conf
        assert report.patches_applied == 0

    def test_empty_map_is_identity(self, target_taxonomy):
        pseudo = self._world()
        dets = [Detection("img", presets.TRUCK, "truck", BBox(1, 1, 3, 3), 0.9)]
        empty = RelabelMap(entries=())
        out_label, _, report = apply_csi(
            20000, pseudo, self._conf(), dets, accepting_scores(target_taxonomy),
            empty, target_taxonomy, THRESHOLDS, SCHEDULE,
        )
        assert out_label == pseudo
        assert report.patches_prechecked_out == report.patches_extracted

    def test_missing_score_record_is_an_error(self, target_taxonomy):
        pseudo = self._world()
        dets = [Detection("img", presets.TRUCK, "truck", BBox(1, 1, 3, 3), 0.9)]
        with pytest.raises(ScoreLookupError):
            apply_csi(12000, pseudo, self._conf(), dets, {}, MAP,
                      target_taxonomy, THRESHOLDS, SCHEDULE)

    def test_none_scores_source_disables_the_filter(self, target_taxonomy):
        pseudo = self._world()
        dets = [Detection("img", presets.TRUCK, "truck", BBox(1, 1, 3, 3), 0.9)]
        out_label, _, report = apply_csi(
            12000, pseudo, self._conf(), dets, None, MAP,
            target_taxonomy, THRESHOLDS, SCHEDULE,
        )
        assert (out_label.data[1:3, 1:3] == presets.TRUCK).all()
        assert report.patches_filtered_out == 0

    def test_pixels_outside_boxes_untouched_and_histogram_law(self, target_taxonomy):
        rng = np.random.default_rng(1)
        for trial in range(40):
            pseudo = LabelRaster(rng.integers(0, 8, size=(12, 12), dtype=np.uint8))
            conf = constant_confidence(12, 12, 0.5)
            dets = []
            for k in range(int(rng.integers(0, 4))):
                x0 = int(rng.integers(0, 9)); y0 = int(rng.integers(0, 9))
                box = BBox(x0, y0, x0 + int(rng.integers(1, 4)), y0 + int(rng.integers(1, 4)))
                query = int(rng.choice([presets.TERRAIN, presets.TRUCK, presets.TRAIN]))
                name = target_taxonomy.class_by_id(query).name
                dets.append(Detection("img", query, name, box, float(rng.uniform(0.2, 1))))
            out_label, out_conf, report = apply_csi(
                12000, pseudo, conf, dets, accepting_scores(target_taxonomy),
                FULL_MAP, target_taxonomy, THRESHOLDS, SCHEDULE,
            )
            covered = np.zeros((12, 12), dtype=bool)
            for det in dets:
                clipped = det.box.clip(12, 12)
                if clipped:
                    covered[clipped.y_min:clipped.y_max, clipped.x_min:clipped.x_max] = True
            assert (out_label.data[~covered] == pseudo.data[~covered]).all()
            assert (out_conf.data[~covered] == conf.data[~covered]).all()

            before = class_histogram(pseudo)
            after = class_histogram(out_label)
            for entry in FULL_MAP.entries:
                gained = after.get(entry.to_id, 0) - before.get(entry.to_id, 0)
                assert report.pixels_relabeled_per_class.get(entry.to_id, 0) == gained

    def test_idempotent_on_random_pipelines(self, target_taxonomy):
        rng = np.random.default_rng(2)
        for trial in range(40):
            pseudo = LabelRaster(rng.integers(0, 8, size=(10, 10), dtype=np.uint8))
            conf = constant_confidence(10, 10, 0.7)
            dets = []
            for k in range(int(rng.integers(1, 4))):
                x0 = int(rng.integers(0, 7)); y0 = int(rng.integers(0, 7))
                box = BBox(x0, y0, x0 + int(rng.integers(1, 4)), y0 + int(rng.integers(1, 4)))
                query = int(rng.choice([presets.TERRAIN, presets.TRUCK, presets.TRAIN]))
                dets.append(Detection("img", query, "c", box, float(rng.uniform(0.2, 1))))
            args = (dets, accepting_scores(target_taxonomy), FULL_MAP,
                    target_taxonomy, THRESHOLDS, SCHEDULE)
            label1, conf1, _ = apply_csi(12000, pseudo, conf, *args)
            label2, conf2, _ = apply_csi(12000, label1, conf1, *args)
            assert label2 == label1
            assert conf2 == conf1
