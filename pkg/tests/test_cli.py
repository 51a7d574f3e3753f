"""End-to-end CLI behavior over temporary run directories."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import pytest

from taxrelabel.cli import main
from taxrelabel.raster import read_raster

BASE_CONFIG = """
[gen]
num_worlds = 2
seed = 5

[paths]
source_taxonomy = "data/source_taxonomy.toml"
target_taxonomy = "data/target_taxonomy.toml"
map = "{map_path}"
pseudo_labels = "data/pseudo"
confidences = "data/conf"
detections = "data/detections.jsonl"
classifications = "data/classifications.jsonl"
predictions = "{predictions}"
ground_truth = "data/gt"

[thresholds]
nms_iou = 0.3
[thresholds.detection]
terrain = 0.01
truck = 0.1
train = 0.1
[thresholds.classification]
terrain = 0.1
truck = 0.5
train = 0.5

[relabel]
step = {step}

[experiment]
total_steps = 220
relabel_start_step = 120
collect_start_step = 60
eval_interval = 100
num_source_worlds = 2
num_target_worlds = 2
num_eval_worlds = 2
seed = 3
"""


def write_config(tmp_path, name="run.toml", map_path="data/map.json",
                 predictions="relabeled", step=12000):
    path = tmp_path / name
    path.write_text(
        BASE_CONFIG.format(map_path=map_path, predictions=predictions, step=step),
        encoding="utf-8",
    )
    return str(path)


def tree_digest(root: Path) -> dict[str, str]:
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*")) if p.is_file()
    }


@pytest.fixture
def dataset(tmp_path):
    config = write_config(tmp_path)
    assert main(["gen", "--config", config, "--out", str(tmp_path / "data")]) == 0
    return tmp_path, config


class TestGen:
    def test_writes_declared_artifacts(self, dataset):
        tmp_path, _ = dataset
        data = tmp_path / "data"
        manifest = json.loads((data / "manifest.json").read_text())
        assert manifest["num_worlds"] == 2
        for image_id in manifest["images"]:
            assert (data / "gt" / f"{image_id}.csil").exists()
            assert (data / "pseudo" / f"{image_id}.csil").exists()
            assert (data / "conf" / f"{image_id}.csif").exists()
            assert (data / "worlds" / f"{image_id}.npz").exists()
        assert (data / "detections.jsonl").exists()
        assert (data / "classifications.jsonl").exists()

    def test_reruns_are_identical(self, tmp_path):
        config = write_config(tmp_path)
        main(["gen", "--config", config, "--out", str(tmp_path / "a")])
        main(["gen", "--config", config, "--out", str(tmp_path / "b")])
        assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")

    def test_workers_do_not_change_the_output(self, tmp_path):
        config = write_config(tmp_path)
        main(["gen", "--config", config, "--out", str(tmp_path / "a")])
        main(["gen", "--config", config, "--out", str(tmp_path / "c"), "--workers", "2"])
        assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "c")


class TestRelabel:
    def test_before_start_step_output_equals_input(self, dataset):
        tmp_path, _ = dataset
        config = write_config(tmp_path, name="early.toml", step=11999)
        out = tmp_path / "early"
        assert main(["relabel", "--config", config, "--out", str(out)]) == 0
        for pseudo in (tmp_path / "data" / "pseudo").glob("*.csil"):
            assert (out / pseudo.name).read_bytes() == pseudo.read_bytes()

    def test_relabel_is_idempotent_end_to_end(self, dataset):
        tmp_path, config = dataset
        first = tmp_path / "relabeled"
        assert main(["relabel", "--config", config, "--out", str(first)]) == 0
        # feed the outputs back in as the new pseudo-labels
        second_config = write_config(tmp_path, name="second.toml")
        text = Path(second_config).read_text()
        text = text.replace('pseudo_labels = "data/pseudo"', 'pseudo_labels = "relabeled"')
        Path(second_config).write_text(text)
        second = tmp_path / "relabeled2"
        assert main(["relabel", "--config", second_config, "--out", str(second)]) == 0
        for path in sorted(first.glob("*.csil")):
            assert (second / path.name).read_bytes() == path.read_bytes()

    def test_rerun_identical(self, dataset):
        tmp_path, config = dataset
        main(["relabel", "--config", config, "--out", str(tmp_path / "r1")])
        main(["relabel", "--config", config, "--out", str(tmp_path / "r2")])
        assert tree_digest(tmp_path / "r1") == tree_digest(tmp_path / "r2")

    def test_emit_patches_writes_a_manifest_and_nothing_else(self, dataset):
        tmp_path, config = dataset
        out = tmp_path / "manifest_run"
        manifest = tmp_path / "patches.jsonl"
        assert main(["relabel", "--config", config, "--out", str(out),
                     "--emit-patches", str(manifest)]) == 0
        lines = [json.loads(l) for l in manifest.read_text().splitlines()]
        assert lines, "expected at least one patch record"
        for record in lines:
            assert set(record) == {"patch_id", "image_id", "box", "query_class",
                                   "concept", "score"}
        assert not list(out.glob("*.csil"))


class TestAutomapCommand:
    def test_discovers_the_open_class_entry(self, dataset):
        tmp_path, config = dataset
        out = tmp_path / "auto"
        assert main(["automap", "--config", config, "--out", str(out)]) == 0
        counts = json.loads((out / "counts.json").read_text())
        assert counts["counts"]["train"] == {"bus": 2}
        final_map = json.loads((out / "map.json").read_text())
        assert {"from": "bus", "to": "train"} in final_map["entries"]
        assert final_map["origin"] == "auto_configured"


class TestEval:
    def test_identity_evaluation_is_perfect(self, dataset):
        tmp_path, _ = dataset
        config = write_config(tmp_path, name="eval.toml", predictions="data/gt")
        out = tmp_path / "evalout"
        assert main(["eval", "--config", config, "--out", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["miou"] == pytest.approx(1.0)
        assert all(v in (None, 1.0) for v in report["per_class_iou"].values())

    def test_full_chain_restores_ground_truth(self, dataset):
        tmp_path, config = dataset
        # discover the full map, relabel with it, then compare against gt
        main(["automap", "--config", config, "--out", str(tmp_path / "auto")])
        chain_config = write_config(tmp_path, name="chain.toml",
                                    map_path="auto/map.json", predictions="chain")
        main(["relabel", "--config", chain_config, "--out", str(tmp_path / "chain")])
        out = tmp_path / "chain_eval"
        assert main(["eval", "--config", chain_config, "--out", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["miou"] == pytest.approx(1.0)


class TestTrain:
    def test_writes_report_and_auto_map(self, tmp_path):
        config = write_config(tmp_path)
        out = tmp_path / "trainout"
        assert main(["train", "--config", config, "--out", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["total_steps"] == 220
        auto_map = json.loads((out / "map.json").read_text())
        assert {"from": "bus", "to": "train"} in auto_map["entries"]

    def test_csi_off_flag(self, tmp_path):
        config = write_config(tmp_path)
        out = tmp_path / "trainoff"
        assert main(["train", "--config", config, "--out", str(out), "--csi", "off"]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["csi"] is False
        assert report["auto_map_entries"] is None


class TestRender:
    def test_produces_valid_ppm(self, dataset):
        tmp_path, _ = dataset
        raster_path = next((tmp_path / "data" / "gt").glob("*.csil"))
        out = tmp_path / "renders"
        assert main(["render", str(raster_path), "--out", str(out)]) == 0
        ppm = (out / f"{raster_path.stem}.ppm").read_bytes()
        raster = read_raster(raster_path.read_bytes())
        header = f"P6\n{raster.width} {raster.height}\n255\n".encode()
        assert ppm.startswith(header)
        assert len(ppm) == len(header) + 3 * raster.width * raster.height


class TestErrors:
    def test_missing_config_file_fails_cleanly(self, tmp_path, capsys):
        code = main(["gen", "--config", str(tmp_path / "nope.toml"),
                     "--out", str(tmp_path / "x")])
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_missing_path_entry_reported(self, tmp_path, capsys):
        bad = tmp_path / "bad.toml"
        bad.write_text("[paths]\n", encoding="utf-8")
        code = main(["relabel", "--config", str(bad), "--out", str(tmp_path / "x")])
        assert code == 1
        assert "missing" in capsys.readouterr().err


CUSTOM_EXPERIMENT_CONFIG = """
[paths]
source_taxonomy = "data/source_taxonomy.toml"
target_taxonomy = "data/target_taxonomy.toml"
map = "data/map.json"

[schedule]
relabel_start_step = 120
collect_start_step = 60
total_steps = 220

[thresholds]
nms_iou = 0.3
[thresholds.detection]
terrain = 0.01
truck = 0.1
train = 0.1
[thresholds.classification]
terrain = 0.1
truck = 0.5
train = 0.5

[noise]
false_positive_rate = 0.0

[experiment]
preset = "custom"
seed = 3
csi_enabled = true
domain_shift = [0.0, 0.3, 0.3, 0.3]
source_object_classes = ["building", "vegetation", "car", "bus"]
open_classes = ["train"]
classification_classes = ["vegetation", "terrain", "car", "truck", "bus", "train"]
num_source_worlds = 2
num_target_worlds = 2
num_eval_worlds = 2
eval_interval = 100

[experiment.source_label_table]
road = "road"
building = "building"
vegetation = "vegetation"
car = "car"
bus = "bus"

[experiment.scene]
background = "road"
object_classes = ["building", "vegetation", "terrain", "car", "truck", "bus", "train"]
confusable_pairs = [["vegetation", "terrain"], ["car", "truck"], ["bus", "train"]]
width = 64
height = 64

[experiment.scene.prototypes]
road = [0.0, 0.0, 0.0, 0.0]
building = [4.0, 0.0, 0.0, 0.0]
vegetation = [0.0, 4.0, 0.0, 0.0]
terrain = [0.8, 4.0, 0.0, 0.0]
car = [0.0, 0.0, 4.0, 0.0]
truck = [0.8, 0.0, 4.0, 0.0]
bus = [0.0, 0.0, 0.0, 4.0]
train = [0.8, 0.0, 0.0, 4.0]
"""


class TestCustomExperimentConfig:
    def test_fully_explicit_config_matches_the_preset(self, dataset, tmp_path):
        # the custom path spelled out in TOML reproduces the demo preset run
        tmp, _ = dataset
        custom = tmp / "custom.toml"
        custom.write_text(CUSTOM_EXPERIMENT_CONFIG, encoding="utf-8")
        out_custom = tmp / "custom_out"
        assert main(["train", "--config", str(custom), "--out", str(out_custom)]) == 0

        preset = write_config(tmp, name="preset.toml")
        out_preset = tmp / "preset_out"
        assert main(["train", "--config", str(preset), "--out", str(out_preset)]) == 0

        custom_report = json.loads((out_custom / "report.json").read_text())
        preset_report = json.loads((out_preset / "report.json").read_text())
        assert custom_report == preset_report

    def test_missing_scene_prototypes_reported(self, dataset, tmp_path, capsys):
        tmp, _ = dataset
        broken = CUSTOM_EXPERIMENT_CONFIG.replace("[experiment.scene.prototypes]",
                                                  "[experiment.scene.unused]")
        bad = tmp / "bad.toml"
        bad.write_text(broken, encoding="utf-8")
        assert main(["train", "--config", str(bad), "--out", str(tmp / "x")]) == 1
        assert "prototypes" in capsys.readouterr().err
