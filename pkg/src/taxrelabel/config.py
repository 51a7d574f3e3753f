"""TOML run configuration for the command-line pipeline.

Paths inside a config resolve relative to the config file's directory, so a
run directory can be moved wholesale. Class-keyed tables (thresholds,
metric subsets) use class names, resolved against the target taxonomy.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .automap import AutoMapConfig
from .detect import DetectorThresholds
from .relabel import DEFAULT_RELABEL_CONFIDENCE, PipelineThresholds, RelabelSchedule
from .sim import presets
from .sim.experiment import ExperimentConfig
from .sim.oracles import NoiseConfig
from .taxonomy import RelabelMap, Taxonomy, load_taxonomy, map_from_json
from .zsfilter import ClassifierThresholds


class ConfigError(ValueError):
    """Raised for unreadable, unparsable, or inconsistent run configs."""


@dataclass
class RunConfig:
    """Parsed configuration plus the directory it resolves against."""

    base_dir: Path
    raw: dict

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            raw = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls(base_dir=path.parent, raw=raw)

    # -- section access -----------------------------------------------------

    def section(self, name: str) -> dict:
        value = self.raw.get(name, {})
        if not isinstance(value, dict):
            raise ConfigError(f"[{name}] must be a table")
        return value

    def path(self, key: str, required: bool = True) -> Path | None:
        paths = self.section("paths")
        if key not in paths:
            if required:
                raise ConfigError(f"[paths] is missing {key!r}")
            return None
        resolved = self.base_dir / str(paths[key])
        if required and not resolved.exists():
            raise ConfigError(f"[paths] {key} = {resolved} does not exist")
        return resolved

    # -- typed builders ------------------------------------------------------

    def load_taxonomies(self) -> tuple[Taxonomy, Taxonomy]:
        source = load_taxonomy(self.path("source_taxonomy").read_text(encoding="utf-8"))
        target = load_taxonomy(self.path("target_taxonomy").read_text(encoding="utf-8"))
        return source, target

    def load_map(self, source: Taxonomy, target: Taxonomy, required: bool = True) -> RelabelMap | None:
        map_path = self.path("map", required=required)
        if map_path is None:
            return None
        return map_from_json(map_path.read_text(encoding="utf-8"), source, target)

    def schedule(self) -> RelabelSchedule:
        sched = self.section("schedule")
        defaults = RelabelSchedule()
        try:
            return RelabelSchedule(
                relabel_start_step=int(sched.get("relabel_start_step", defaults.relabel_start_step)),
                collect_start_step=int(sched.get("collect_start_step", defaults.collect_start_step)),
                total_steps=int(sched.get("total_steps", defaults.total_steps)),
            )
        except ValueError as exc:
            raise ConfigError(f"[schedule]: {exc}") from exc

    def thresholds(self, target: Taxonomy) -> PipelineThresholds:
        table = self.section("thresholds")

        def by_name(sub: dict) -> dict[int, float]:
            return {target.class_by_name(name).id: float(v) for name, v in sub.items()}

        try:
            detector = DetectorThresholds(
                per_class=by_name(table.get("detection", {})),
                nms_iou=float(table.get("nms_iou", DetectorThresholds().nms_iou)),
                default=float(table.get("default_detection", DetectorThresholds().default)),
            )
            classifier = ClassifierThresholds(
                per_class=by_name(table.get("classification", {})),
                default=float(table.get("default_classification", ClassifierThresholds().default)),
            )
        except ValueError as exc:
            raise ConfigError(f"[thresholds]: {exc}") from exc
        return PipelineThresholds(detector=detector, classifier=classifier)

    def automap_config(self) -> AutoMapConfig:
        table = self.section("automap")
        try:
            return AutoMapConfig(
                area_fraction_threshold=float(
                    table.get("area_fraction_threshold", AutoMapConfig().area_fraction_threshold)
                )
            )
        except ValueError as exc:
            raise ConfigError(f"[automap]: {exc}") from exc

    def relabel_options(self) -> dict:
        table = self.section("relabel")
        return {
            "step": int(table.get("step", self.schedule().relabel_start_step)),
            "relabel_confidence": float(
                table.get("relabel_confidence", DEFAULT_RELABEL_CONFIDENCE)
            ),
            "classifier_filter": bool(table.get("classifier_filter", True)),
        }

    def metric_spec_names(self) -> tuple[list[str], list[str]]:
        table = self.section("metrics")
        subset = [str(n) for n in table.get("subset", [])]
        zero_fill = [str(n) for n in table.get("zero_fill", [])]
        return subset, zero_fill

    def noise(self) -> NoiseConfig:
        table = self.section("noise")
        defaults = NoiseConfig()
        try:
            return NoiseConfig(
                box_jitter_px=int(table.get("box_jitter_px", defaults.box_jitter_px)),
                false_positive_rate=float(
                    table.get("false_positive_rate", defaults.false_positive_rate)
                ),
                classifier_correct_prob=float(
                    table.get("classifier_correct_prob", defaults.classifier_correct_prob)
                ),
                score_range=tuple(table.get("score_range", defaults.score_range)),
            )
        except ValueError as exc:
            raise ConfigError(f"[noise]: {exc}") from exc

    def experiment(self, seed_override: int | None = None, csi_override: bool | None = None) -> ExperimentConfig:
        """Build an experiment from the [experiment] table.

        ``preset = "demo"`` (the default) starts from the built-in setup and
        accepts field overrides. ``preset = "custom"`` builds everything from
        the config: taxonomies from [paths], scene geometry and prototypes
        from [experiment.scene], thresholds/noise/schedule from their own
        sections, class lists and the source-label table from [experiment].
        """
        table = dict(self.section("experiment"))
        preset = table.pop("preset", "demo")
        scene_table = table.pop("scene", None)
        if preset == "demo":
            config = self._demo_experiment(table)
        elif preset == "custom":
            config = self._custom_experiment(table, scene_table or {})
        else:
            raise ConfigError(f"unknown experiment preset {preset!r}")
        if seed_override is not None:
            config = dataclasses.replace(config, seed=seed_override)
        if csi_override is not None:
            config = dataclasses.replace(config, csi_enabled=csi_override)
        return config

    def _demo_experiment(self, table: dict) -> ExperimentConfig:
        known = {f.name for f in dataclasses.fields(ExperimentConfig)}
        kwargs = {}
        for key in ("total_steps", "relabel_start_step", "collect_start_step"):
            if key in table:
                kwargs[key] = int(table.pop(key))
        overrides = {}
        for key, value in table.items():
            if key not in known:
                raise ConfigError(f"[experiment] has unknown field {key!r}")
            overrides[key] = value
        if "noise" in self.raw:
            overrides["noise"] = self.noise()
        seed = int(overrides.pop("seed", 0))
        csi = bool(overrides.pop("csi_enabled", True))
        try:
            return presets.demo_experiment_config(
                seed=seed, csi_enabled=csi, **kwargs, **overrides
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[experiment]: {exc}") from exc

    def _custom_experiment(self, table: dict, scene_table: dict) -> ExperimentConfig:
        from .sim.world import SceneConfig
        from .taxonomy import ConversionTable, MapOrigin, RelabelMap

        source, target = self.load_taxonomies()

        def ids_of(names, taxonomy) -> tuple[int, ...]:
            return tuple(taxonomy.class_by_name(str(n)).id for n in names)

        def require(mapping, key, where):
            if key not in mapping:
                raise ConfigError(f"[{where}] is missing {key!r}")
            return mapping[key]

        prototypes = {
            target.class_by_name(name).id: tuple(float(v) for v in vec)
            for name, vec in require(scene_table, "prototypes", "experiment.scene").items()
        }
        pairs = tuple(
            (target.class_by_name(a).id, target.class_by_name(b).id)
            for a, b in scene_table.get("confusable_pairs", [])
        )
        try:
            scene = SceneConfig(
                prototypes=prototypes,
                background_class=target.class_by_name(
                    require(scene_table, "background", "experiment.scene")).id,
                object_classes=ids_of(
                    require(scene_table, "object_classes", "experiment.scene"), target),
                width=int(scene_table.get("width", 64)),
                height=int(scene_table.get("height", 64)),
                objects_per_scene=tuple(scene_table.get("objects_per_scene", (7, 9))),
                size_range=tuple(scene_table.get("size_range", (6, 12))),
                feature_noise=float(scene_table.get("feature_noise", 0.12)),
                object_noise=float(scene_table.get("object_noise", 0.15)),
                confusable_pairs=pairs,
                confusable_eps=float(scene_table.get("confusable_eps", 1.0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"[experiment.scene]: {exc}") from exc

        label_table = ConversionTable(tuple(
            (target.class_by_name(old).id, target.class_by_name(new).id)
            for old, new in require(table, "source_label_table", "experiment").items()
        ))
        predefined = self.load_map(source, target, required=False)
        if predefined is None:
            predefined = RelabelMap(entries=(), origin=MapOrigin.PREDEFINED)
        schedule = self.schedule()
        for key in ("total_steps", "relabel_start_step", "collect_start_step"):
            if key in table:
                schedule = dataclasses.replace(schedule, **{key: int(table.pop(key))})
        extra = {}
        for key in ("learning_rate", "ema_alpha", "confidence_tau", "relabel_confidence",
                    "num_source_worlds", "num_target_worlds", "num_eval_worlds",
                    "eval_interval", "loss_log_interval", "classifier_filter_enabled"):
            if key in table:
                extra[key] = table[key]
        try:
            return ExperimentConfig(
                source_taxonomy=source,
                target_taxonomy=target,
                scene=scene,
                source_object_classes=ids_of(
                    require(table, "source_object_classes", "experiment"), target),
                source_label_table=label_table,
                domain_shift=tuple(float(v) for v in require(table, "domain_shift", "experiment")),
                predefined_map=predefined,
                open_classes=ids_of(table.get("open_classes", []), target),
                classification_classes=ids_of(
                    require(table, "classification_classes", "experiment"), target),
                thresholds=self.thresholds(target),
                automap_config=self.automap_config(),
                schedule=schedule,
                noise=self.noise(),
                csi_enabled=bool(table.get("csi_enabled", True)),
                seed=int(table.get("seed", 0)),
                **extra,
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[experiment]: {exc}") from exc

    def gen_options(self) -> dict:
        table = self.section("gen")
        return {
            "num_worlds": int(table.get("num_worlds", 4)),
            "seed": int(table.get("seed", 0)),
        }
