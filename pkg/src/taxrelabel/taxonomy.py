"""Class label spaces: taxonomies, concept expansion, relabeling maps, and
label-space conversions.

A taxonomy document is TOML with a top-level ``name`` and one ``[[class]]``
table per class (fields: id, name, category, optional concepts). ID 255 is
reserved as the ignore value and may not be assigned to a class.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .raster import IGNORE_ID, LabelRaster


class TaxonomyError(ValueError):
    """Raised for malformed taxonomy documents or lookups of unknown classes."""


class MapValidationError(ValueError):
    """Raised when a relabeling map violates its structural constraints."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = list(violations)


@dataclass(frozen=True)
class ClassDef:
    """One class of a label space.

    ``concepts`` is the ordered prompt list used for zero-shot queries; it
    defaults to the class name alone.
    """

    id: int
    name: str
    category: str
    concepts: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not (0 <= self.id < IGNORE_ID):
            raise TaxonomyError(f"class id {self.id} outside [0, {IGNORE_ID - 1}]")
        if not self.name:
            raise TaxonomyError("class name must be non-empty")
        if not self.category:
            raise TaxonomyError(f"class {self.name!r} has empty category")
        concepts = tuple(self.concepts) or (self.name,)
        if any(not c for c in concepts):
            raise TaxonomyError(f"class {self.name!r} has an empty concept string")
        object.__setattr__(self, "concepts", concepts)


@dataclass(frozen=True)
class Taxonomy:
    """A named set of classes with unique IDs and names; 255 is ignore."""

    name: str
    classes: tuple[ClassDef, ...]
    ignore_id: int = IGNORE_ID

    def __post_init__(self) -> None:
        classes = tuple(self.classes)
        object.__setattr__(self, "classes", classes)
        ids = [c.id for c in classes]
        names = [c.name for c in classes]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise TaxonomyError(f"duplicate class ids {dupes} in taxonomy {self.name!r}")
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise TaxonomyError(f"duplicate class names {dupes} in taxonomy {self.name!r}")
        if self.ignore_id != IGNORE_ID:
            raise TaxonomyError(f"ignore id must be {IGNORE_ID}")
        object.__setattr__(self, "_by_id", {c.id: c for c in classes})
        object.__setattr__(self, "_by_name", {c.name: c for c in classes})

    @property
    def ids(self) -> frozenset[int]:
        return frozenset(self._by_id)

    def class_by_id(self, class_id: int) -> ClassDef:
        try:
            return self._by_id[class_id]
        except KeyError:
            raise TaxonomyError(f"unknown class id {class_id} in taxonomy {self.name!r}") from None

    def class_by_name(self, name: str) -> ClassDef:
        try:
            return self._by_name[name]
        except KeyError:
            raise TaxonomyError(f"unknown class name {name!r} in taxonomy {self.name!r}") from None

    def has_id(self, class_id: int) -> bool:
        return class_id in self._by_id


class MapOrigin(enum.Enum):
    PREDEFINED = "predefined"
    AUTO_CONFIGURED = "auto_configured"


@dataclass(frozen=True)
class MapEntry:
    """Relabel pixels of ``from_id`` (source space) to ``to_id`` (target-only)."""

    from_id: int
    to_id: int


@dataclass(frozen=True)
class RelabelMap:
    """Ordered relabeling directives.

    Construction is permissive; :func:`validate_map` reports constraint
    violations without raising so callers can surface all of them at once.
    """

    entries: tuple[MapEntry, ...]
    origin: MapOrigin = MapOrigin.PREDEFINED

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))

    @property
    def from_ids(self) -> frozenset[int]:
        return frozenset(e.from_id for e in self.entries)

    @property
    def to_ids(self) -> frozenset[int]:
        return frozenset(e.to_id for e in self.entries)

    def entries_for_target(self, to_id: int) -> tuple[MapEntry, ...]:
        return tuple(e for e in self.entries if e.to_id == to_id)


@dataclass(frozen=True)
class ConversionTable:
    """Total mapping old class ID -> new class ID; new may be the ignore value."""

    pairs: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        pairs = tuple((int(a), int(b)) for a, b in self.pairs)
        olds = [a for a, _ in pairs]
        if len(set(olds)) != len(olds):
            raise TaxonomyError("conversion table maps an old id more than once")
        for old, new in pairs:
            if not (0 <= old < IGNORE_ID) or not (0 <= new <= IGNORE_ID):
                raise TaxonomyError(f"conversion pair ({old}, {new}) out of range")
        object.__setattr__(self, "pairs", pairs)

    @property
    def covered(self) -> frozenset[int]:
        return frozenset(a for a, _ in self.pairs)


# ---------------------------------------------------------------------------
# operations


def load_taxonomy(document: str) -> Taxonomy:
    """Parse and validate a TOML taxonomy document."""
    try:
        raw = tomllib.loads(document)
    except tomllib.TOMLDecodeError as exc:
        raise TaxonomyError(f"taxonomy document does not parse: {exc}") from exc
    name = raw.get("name")
    if not isinstance(name, str) or not name:
        raise TaxonomyError("taxonomy document needs a non-empty top-level 'name'")
    raw_classes = raw.get("class")
    if not isinstance(raw_classes, list) or not raw_classes:
        raise TaxonomyError("taxonomy document needs at least one [[class]] table")
    classes = []
    for i, entry in enumerate(raw_classes):
        try:
            cid = entry["id"]
            cname = entry["name"]
            category = entry["category"]
        except (KeyError, TypeError) as exc:
            raise TaxonomyError(f"class #{i}: missing field {exc}") from exc
        if not isinstance(cid, int) or isinstance(cid, bool):
            raise TaxonomyError(f"class #{i}: id must be an integer")
        if cid == IGNORE_ID:
            raise TaxonomyError(f"class {cname!r} uses reserved ignore id {IGNORE_ID}")
        concepts = entry.get("concepts", [])
        if not isinstance(concepts, list) or any(not isinstance(c, str) for c in concepts):
            raise TaxonomyError(f"class {cname!r}: concepts must be a list of strings")
        classes.append(ClassDef(id=cid, name=cname, category=category, concepts=tuple(concepts)))
    return Taxonomy(name=name, classes=tuple(classes))


def format_taxonomy_document(taxonomy: Taxonomy) -> str:
    """Render a taxonomy back to its TOML document form."""
    lines = [f'name = "{taxonomy.name}"', ""]
    for cls in taxonomy.classes:
        lines.append("[[class]]")
        lines.append(f"id = {cls.id}")
        lines.append(f'name = "{cls.name}"')
        lines.append(f'category = "{cls.category}"')
        concepts = ", ".join(f'"{c}"' for c in cls.concepts)
        lines.append(f"concepts = [{concepts}]")
        lines.append("")
    return "\n".join(lines)


def expand_concepts(class_id: int, taxonomy: Taxonomy) -> list[str]:
    """The class's ordered concept list, verbatim."""
    return list(taxonomy.class_by_id(class_id).concepts)


def convert_label_space(raster: LabelRaster, table: ConversionTable) -> LabelRaster:
    """Map every pixel through the table; ignore passes through unchanged."""
    present = {int(v) for v in np.unique(raster.data)} - {IGNORE_ID}
    uncovered = present - set(table.covered)
    if uncovered:
        raise TaxonomyError(f"raster contains ids {sorted(uncovered)} not covered by the table")
    lut = np.arange(256, dtype=np.uint8)
    for old, new in table.pairs:
        lut[old] = new
    return LabelRaster(lut[raster.data])


def validate_map(relabel_map: RelabelMap, source: Taxonomy, target: Taxonomy) -> list[str]:
    """Check all relabeling-map constraints; returns violations (empty = ok)."""
    violations = []
    from_ids = [e.from_id for e in relabel_map.entries]
    if len(set(from_ids)) != len(from_ids):
        dupes = sorted({i for i in from_ids if from_ids.count(i) > 1})
        violations.append(f"duplicate from-ids {dupes}")
    overlap = relabel_map.from_ids & relabel_map.to_ids
    if overlap:
        violations.append(f"from/to sets overlap on ids {sorted(overlap)} (map must be acyclic)")
    for entry in relabel_map.entries:
        if not source.has_id(entry.from_id):
            violations.append(f"from-id {entry.from_id} not in source taxonomy {source.name!r}")
        if not target.has_id(entry.to_id):
            violations.append(f"to-id {entry.to_id} not in target taxonomy {target.name!r}")
        elif source.has_id(entry.to_id):
            violations.append(f"to-id {entry.to_id} is not target-only (present in source)")
    return violations


def ensure_valid_map(relabel_map: RelabelMap, source: Taxonomy, target: Taxonomy) -> RelabelMap:
    """Raise :class:`MapValidationError` unless the map validates cleanly."""
    violations = validate_map(relabel_map, source, target)
    if violations:
        raise MapValidationError(violations)
    return relabel_map


# ---------------------------------------------------------------------------
# serialization helpers (maps and conversion tables travel as JSON by name)


def map_to_json(relabel_map: RelabelMap, source: Taxonomy, target: Taxonomy) -> str:
    entries = [
        {"from": source.class_by_id(e.from_id).name, "to": target.class_by_id(e.to_id).name}
        for e in relabel_map.entries
    ]
    return json.dumps({"origin": relabel_map.origin.value, "entries": entries}, indent=2)


def map_from_json(text: str, source: Taxonomy, target: Taxonomy) -> RelabelMap:
    raw = json.loads(text)
    entries = tuple(
        MapEntry(source.class_by_name(e["from"]).id, target.class_by_name(e["to"]).id)
        for e in raw["entries"]
    )
    return RelabelMap(entries=entries, origin=MapOrigin(raw.get("origin", "predefined")))


def conversion_from_json(text: str, taxonomy: Taxonomy) -> ConversionTable:
    """Parse ``{"old-name": "new-name" | null, ...}``; null converts to ignore."""
    raw = json.loads(text)
    pairs = []
    for old_name, new_name in raw.items():
        old = taxonomy.class_by_name(old_name).id
        new = IGNORE_ID if new_name is None else taxonomy.class_by_name(new_name).id
        pairs.append((old, new))
    return ConversionTable(tuple(pairs))


def identity_conversion(taxonomy: Taxonomy) -> ConversionTable:
    return ConversionTable(tuple((c.id, c.id) for c in taxonomy.classes))
