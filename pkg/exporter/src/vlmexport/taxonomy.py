"""Reader for the engine's TOML taxonomy documents.

The exporter only needs names, ids, and concept lists; it keeps its own
small parser so it depends on the document format, not on the engine's
internals.
"""

from __future__ import annotations

from dataclasses import dataclass

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

IGNORE_ID = 255


class TaxonomyDocumentError(ValueError):
    pass


@dataclass(frozen=True)
class TaxonomyView:
    """Ordered (id, name, concepts) triples from a taxonomy document."""

    name: str
    entries: tuple[tuple[int, str, tuple[str, ...]], ...]

    def class_names(self) -> list[str]:
        return [name for _, name, _ in self.entries]

    def concepts_of(self, class_name: str) -> tuple[str, ...]:
        for _, name, concepts in self.entries:
            if name == class_name:
                return concepts
        raise TaxonomyDocumentError(f"unknown class {class_name!r}")

    def id_of(self, class_name: str) -> int:
        for cid, name, _ in self.entries:
            if name == class_name:
                return cid
        raise TaxonomyDocumentError(f"unknown class {class_name!r}")

    def all_concepts(self) -> list[tuple[str, str]]:
        """(class_name, concept) pairs in document order, without duplicates."""
        seen = set()
        pairs = []
        for _, name, concepts in self.entries:
            for concept in concepts:
                if concept not in seen:
                    pairs.append((name, concept))
                    seen.add(concept)
        return pairs


def load_taxonomy_document(text: str) -> TaxonomyView:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise TaxonomyDocumentError(f"taxonomy document does not parse: {exc}") from exc
    name = raw.get("name")
    classes = raw.get("class")
    if not isinstance(name, str) or not isinstance(classes, list) or not classes:
        raise TaxonomyDocumentError("document needs a name and at least one [[class]]")
    entries = []
    for item in classes:
        cid = item["id"]
        cname = item["name"]
        if cid == IGNORE_ID:
            raise TaxonomyDocumentError(f"class {cname!r} uses the reserved ignore id")
        concepts = tuple(item.get("concepts") or (cname,))
        entries.append((int(cid), str(cname), concepts))
    ids = [cid for cid, _, _ in entries]
    names = [n for _, n, _ in entries]
    if len(set(ids)) != len(ids) or len(set(names)) != len(names):
        raise TaxonomyDocumentError("duplicate class ids or names")
    return TaxonomyView(name=name, entries=tuple(entries))
