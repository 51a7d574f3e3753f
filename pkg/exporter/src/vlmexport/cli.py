"""Command-line exporter: export-dets, export-cls, convert-labels."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .backends import ModelLoadError, build_classifier, build_detector
from .formats import write_jsonl
from .jobs import (
    DEFAULT_PROMPT_TEMPLATE,
    ExportError,
    ExportJob,
    convert_dataset_labels,
    export_classifications,
    export_detections,
    load_conversion_table,
    read_patches_manifest,
)
from .taxonomy import TaxonomyDocumentError, load_taxonomy_document


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ExportError, ModelLoadError, TaxonomyDocumentError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vlmexport",
        description="Run zero-shot models over images and emit engine wire formats",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    dets = sub.add_parser("export-dets", help="raw open-vocabulary detections as JSONL")
    _model_flags(dets)
    dets.add_argument("--classes", default=None,
                      help="comma-separated class names to query (default: all)")
    dets.add_argument("--max-dets", type=int, default=100,
                      help="cap on detections per image (transformers backend)")
    dets.set_defaults(func=cmd_export_dets)

    cls = sub.add_parser("export-cls", help="raw classification logits per patch as JSONL")
    _model_flags(cls)
    cls.add_argument("--patches", required=True,
                     help="patches manifest JSONL from the engine")
    cls.add_argument("--template", default=DEFAULT_PROMPT_TEMPLATE,
                     help="classification prompt template with {concept}")
    cls.set_defaults(func=cmd_export_cls)

    conv = sub.add_parser("convert-labels", help="convert dataset label images to CSIL")
    conv.add_argument("--images", nargs="+", required=True, help="label image files")
    conv.add_argument("--taxonomy", required=True, help="taxonomy document (TOML)")
    conv.add_argument("--table", required=True,
                      help="JSON conversion table {old-name: new-name | null}")
    conv.add_argument("--out", required=True, help="output directory")
    conv.set_defaults(func=cmd_convert_labels)

    return parser


def _model_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--model", default="mock",
                     help="model checkpoint id or path (ignored by the mock backend)")
    sub.add_argument("--backend", choices=["transformers", "mock"], default="transformers",
                     help="inference backend; 'mock' is deterministic and weight-free")
    sub.add_argument("--images", nargs="+", required=True, help="input images")
    sub.add_argument("--taxonomy", required=True, help="taxonomy document (TOML)")
    sub.add_argument("--out", required=True, help="output JSONL path")


def _job(args, classes: tuple[str, ...] = (), template: str = DEFAULT_PROMPT_TEMPLATE) -> ExportJob:
    taxonomy = load_taxonomy_document(Path(args.taxonomy).read_text(encoding="utf-8"))
    return ExportJob(
        images=tuple(Path(p) for p in args.images),
        taxonomy=taxonomy,
        detector_model=args.model,
        classifier_model=args.model,
        prompt_template=template,
        classes=classes,
    )


def cmd_export_dets(args) -> int:
    classes = tuple(s.strip() for s in args.classes.split(",")) if args.classes else ()
    job = _job(args, classes=classes)
    backend = build_detector(args.backend, args.model, args.max_dets)
    count = write_jsonl(args.out, export_detections(job, backend))
    print(f"wrote {count} detection records to {args.out}")
    return 0


def cmd_export_cls(args) -> int:
    job = _job(args, template=args.template)
    manifest = read_patches_manifest(Path(args.patches).read_text(encoding="utf-8"))
    backend = build_classifier(args.backend, args.model)
    count = write_jsonl(args.out, export_classifications(job, manifest, backend))
    print(f"wrote {count} classification records to {args.out}")
    return 0


def cmd_convert_labels(args) -> int:
    taxonomy = load_taxonomy_document(Path(args.taxonomy).read_text(encoding="utf-8"))
    table = load_conversion_table(Path(args.table).read_text(encoding="utf-8"), taxonomy)
    written = convert_dataset_labels(
        [Path(p) for p in args.images], taxonomy, table, Path(args.out)
    )
    print(f"wrote {len(written)} rasters to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
