"""taxrelabel: zero-shot relabeling of segmentation pseudo-labels across
inconsistent source/target class taxonomies.

The package is organized around small, pure operations: taxonomies and
relabeling maps, label/confidence rasters with bit-exact file formats,
detection thresholding and NMS, zero-shot classification filtering, the
schedule-gated relabeling pipeline, map auto-configuration, evaluation
metrics, and a seeded simulation harness under :mod:`taxrelabel.sim`.
"""

from .automap import (
    AutoMapConfig,
    CandidateCounts,
    collect_candidates,
    counts_from_json,
    counts_to_json,
    finalize_map,
    merge_counts,
)
from .detect import (
    Detection,
    DetectorThresholds,
    Patch,
    WireFormatError,
    box_iou,
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
    IGNORE_ID,
    BBox,
    ConfidenceRaster,
    LabelRaster,
    RasterFormatError,
    class_histogram,
    connected_components,
    constant_confidence,
    crop,
    paste,
    read_confidence,
    read_raster,
    write_confidence,
    write_raster,
)
from .relabel import (
    PipelineThresholds,
    RelabelReport,
    RelabelSchedule,
    ScoreLookupError,
    apply_csi,
    relabel_patch,
)
from .taxonomy import (
    ClassDef,
    ConversionTable,
    MapEntry,
    MapOrigin,
    MapValidationError,
    RelabelMap,
    Taxonomy,
    TaxonomyError,
    convert_label_space,
    ensure_valid_map,
    expand_concepts,
    format_taxonomy_document,
    load_taxonomy,
    map_from_json,
    map_to_json,
    validate_map,
)
from .zsfilter import (
    ClassifierThresholds,
    ConceptScores,
    PatchVerdict,
    build_concept_index,
    classifications_from_jsonl,
    classifications_to_jsonl,
    classify_patch,
    precheck_contains_from,
    softmax,
)

__version__ = "0.1.0"
