"""vlmexport: runs zero-shot detection/classification over real images and
emits the taxrelabel engine's wire formats (detections/classifications JSONL
and CSIL label rasters)."""

from .backends import (
    MockClassifier,
    MockDetector,
    ModelLoadError,
    RawDetection,
    TransformersClassifier,
    TransformersDetector,
    build_classifier,
    build_detector,
)
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
from .taxonomy import TaxonomyDocumentError, TaxonomyView, load_taxonomy_document

__version__ = "0.1.0"
