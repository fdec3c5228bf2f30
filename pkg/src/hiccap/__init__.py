"""Trainable hierarchical cross-attention fusion over precomputed
text/audio/video feature sequences: matching and contrastive
pretraining, multi-task fine-tuning, and a desk-scale evaluation
harness."""

__version__ = "0.1.0"

from .data_model import (
    CATEGORIES,
    ClipRecord,
    DatasetManifest,
    FeatureSequence,
    LabelSet,
    Modality,
    ModalityOrdering,
    TextSource,
    derive_binary,
    validate_clip,
)
from .ingest import AnnotationSet, PartitionSpec, load_dataset, majority_vote, split_partitions

__all__ = [
    "CATEGORIES",
    "ClipRecord",
    "DatasetManifest",
    "FeatureSequence",
    "LabelSet",
    "Modality",
    "ModalityOrdering",
    "TextSource",
    "derive_binary",
    "validate_clip",
    "AnnotationSet",
    "PartitionSpec",
    "load_dataset",
    "majority_vote",
    "split_partitions",
    "__version__",
]
