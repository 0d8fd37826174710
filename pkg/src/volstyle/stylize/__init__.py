from .deferred import deferred_backprop
from .features import (FeatureArchiveError, FeatureExtractor, FeatureMap,
                       load_feature_extractor, write_reduced_extractor_archive)
from .nnfm import nnfm_loss
from .optimize import NPSEConfig, StyleAssignment, StyleRegion, StylizeError, stylize
from .segmentation import (HTTPSegmentationBackend, ManualSegmentationBackend,
                           SegmentationError, decode_rle, encode_rle,
                           segment_reference)

__all__ = [
    "FeatureArchiveError",
    "FeatureExtractor",
    "FeatureMap",
    "HTTPSegmentationBackend",
    "ManualSegmentationBackend",
    "NPSEConfig",
    "SegmentationError",
    "StyleAssignment",
    "StyleRegion",
    "StylizeError",
    "decode_rle",
    "deferred_backprop",
    "encode_rle",
    "load_feature_extractor",
    "nnfm_loss",
    "segment_reference",
    "stylize",
    "write_reduced_extractor_archive",
]
