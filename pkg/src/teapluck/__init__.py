"""Tender tea leaf identification and a force-controlled plucking finger simulator."""

__version__ = "0.1.0"

from .estimator import TenderLeafSegmenter
from .fitting import FitConfig, FitResult, NotFoundError, average_params, fit_dataset, fit_image
from .imaging import BinaryMask, RgbImage, SampleBox, SampleSet, extract_samples
from .segmentation import SegmentationParams, binarize, classify, exg_index, score

__all__ = [
    "BinaryMask",
    "FitConfig",
    "FitResult",
    "NotFoundError",
    "RgbImage",
    "SampleBox",
    "SampleSet",
    "SegmentationParams",
    "TenderLeafSegmenter",
    "average_params",
    "binarize",
    "classify",
    "exg_index",
    "extract_samples",
    "fit_dataset",
    "fit_image",
    "score",
]
