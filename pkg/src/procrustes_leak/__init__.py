"""Generalized Procrustes analysis and train/test leakage in shape regression."""

from __future__ import annotations

__version__ = "0.1.0"

from .gpa import AlignmentResult, gpa
from .shape_core import LandmarkConfig, SimilarityTransform, procrustes_distance
from .simulator import ShapeSample, SimConfig, simulate
from .split_align import SplitIndices, align_clean, align_contaminated, split

__all__ = [
    "AlignmentResult",
    "LandmarkConfig",
    "ShapeSample",
    "SimConfig",
    "SimilarityTransform",
    "SplitIndices",
    "align_clean",
    "align_contaminated",
    "gpa",
    "procrustes_distance",
    "simulate",
    "split",
]
