"""Facial-segment face detection toolkit.

Detects a single (possibly partially visible) face either by classifying
proposals built from facial-segment detections (FSFD / SegFace /
DeepSegFace-toy) or by direct regression of the face and all segment boxes
in one forward pass (DRUID-toy), with a synthetic schematic-face corpus and
a full evaluation protocol for desk-scale experiments.
"""

from faceseg.geometry import (
    BBox,
    FracRect,
    ImageMeta,
    SegmentCatalog,
    SEGMENT_IDS,
    PROPOSAL_SEGMENTS,
)

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "FracRect",
    "ImageMeta",
    "SegmentCatalog",
    "SEGMENT_IDS",
    "PROPOSAL_SEGMENTS",
    "__version__",
]
