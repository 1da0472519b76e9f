"""Training-data factory: flips, partial-visibility crops, photometric jitter,
and background negative sampling.

Crops cut the image at a segment boundary of the face so only that segment
(and everything it contains) stays visible; visibilities are then recomputed
from fractional containment, which preserves implications such as "L34
visible forces L12 and UL12 visible".
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from faceseg.druid_loss import DruidGroundTruth
from faceseg.geometry import BBox, FLIP_PAIRS, FracRect, ImageMeta, SegmentCatalog, SEGMENT_IDS
from faceseg.imageops import gaussian_blur

CROP_KINDS = ("FLIP", "TO_L12", "TO_L34", "TO_R12", "TO_R34", "TO_U12", "TO_U34")

# kept segment and the face-fraction halfplane that survives the crop:
# (axis, boundary, keep_low_side)
_CROP_RULES = {
    "TO_L12": ("L12", "x", 0.5, True),
    "TO_L34": ("L34", "x", 0.75, True),
    "TO_R12": ("R12", "x", 0.5, False),
    "TO_R34": ("R34", "x", 0.25, False),
    "TO_U12": ("U12", "y", 0.5, True),
    "TO_U34": ("U34", "y", 0.75, True),
}


@dataclass
class PhotometricConfig:
    """Blur-then-gamma jitter; gamma is 2**s with s standard normal."""

    blur_prob: float = 0.7
    blur_radius: tuple[float, float] = (0.0, 5.0)
    gamma_scale: float = 1.0  # multiplies s before gamma = 2**s

    def __post_init__(self):
        if not 0.0 <= self.blur_prob <= 1.0:
            raise ValueError("blur probability must be in [0, 1]")
        if self.blur_radius[0] < 0 or self.blur_radius[1] < self.blur_radius[0]:
            raise ValueError("blur radius range must be nonnegative and ordered")


def visible_face_rect(face: BBox, img: ImageMeta) -> FracRect | None:
    """In-frame portion of the face, as fractions of the face box (None if empty)."""
    w, h = face.width, face.height
    if w <= 0 or h <= 0:
        return None
    fx1 = min(max((0.0 - face.x1) / w, 0.0), 1.0)
    fx2 = min(max((img.width - face.x1) / w, 0.0), 1.0)
    fy1 = min(max((0.0 - face.y1) / h, 0.0), 1.0)
    fy2 = min(max((img.height - face.y1) / h, 0.0), 1.0)
    if fx2 - fx1 <= 0 or fy2 - fy1 <= 0:
        return None
    return FracRect(fx1, fy1, fx2, fy2)


def recompute_visibility(gt: DruidGroundTruth, img: ImageMeta,
                         catalog: SegmentCatalog, tol: float = 1e-9) -> dict[str, int]:
    """Visible iff the segment's fractional rectangle is inside the visible face."""
    vis_rect = visible_face_rect(gt.face, img)
    if vis_rect is None:
        return {seg: 0 for seg in SEGMENT_IDS}
    return {seg: int(vis_rect.contains(catalog[seg], tol)) for seg in SEGMENT_IDS}


def crop_plan(gt: DruidGroundTruth, img: ImageMeta,
              catalog: SegmentCatalog | None = None) -> list[str]:
    """Crop kinds applicable to this sample; FLIP is always available.

    A TO_* crop applies only when its target segment is fully visible and the
    crop would remove at least one pixel's worth of visible face.
    """
    catalog = catalog or SegmentCatalog.default()
    plan = ["FLIP"]
    vis_rect = visible_face_rect(gt.face, img)
    if vis_rect is None:
        return plan
    for kind in CROP_KINDS[1:]:
        target, axis, bound, keep_low = _CROP_RULES[kind]
        if not vis_rect.contains(catalog[target]):
            continue
        extent = gt.face.width if axis == "x" else gt.face.height
        px_tol = 1.0 / max(extent, 1.0)  # cropping less than a pixel is a no-op
        hi = vis_rect.fx2 if axis == "x" else vis_rect.fy2
        lo = vis_rect.fx1 if axis == "x" else vis_rect.fy1
        reduces = (hi > bound + px_tol) if keep_low else (lo < bound - px_tol)
        if reduces:
            plan.append(kind)
    return plan


def apply_crop(image: np.ndarray | None, gt: DruidGroundTruth, kind: str,
               catalog: SegmentCatalog | None = None):
    """Apply one crop kind; returns (image', gt') in the new frame.

    Boxes are translated (never resized), so the face box may extend past
    the new image; visibilities and the face confidence target are
    recomputed.  ``image`` may be None when only ground truth is needed,
    in which case the frame size must come from gt-independent callers.
    """
    catalog = catalog or SegmentCatalog.default()
    if image is None:
        raise ValueError("apply_crop needs the image to establish the frame")
    h, w = image.shape
    img = ImageMeta(w, h)

    if kind == "FLIP":
        flipped = image[:, ::-1].copy()

        def mirror(box: BBox) -> BBox:
            return BBox(w - box.x2, box.y1, w - box.x1, box.y2)

        boxes = {seg: mirror(gt.boxes[FLIP_PAIRS.get(seg, seg)]) for seg in SEGMENT_IDS}
        vis = {seg: gt.vis[FLIP_PAIRS.get(seg, seg)] for seg in SEGMENT_IDS}
        return flipped, DruidGroundTruth(face=mirror(gt.face), boxes=boxes, vis=vis)

    if kind not in _CROP_RULES:
        raise ValueError(f"unknown crop kind {kind!r}")
    if kind not in crop_plan(gt, img, catalog):
        raise ValueError(f"crop {kind} is not applicable to this sample")

    _, axis, bound, keep_low = _CROP_RULES[kind]
    if axis == "x":
        cut = gt.face.x1 + bound * gt.face.width
        # round outward so the kept side never loses part of the target segment
        if keep_low:
            px = min(max(int(math.ceil(cut - 1e-9)), 1), w)
            new_img, dx, dy = image[:, :px].copy(), 0.0, 0.0
        else:
            px = min(max(int(math.floor(cut + 1e-9)), 0), w - 1)
            new_img, dx, dy = image[:, px:].copy(), -float(px), 0.0
    else:
        cut = gt.face.y1 + bound * gt.face.height
        if keep_low:
            px = min(max(int(math.ceil(cut - 1e-9)), 1), h)
            new_img, dx, dy = image[:px, :].copy(), 0.0, 0.0
        else:
            px = min(max(int(math.floor(cut + 1e-9)), 0), h - 1)
            new_img, dx, dy = image[px:, :].copy(), 0.0, -float(px)

    boxes = {seg: gt.boxes[seg].translate(dx, dy) for seg in SEGMENT_IDS}
    new_gt = DruidGroundTruth(face=gt.face.translate(dx, dy), boxes=boxes, vis=dict(gt.vis))
    nh, nw = new_img.shape
    new_gt.vis = recompute_visibility(new_gt, ImageMeta(nw, nh), catalog)
    return new_img, new_gt


def photometric(image: np.ndarray, cfg: PhotometricConfig, seed) -> np.ndarray:
    """Seeded blur + gamma jitter on a [0,1] image; output stays in [0,1]."""
    rng = np.random.default_rng(seed)
    out = image
    if rng.random() < cfg.blur_prob:
        radius = rng.uniform(*cfg.blur_radius)
        out = gaussian_blur(out, radius)
    s = rng.standard_normal() * cfg.gamma_scale
    gamma = 2.0 ** s
    return np.clip(out, 0.0, 1.0) ** gamma


def negative_sample(image: np.ndarray, gt: DruidGroundTruth, seed,
                    max_tries: int = 100) -> BBox:
    """A face-sized box placed fully inside the image with zero face overlap."""
    h, w = image.shape
    fw, fh = gt.face.width, gt.face.height
    if fw > w or fh > h:
        raise ValueError("face larger than image; no negative placement possible")
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        x1 = rng.uniform(0.0, w - fw)
        y1 = rng.uniform(0.0, h - fh)
        box = BBox(x1, y1, x1 + fw, y1 + fh)
        ix = min(box.x2, gt.face.x2) - max(box.x1, gt.face.x1)
        iy = min(box.y2, gt.face.y2) - max(box.y1, gt.face.y1)
        if ix <= 0 or iy <= 0:
            return box
    raise ValueError(f"no zero-overlap placement found in {max_tries} tries")
