"""Synthetic schematic-face corpus: rendering, simulated weak segment
detectors, and annotation / dataset I/O.

Every image carries exact ground truth by construction, so pipeline
correctness is testable without any external dataset.  Faces are flat-shaded
ellipse heads with eye dots, a nose wedge, and a mouth bar, all placed
through the segment catalog; occlusion crops and photometric jitter come
from the augmentation module.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from faceseg.augment import CROP_KINDS, PhotometricConfig, apply_crop, crop_plan, photometric
from faceseg.druid_loss import DruidGroundTruth
from faceseg.geometry import (
    BBox,
    ImageMeta,
    PROPOSAL_SEGMENTS,
    SEGMENT_IDS,
    SegmentCatalog,
    segment_from_face,
)
from faceseg.imageops import read_pgm, write_pgm
from faceseg.proposals import SegmentDetection

DEFAULT_CROP_WEIGHTS = {
    "none": 0.55, "FLIP": 0.05,
    "TO_L34": 0.09, "TO_U34": 0.09, "TO_R34": 0.07,
    "TO_L12": 0.05, "TO_U12": 0.05, "TO_R12": 0.05,
}


@dataclass
class SceneSpec:
    """Generation recipe; together with n it fully determines a corpus."""

    width: int = 128
    height: int = 128
    face_scale: tuple[float, float] = (0.4, 0.75)   # of min(width, height)
    face_aspect: tuple[float, float] = (0.9, 1.15)  # height / width
    crop_weights: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_CROP_WEIGHTS))
    photometric: PhotometricConfig | None = field(default_factory=PhotometricConfig)
    no_face_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.face_scale[0] > self.face_scale[1] or self.face_scale[0] <= 0:
            raise ValueError("face scale range must be nonempty and positive")
        if not 0.0 <= self.no_face_fraction <= 1.0:
            raise ValueError("no-face fraction must be in [0, 1]")
        bad = set(self.crop_weights) - set(CROP_KINDS) - {"none"}
        if bad:
            raise ValueError(f"unknown crop kinds in weights: {sorted(bad)}")

    def to_dict(self) -> dict:
        d = {
            "width": self.width, "height": self.height,
            "face_scale": list(self.face_scale), "face_aspect": list(self.face_aspect),
            "crop_weights": dict(self.crop_weights),
            "no_face_fraction": self.no_face_fraction, "seed": self.seed,
        }
        if self.photometric is not None:
            d["photometric"] = {
                "blur_prob": self.photometric.blur_prob,
                "blur_radius": list(self.photometric.blur_radius),
                "gamma_scale": self.photometric.gamma_scale,
            }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        photo = None
        if "photometric" in d:
            p = d["photometric"]
            photo = PhotometricConfig(blur_prob=p["blur_prob"],
                                      blur_radius=tuple(p["blur_radius"]),
                                      gamma_scale=p.get("gamma_scale", 1.0))
        return cls(width=d["width"], height=d["height"],
                   face_scale=tuple(d["face_scale"]), face_aspect=tuple(d["face_aspect"]),
                   crop_weights=dict(d["crop_weights"]), photometric=photo,
                   no_face_fraction=d["no_face_fraction"], seed=d["seed"])


@dataclass
class DetectorNoise:
    """Weak-detector corruption: per-segment misses, box jitter, false alarms."""

    miss: float = 0.0
    center_jitter: float = 0.0  # px, stdev
    scale_jitter: float = 0.0   # fraction, stdev
    fp_rate: float = 0.0        # mean false positives per image

    def __post_init__(self):
        if not 0.0 <= self.miss <= 1.0:
            raise ValueError("miss probability must be in [0, 1]")
        if self.center_jitter < 0 or self.scale_jitter < 0 or self.fp_rate < 0:
            raise ValueError("jitters and fp rate must be nonnegative")


@dataclass
class AnnotatedImage:
    """One image plus exact ground truth (gt None for no-face images)."""

    image_id: str
    pixels: np.ndarray | None
    gt: DruidGroundTruth | None

    @property
    def has_face(self) -> bool:
        return self.gt is not None

    @property
    def meta(self) -> ImageMeta:
        h, w = self.pixels.shape
        return ImageMeta(w, h)


def _draw_face(img: np.ndarray, face: BBox, catalog: SegmentCatalog,
               rng: np.random.Generator) -> None:
    h, w = img.shape
    ys, xs = np.mgrid[0:h, 0:w]
    ys = ys + 0.5
    xs = xs + 0.5
    cx, cy = face.center
    rx, ry = face.width / 2.0, face.height / 2.0
    tone = rng.uniform(0.65, 0.9)
    head = ((xs - cx) / rx) ** 2 + ((ys - cy) / ry) ** 2 <= 1.0
    img[head] = tone

    ep = segment_from_face("EP", face, catalog)
    eye_r = 0.22 * ep.height
    for fx in (0.25, 0.75):
        ex = ep.x1 + fx * ep.width
        ey = (ep.y1 + ep.y2) / 2.0
        eye = (xs - ex) ** 2 + (ys - ey) ** 2 <= eye_r ** 2
        img[eye] = tone * 0.25

    ns = segment_from_face("NS", face, catalog)
    nx = (ns.x1 + ns.x2) / 2.0
    frac = (ys - ns.y1) / max(ns.height, 1e-9)
    wedge = (ys >= ns.y1) & (ys <= ns.y2) & (np.abs(xs - nx) <= 0.5 * ns.width * frac)
    img[wedge] = tone * 0.6

    mouth = BBox(face.x1 + 0.30 * face.width, face.y1 + 0.78 * face.height,
                 face.x1 + 0.70 * face.width, face.y1 + 0.86 * face.height)
    bar = (xs >= mouth.x1) & (xs <= mouth.x2) & (ys >= mouth.y1) & (ys <= mouth.y2)
    img[bar] = tone * 0.35


def _draw_distractors(img: np.ndarray, rng: np.random.Generator) -> None:
    h, w = img.shape
    ys, xs = np.mgrid[0:h, 0:w]
    for _ in range(rng.integers(0, 4)):
        cx, cy = rng.uniform(0, w), rng.uniform(0, h)
        rx, ry = rng.uniform(0.05, 0.25) * w, rng.uniform(0.05, 0.25) * h
        blob = ((xs - cx) / rx) ** 2 + ((ys - cy) / ry) ** 2 <= 1.0
        img[blob] = rng.uniform(0.1, 0.9)


def _background(spec: SceneSpec, rng: np.random.Generator) -> np.ndarray:
    base = rng.uniform(0.25, 0.55)
    noise = gaussian_filter(rng.standard_normal((spec.height, spec.width)) * 0.1, 2.0)
    return np.clip(base + noise, 0.0, 1.0)


def _is_no_face(i: int, fraction: float) -> bool:
    # deterministic allocation: exactly floor(n * fraction) no-face images
    return math.floor((i + 1) * fraction) > math.floor(i * fraction)


def render_synthetic(spec: SceneSpec, n: int,
                     catalog: SegmentCatalog | None = None) -> list[AnnotatedImage]:
    """Deterministic corpus of n images; per-image seed is spec.seed ^ index."""
    catalog = catalog or SegmentCatalog.default()
    out = []
    for i in range(n):
        rng = np.random.default_rng(spec.seed ^ i)
        image_id = f"img_{i:06d}"
        img = _background(spec, rng)
        if _is_no_face(i, spec.no_face_fraction):
            _draw_distractors(img, rng)
            if spec.photometric is not None:
                img = photometric(img, spec.photometric, int(rng.integers(2 ** 62)))
            out.append(AnnotatedImage(image_id=image_id, pixels=img, gt=None))
            continue

        side = rng.uniform(*spec.face_scale) * min(spec.width, spec.height)
        aspect = rng.uniform(*spec.face_aspect)
        fw = min(side, spec.width - 2.0)
        fh = min(side * aspect, spec.height - 2.0)
        x1 = rng.uniform(1.0, spec.width - fw - 1.0)
        y1 = rng.uniform(1.0, spec.height - fh - 1.0)
        face = BBox(x1, y1, x1 + fw, y1 + fh)
        _draw_face(img, face, catalog, rng)
        gt = DruidGroundTruth.from_face(face, catalog)

        kinds = list(spec.crop_weights)
        weights = np.array([spec.crop_weights[k] for k in kinds], dtype=float)
        kind = kinds[rng.choice(len(kinds), p=weights / weights.sum())]
        if kind != "none" and kind in crop_plan(gt, ImageMeta(spec.width, spec.height), catalog):
            img, gt = apply_crop(img, gt, kind, catalog)
        if spec.photometric is not None:
            img = photometric(img, spec.photometric, int(rng.integers(2 ** 62)))
        out.append(AnnotatedImage(image_id=image_id, pixels=img, gt=gt))
    return out


def simulate_segment_detectors(ai: AnnotatedImage, noise: DetectorNoise, seed,
                               catalog: SegmentCatalog | None = None) -> list[SegmentDetection]:
    """Noisy detections over the active 9-segment set plus false positives."""
    catalog = catalog or SegmentCatalog.default()
    rng = np.random.default_rng(seed)
    img = ai.meta
    dets: list[SegmentDetection] = []
    if ai.gt is not None:
        for seg in PROPOSAL_SEGMENTS:
            if ai.gt.vis[seg] != 1:
                continue
            if rng.random() < noise.miss:
                continue
            box = ai.gt.boxes[seg]
            if noise.center_jitter > 0 or noise.scale_jitter > 0:
                dx, dy = rng.normal(0.0, max(noise.center_jitter, 1e-12), 2)
                s = max(0.2, 1.0 + rng.normal(0.0, max(noise.scale_jitter, 1e-12)))
                box = box.scale_about_center(s).translate(dx, dy)
            box = box.clip(img.width, img.height)
            if box.width <= 1e-9 or box.height <= 1e-9:
                continue
            dets.append(SegmentDetection.from_box(seg, box, img, catalog))
    for _ in range(rng.poisson(noise.fp_rate)):
        seg = PROPOSAL_SEGMENTS[rng.integers(len(PROPOSAL_SEGMENTS))]
        w = rng.uniform(0.08, 0.45) * img.width
        h = rng.uniform(0.08, 0.45) * img.height
        x1 = rng.uniform(0.0, img.width - w)
        y1 = rng.uniform(0.0, img.height - h)
        dets.append(SegmentDetection.from_box(seg, BBox(x1, y1, x1 + w, y1 + h),
                                              img, catalog))
    return dets


def _annotation_record(ai: AnnotatedImage) -> dict:
    h, w = ai.pixels.shape if ai.pixels is not None else (0, 0)
    rec = {"image_id": ai.image_id, "width": w, "height": h}
    if ai.gt is None:
        rec["face"] = None
        rec["segments"] = {}
    else:
        rec["face"] = list(ai.gt.face.as_tuple())
        rec["segments"] = {
            seg: {"box": list(ai.gt.boxes[seg].as_tuple()), "v": int(ai.gt.vis[seg])}
            for seg in SEGMENT_IDS
        }
    return rec


def _record_to_image(rec: dict, lineno: int) -> AnnotatedImage:
    for key in ("image_id", "width", "height", "face", "segments"):
        if key not in rec:
            raise ValueError(f"line {lineno}: missing {key!r} key")
    if rec["face"] is None:
        gt = None
    else:
        boxes = {seg: BBox(*entry["box"]) for seg, entry in rec["segments"].items()}
        vis = {seg: int(entry["v"]) for seg, entry in rec["segments"].items()}
        gt = DruidGroundTruth(face=BBox(*rec["face"]), boxes=boxes, vis=vis)
    return AnnotatedImage(image_id=rec["image_id"], pixels=None, gt=gt)


def write_annotations(path, images: list[AnnotatedImage]) -> None:
    """One JSON object per line; fixed key order for diff-stable files."""
    with open(path, "w", encoding="utf-8") as fh:
        for ai in images:
            fh.write(json.dumps(_annotation_record(ai), separators=(",", ":")) + "\n")


def read_annotations(path) -> list[AnnotatedImage]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"line {lineno}: invalid JSON ({exc})") from exc
            out.append(_record_to_image(rec, lineno))
    return out


def write_corpus(dirpath, images: list[AnnotatedImage], spec: SceneSpec | None = None) -> None:
    """Corpus directory layout: images/*.pgm + annotations.jsonl + spec.json."""
    os.makedirs(os.path.join(dirpath, "images"), exist_ok=True)
    for ai in images:
        write_pgm(os.path.join(dirpath, "images", f"{ai.image_id}.pgm"), ai.pixels)
    write_annotations(os.path.join(dirpath, "annotations.jsonl"), images)
    if spec is not None:
        with open(os.path.join(dirpath, "spec.json"), "w", encoding="utf-8") as fh:
            json.dump(spec.to_dict(), fh, indent=2, sort_keys=True)


def read_corpus(dirpath) -> list[AnnotatedImage]:
    images = read_annotations(os.path.join(dirpath, "annotations.jsonl"))
    for ai in images:
        ai.pixels = read_pgm(os.path.join(dirpath, "images", f"{ai.image_id}.pgm"))
    return images
