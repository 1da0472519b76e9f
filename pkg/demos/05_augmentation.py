#!/usr/bin/env python3
"""Augmentation walkthrough: crop plan, visibility recomputation after each
partial-visibility crop, flip involution, photometric jitter, negatives."""

import numpy as np

from faceseg.augment import (
    CROP_KINDS, PhotometricConfig, apply_crop, crop_plan, negative_sample, photometric,
)
from faceseg.corpus import SceneSpec, render_synthetic
from faceseg.geometry import ImageMeta, SEGMENT_IDS

spec = SceneSpec(seed=3, no_face_fraction=0.0, crop_weights={"none": 1.0}, photometric=None)
ai = render_synthetic(spec, 1)[0]
img, gt = ai.pixels, ai.gt

plan = crop_plan(gt, ImageMeta(*img.shape[::-1]))
print("applicable ops for a fully visible face:", plan)

print("\nvisible segments after each crop (v_F in parentheses):")
for kind in CROP_KINDS:
    _, gt2 = apply_crop(img, gt, kind)
    visible = [s for s in SEGMENT_IDS if gt2.vis[s] == 1]
    print(f"  {kind:>7}: ({gt2.v_f:.3f}) {' '.join(visible)}")

img_l, gt_l = apply_crop(img, gt, "TO_L12")
print("\nafter TO_L12 the plan shrinks to:", crop_plan(gt_l, ImageMeta(*img_l.shape[::-1])))

f1, g1 = apply_crop(img, gt, "FLIP")
f2, g2 = apply_crop(f1, g1, "FLIP")
err = max(abs(a - b) for s in SEGMENT_IDS
          for a, b in zip(g2.boxes[s].as_tuple(), gt.boxes[s].as_tuple()))
print(f"flip twice restores ground truth (max coordinate error {err:.1e})")

out = photometric(img, PhotometricConfig(), seed=5)
print(f"\nphotometric: input range [{img.min():.2f}, {img.max():.2f}] -> "
      f"[{out.min():.2f}, {out.max():.2f}]")

neg = negative_sample(img, gt, seed=9)
print(f"negative sample {tuple(round(v, 1) for v in neg.as_tuple())} "
      f"(face-sized, zero overlap with the face)")
