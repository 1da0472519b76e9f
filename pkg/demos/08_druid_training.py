#!/usr/bin/env python3
"""Proposal-free detection: train the DRUID-toy regression network on a
small augmented corpus and inspect its predictions.

Scaled down for a quick demo (a few minutes); the full recipe lives in the
acceptance suite.
"""

import logging

logging.basicConfig(level=logging.INFO, format="%(message)s")

import numpy as np

from faceseg.corpus import SceneSpec, render_synthetic
from faceseg.druid_model import TrainConfig, infer, train
from faceseg.evalkit import iou, roc_curve
from faceseg.pipeline import evaluate_druid

train_images = render_synthetic(SceneSpec(seed=100), 300)
model = train([(ai.pixels, ai.gt) for ai in train_images],
              TrainConfig(lr=3e-4, epochs=10, batch_size=32, seed=0))

held_out = render_synthetic(SceneSpec(seed=200), 120)
outcomes = evaluate_druid(held_out, model)
_, tar = roc_curve(outcomes)
faces = [o for o in outcomes if o.has_gt_face]
ious = [o.iou_with_gt for o in faces]
print(f"\nheld-out faces: mean IOU {np.mean(ious):.3f}, "
      f"IOU>=0.5 on {np.mean([i >= 0.5 for i in ious]):.1%}")
print(f"TAR@1%FAR (confidence = predicted face visibility): {tar:.3f}")

ai = next(a for a in held_out if a.has_face)
res = infer(ai.pixels, model)
print(f"\nsample image {ai.image_id}:")
print(f"  gt face   {tuple(round(v, 1) for v in ai.gt.face.as_tuple())}")
print(f"  predicted {tuple(round(v, 1) for v in res.face.as_tuple())} "
      f"confidence {res.confidence:.2f} "
      f"IOU {iou(res.face.clip(*ai.pixels.shape[::-1]), ai.gt.face.clip(*ai.pixels.shape[::-1])):.3f}")
print("  per-segment visibilities:")
for seg, (box, vis) in list(res.segments.items())[:6]:
    print(f"    {seg:>5}: v={vis:.2f} (gt {ai.gt.vis[seg]})")
