#!/usr/bin/env python3
"""Proposal generation walkthrough: simulate weak segment detectors on one
synthetic image, cluster by estimated face center, and enumerate subsets."""

from faceseg.corpus import DetectorNoise, SceneSpec, render_synthetic, simulate_segment_detectors
from faceseg.evalkit import iou
from faceseg.proposals import ProposalConfig, cluster_detections, generate_proposals

spec = SceneSpec(seed=7, no_face_fraction=0.0, crop_weights={"none": 1.0}, photometric=None)
ai = render_synthetic(spec, 1)[0]
print(f"image {ai.image_id}: face at {tuple(round(v, 1) for v in ai.gt.face.as_tuple())}")

noise = DetectorNoise(miss=0.2, center_jitter=2.0, scale_jitter=0.02, fp_rate=2.0)
dets = simulate_segment_detectors(ai, noise, seed=3)
print(f"\nsimulated detections ({len(dets)}):")
for d in dets:
    print(f"  {d.seg:>5} box={tuple(round(v, 1) for v in d.box.as_tuple())} "
          f"est_center={tuple(round(v, 1) for v in d.est_center)}")

cfg = ProposalConfig(r=0.2 * 128, c=2, zeta=10, seed=0)
clusters = cluster_detections(dets, cfg)
print(f"\nclusters (r={cfg.r:.1f}px): sizes {[len(c.members) for c in clusters]}")

proposals = generate_proposals(dets, cfg)
print(f"\nproposals (c={cfg.c}, zeta={cfg.zeta}): {len(proposals)}")
gt_clipped = ai.gt.face.clip(*ai.pixels.shape[::-1])
for ci, p in proposals[:8]:
    print(f"  cluster {ci}: {'+'.join(p.tags()):<28} IOU vs face = "
          f"{iou(p.bbox, gt_clipped):.3f}")
