#!/usr/bin/env python3
"""Metric engine walkthrough: ROC with TAR@1%FAR, precision-recall with
recall@99% precision, and the proposal coverage upper bound."""

import numpy as np

from faceseg.evalkit import (
    ImageOutcome, coverage_at, coverage_upper_bound, iou, pr_curve, roc_curve,
)
from faceseg.geometry import BBox

print("iou((0,0,2,2),(1,1,3,3)) =", round(iou(BBox(0, 0, 2, 2), BBox(1, 1, 3, 3)), 4), "(1/7)")

# hand fixture: a matched detection, a badly placed one, a background alarm
outcomes = [
    ImageOutcome("hit", True, 0.9, 0.8),
    ImageOutcome("miss", True, 0.8, 0.2),
    ImageOutcome("bg", False, 0.7, None),
]
roc, tar = roc_curve(outcomes)
print("\nROC sweep (threshold, FAR, TAR):")
for p in roc.points:
    print("  ", p)
print("TAR@1%FAR =", round(tar, 3))

pr, recall99 = pr_curve(outcomes)
print("\nPR sweep (threshold, recall, precision):")
for p in pr.points:
    print("  ", p)
print("recall@99% precision =", recall99)

# coverage bound: fraction of faces any proposal covers at each overlap
rng = np.random.default_rng(0)
gts, props = [], []
for _ in range(200):
    gt = BBox(20, 20, 80, 80)
    gts.append(gt)
    props.append([BBox(20 + rng.normal(0, 4), 20 + rng.normal(0, 4),
                       80 + rng.normal(0, 4), 80 + rng.normal(0, 4))
                  for _ in range(rng.integers(1, 6))])
curve = coverage_upper_bound(props, gts, [0.3, 0.5, 0.7, 0.9])
print("\ncoverage curve (theta, coverage):")
for t, _, y in curve.points:
    print(f"  {t:.1f}: {y:.3f}")
print("any proposal-ranking detector's TAR is capped by coverage@0.5 =",
      round(coverage_at(curve, 0.5), 3))
