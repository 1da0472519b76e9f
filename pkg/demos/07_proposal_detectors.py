#!/usr/bin/env python3
"""Small end-to-end run of the three proposal classifiers on a synthetic
corpus: FSFD (priors only), SegFace (gradient histograms + priors), and the
multi-column DeepSegFace-toy with prior re-ranking.

Scaled down for a quick demo; expect a couple of minutes.
"""

import logging

logging.basicConfig(level=logging.INFO, format="%(message)s")

from faceseg.corpus import DetectorNoise, SceneSpec, render_synthetic
from faceseg.evalkit import coverage_at, roc_curve
from faceseg.pipeline import (
    DsfTrainConfig, coverage_from_records, dsf_score_fn, evaluate_proposal_detector,
    fit_priors_from_records, fsfd_score_fn, proposals_for_corpus, records_by_image,
    segface_score_fn, train_deepsegface, train_fsfd, train_segface,
)
from faceseg.proposals import ProposalConfig

images = render_synthetic(SceneSpec(seed=42), 400)
noise = DetectorNoise(miss=0.3, center_jitter=2.0, scale_jitter=0.01, fp_rate=3.0)
records = proposals_for_corpus(images, noise, ProposalConfig(r=25.6, seed=0), seed=7)
train_imgs, test_imgs = images[:280], images[280:]
train_ids = {a.image_id for a in train_imgs}
train_recs = [r for r in records if r.image_id in train_ids]
test_recs = [r for r in records if r.image_id not in train_ids]
print(f"{len(records)} proposals ({len(records) / len(images):.1f} per image)")

table = fit_priors_from_records(train_recs)
by_id = {a.image_id: a for a in images}

fsfd = train_fsfd(train_recs, table, seed=0)
bank, master = train_segface(train_recs[:1500], by_id, table, epochs=20, seed=0)
dsf = train_deepsegface(train_recs, by_id, DsfTrainConfig(epochs=4, max_proposals=2500, seed=1))

per_image = records_by_image(test_recs)
for name, fn in [("FSFD", fsfd_score_fn(table, fsfd)),
                 ("SegFace", segface_score_fn(bank, master, table)),
                 ("DeepSegFace-toy (reranked)", dsf_score_fn(dsf, table))]:
    outcomes = evaluate_proposal_detector(test_imgs, per_image, fn)
    _, tar = roc_curve(outcomes)
    print(f"{name:>28}: TAR@1%FAR = {tar:.3f}")

cov = coverage_from_records(test_imgs, per_image, [0.5])
print(f"{'proposal coverage bound':>28}: {coverage_at(cov, 0.5):.3f} at 50% overlap")
