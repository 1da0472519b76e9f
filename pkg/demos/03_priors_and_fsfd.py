#!/usr/bin/env python3
"""Prior statistics and the FSFD classifier: fit occurrence fractions over
labeled proposals, inspect the 2M+2 feature vector, train and score."""

import numpy as np

from faceseg.corpus import DetectorNoise, SceneSpec, render_synthetic
from faceseg.evalkit import roc_curve
from faceseg.pipeline import (
    evaluate_proposal_detector, fit_priors_from_records, fsfd_score_fn,
    proposals_for_corpus, records_by_image, train_fsfd,
)
from faceseg.priors import prior_features
from faceseg.proposals import ProposalConfig

spec = SceneSpec(seed=11)
images = render_synthetic(spec, 200)
noise = DetectorNoise(miss=0.25, center_jitter=1.5, scale_jitter=0.01, fp_rate=2.5)
records = proposals_for_corpus(images, noise, ProposalConfig(r=25.6, seed=0), seed=1)
print(f"{len(records)} proposals, {sum(r.label for r in records)} labeled face")

table = fit_priors_from_records(records)
print("\nper-segment face / non-face fractions:")
for seg in table.segments:
    print(f"  {seg:>5}: {table.seg_face[seg]:.3f} / {table.seg_nonface[seg]:.3f}")

sample = records[0].proposal
vec = prior_features(sample, table)
print(f"\nfeature vector for {'+'.join(sample.tags())} (length {len(vec)}):")
print(" ", np.round(vec, 3))

model = train_fsfd(records, table, seed=0)
outcomes = evaluate_proposal_detector(images, records_by_image(records),
                                      fsfd_score_fn(table, model))
curve, tar = roc_curve(outcomes)
print(f"\nFSFD on its training corpus: TAR@1%FAR = {tar:.3f}")
