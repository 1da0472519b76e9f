"""Prior-probability statistics over labeled training proposals.

Four families of fractions: per segment, how often it appears in true-face
vs non-face proposals, and per proposal identity (the sorted multiset of
segment tags), how often that exact combination is a face vs not.  Assembled
into the 2M+2 feature vector and used to re-rank detector scores.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from faceseg.geometry import PROPOSAL_SEGMENTS
from faceseg.proposals import Proposal

logger = logging.getLogger(__name__)


def proposal_identity(p: Proposal) -> tuple[str, ...]:
    """Sorted segment-tag multiset identifying the combination (not geometry)."""
    return p.tags()


@dataclass
class PriorTable:
    """Fitted occurrence fractions; all values lie in [0, 1]."""

    segments: tuple[str, ...]
    seg_face: dict[str, float]
    seg_nonface: dict[str, float]
    identity_face: dict[tuple[str, ...], float] = field(default_factory=dict)
    identity_nonface: dict[tuple[str, ...], float] = field(default_factory=dict)

    @property
    def m(self) -> int:
        return len(self.segments)

    def feature_dim(self) -> int:
        return 2 * self.m + 2

    def to_json(self) -> str:
        def enc(d):
            return {"+".join(k): v for k, v in d.items()}

        return json.dumps({
            "segments": list(self.segments),
            "per_segment_face": dict(self.seg_face),
            "per_segment_nonface": dict(self.seg_nonface),
            "identity_face": enc(self.identity_face),
            "identity_nonface": enc(self.identity_nonface),
        }, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "PriorTable":
        raw = json.loads(text)

        def dec(d):
            return {tuple(k.split("+")): float(v) for k, v in d.items()}

        return cls(
            segments=tuple(raw["segments"]),
            seg_face={k: float(v) for k, v in raw["per_segment_face"].items()},
            seg_nonface={k: float(v) for k, v in raw["per_segment_nonface"].items()},
            identity_face=dec(raw["identity_face"]),
            identity_nonface=dec(raw["identity_nonface"]),
        )


def fit_priors(labeled: list[tuple[Proposal, bool]],
               segments: tuple[str, ...] = PROPOSAL_SEGMENTS) -> PriorTable:
    """Count occurrence fractions over face and non-face proposals.

    Requires at least one proposal of each label, otherwise the fractions
    are undefined.
    """
    faces = [p for p, y in labeled if y]
    nonfaces = [p for p, y in labeled if not y]
    if not faces or not nonfaces:
        raise ValueError("fit_priors needs at least one proposal of each label "
                         f"(got {len(faces)} face / {len(nonfaces)} non-face)")

    def seg_fraction(pool, seg):
        return sum(1 for p in pool if seg in set(p.tags())) / len(pool)

    def identity_fractions(pool):
        counts: dict[tuple[str, ...], int] = {}
        for p in pool:
            ident = proposal_identity(p)
            counts[ident] = counts.get(ident, 0) + 1
        return {ident: n / len(pool) for ident, n in counts.items()}

    return PriorTable(
        segments=tuple(segments),
        seg_face={s: seg_fraction(faces, s) for s in segments},
        seg_nonface={s: seg_fraction(nonfaces, s) for s in segments},
        identity_face=identity_fractions(faces),
        identity_nonface=identity_fractions(nonfaces),
    )


def prior_features(p: Proposal, table: PriorTable) -> np.ndarray:
    """The 2M+2 feature vector for one proposal.

    Per-segment entries are (face fraction, non-face fraction) pairs, zeroed
    for segments absent from the proposal; the final two entries are the
    identity-level fractions.  Unseen identities score zero there.
    """
    if not table.segments:
        raise ValueError("prior table is empty; fit it before extracting features")
    present = set(p.tags())
    vec = np.zeros(table.feature_dim())
    for i, seg in enumerate(table.segments):
        if seg in present:
            vec[2 * i] = table.seg_face[seg]
            vec[2 * i + 1] = table.seg_nonface[seg]
    ident = proposal_identity(p)
    if ident not in table.identity_face and ident not in table.identity_nonface:
        logger.debug("unseen proposal identity %s; identity features set to 0", ident)
    vec[-2] = table.identity_face.get(ident, 0.0)
    vec[-1] = table.identity_nonface.get(ident, 0.0)
    return vec


def rerank(prob: float, p: Proposal, table: PriorTable) -> float:
    """Final detection score: probability times the mean prior feature."""
    return prob * float(prior_features(p, table).mean())
