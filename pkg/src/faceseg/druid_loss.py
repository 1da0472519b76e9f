"""Regression loss suite for segment-aware face localization.

Nine per-branch terms combine into the training objective: squared box and
visibility errors, coordinate-ordering penalties, containment hinges against
the full-face box, and an overlap term.  Every term is gated by the relevant
ground-truth visibility, so occluded segments contribute nothing through the
gated terms.  ``literal`` mode evaluates the indicator forms; ``smooth`` mode
replaces bare indicators with squared hinges and is the differentiable
training surface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from faceseg.geometry import BBox, SegmentCatalog, SEGMENT_IDS, segment_from_face

TERMS = ("b", "v", "x", "y", "x1", "x2", "y1", "y2", "O")

FACE_BRANCH = "F"


@dataclass
class LossWeights:
    """Per-term weights; the composite loss is the weighted sum of terms."""

    b: float = 1.0
    v: float = 1.0
    x: float = 1.0
    y: float = 1.0
    x1: float = 1.0
    x2: float = 1.0
    y1: float = 1.0
    y2: float = 1.0
    O: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"loss weight {f.name} must be >= 0")

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def to_config(self) -> dict[str, float]:
        return {f"lambda_{k}": v for k, v in self.as_dict().items()}

    @classmethod
    def from_config(cls, cfg: dict) -> "LossWeights":
        kwargs = {k[len("lambda_"):]: float(v) for k, v in cfg.items()
                  if k.startswith("lambda_")}
        return cls(**kwargs)


@dataclass
class DruidGroundTruth:
    """Ground truth for one sample: face box, 14 segment boxes, visibilities.

    The face box is the full geometric extent and may reach outside the image
    after occlusion crops; visibilities mark which segments remain fully
    inside the visible part.
    """

    face: BBox
    boxes: dict[str, BBox]
    vis: dict[str, int]

    @classmethod
    def from_face(cls, face: BBox, catalog: SegmentCatalog) -> "DruidGroundTruth":
        """Fully visible ground truth derived from a face box."""
        boxes = {seg: segment_from_face(seg, face, catalog) for seg in SEGMENT_IDS}
        return cls(face=face, boxes=boxes, vis={seg: 1 for seg in SEGMENT_IDS})

    @property
    def v_f(self) -> float:
        return face_visibility(self.vis)

    def seg_box_array(self) -> np.ndarray:
        return np.array([self.boxes[s].as_tuple() for s in SEGMENT_IDS])

    def vis_array(self) -> np.ndarray:
        return np.array([float(self.vis[s]) for s in SEGMENT_IDS])

    def validate(self, tol: float = 1e-9) -> "DruidGroundTruth":
        self.face.validate()
        if set(self.boxes) != set(SEGMENT_IDS) or set(self.vis) != set(SEGMENT_IDS):
            raise ValueError("ground truth must cover all 14 segments")
        for seg in SEGMENT_IDS:
            if self.vis[seg] not in (0, 1):
                raise ValueError(f"visibility for {seg} must be 0 or 1")
            box = self.boxes[seg].validate()
            if self.vis[seg] == 1:
                inside = (box.x1 >= self.face.x1 - tol and box.y1 >= self.face.y1 - tol
                          and box.x2 <= self.face.x2 + tol and box.y2 <= self.face.y2 + tol)
                if not inside:
                    raise ValueError(f"visible segment {seg} not inside face box")
        return self


def face_visibility(vis) -> float:
    """Mean visibility over the 14 segments (the face confidence target)."""
    if isinstance(vis, dict):
        values = [vis[s] for s in SEGMENT_IDS]
    else:
        values = list(np.asarray(vis, dtype=float).ravel())
    if len(values) != len(SEGMENT_IDS):
        raise ValueError(f"expected {len(SEGMENT_IDS)} visibilities, got {len(values)}")
    if any(v not in (0, 0.0, 1, 1.0) for v in values):
        raise ValueError("segment visibilities must be binary")
    return float(sum(values)) / len(values)


def _iou_and_grad(P: np.ndarray, G: np.ndarray, want_grad: bool):
    """Vectorized IOU of predicted boxes against valid target boxes.

    Widths are clamped at zero so inverted predictions behave like empty
    boxes; at min/max ties the zero subgradient is chosen.
    """
    pw = np.maximum(0.0, P[:, 2] - P[:, 0])
    ph = np.maximum(0.0, P[:, 3] - P[:, 1])
    gw = G[:, 2] - G[:, 0]
    gh = G[:, 3] - G[:, 1]
    ap = pw * ph
    ag = gw * gh
    iw = np.maximum(0.0, np.minimum(P[:, 2], G[:, 2]) - np.maximum(P[:, 0], G[:, 0]))
    ih = np.maximum(0.0, np.minimum(P[:, 3], G[:, 3]) - np.maximum(P[:, 1], G[:, 1]))
    ai = iw * ih
    union = ap + ag - ai
    pos = union > 0
    iou = np.where(pos, ai / np.where(pos, union, 1.0), 0.0)
    if not want_grad:
        return iou, None

    live_w = (pw > 0).astype(float)
    live_h = (ph > 0).astype(float)
    dap = np.stack([-ph * live_w, -pw * live_h, ph * live_w, pw * live_h], axis=1)
    ilive = (iw > 0) & (ih > 0)
    dai = np.stack([
        -ih * ((P[:, 0] > G[:, 0]) & ilive),
        -iw * ((P[:, 1] > G[:, 1]) & ilive),
        ih * ((P[:, 2] < G[:, 2]) & ilive),
        iw * ((P[:, 3] < G[:, 3]) & ilive),
    ], axis=1)
    dunion = dap - dai
    denom = np.where(pos, union * union, 1.0)
    diou = np.where(pos[:, None], (dai * union[:, None] - ai[:, None] * dunion) / denom[:, None], 0.0)
    return iou, diou


def _family_terms(P, pv, G, tv, gate, C, mode, printed_overlap_indicator):
    """Evaluate the nine terms for K parallel branches.

    P (K,4)/pv (K,) are predictions, G (K,4)/tv (K,) targets, gate (K,) the
    gating visibility, C (4,) the containing face box.  Returns a dict of
    term name -> (K,) array.
    """
    P = np.asarray(P, dtype=float)
    g2 = gate * gate
    terms = {}

    diff = P - G
    terms["b"] = np.sum(diff * diff, axis=1)
    terms["v"] = (pv - tv) ** 2

    sx = P[:, 0] - P[:, 2]
    sy = P[:, 1] - P[:, 3]
    if mode == "literal":
        terms["x"] = g2 * (sx > 0)
        terms["y"] = g2 * (sy > 0)
    else:
        hx = np.maximum(0.0, sx)
        hy = np.maximum(0.0, sy)
        terms["x"] = g2 * hx * hx
        terms["y"] = g2 * hy * hy

    hx1 = np.maximum(0.0, C[0] - P[:, 0])
    hx2 = np.maximum(0.0, P[:, 2] - C[2])
    hy1 = np.maximum(0.0, C[1] - P[:, 1])
    hy2 = np.maximum(0.0, P[:, 3] - C[3])
    terms["x1"] = g2 * hx1 * hx1
    terms["x2"] = g2 * hx2 * hx2
    terms["y1"] = g2 * hy1 * hy1
    terms["y2"] = g2 * hy2 * hy2

    gated = (gate != 0).astype(float)
    if printed_overlap_indicator:
        # The printed indicator 1[IOU <= 0] zeroes the IOU contribution, so
        # the term collapses to the visibility gate alone.
        terms["O"] = gated
    else:
        iou, _ = _iou_and_grad(P, G, False)
        terms["O"] = ((1.0 - iou) * gated) ** 2
    return terms


def _weighted_family_grad(P, pv, G, tv, gate, C, weights):
    """Gradient of the weighted term sum; splits the hinge weights per term."""
    K = np.asarray(P).shape[0]
    dP = np.zeros((K, 4))
    dpv = np.zeros(K)
    P = np.asarray(P, dtype=float)
    g2 = gate * gate

    dP += weights.b * 2.0 * (P - G)
    dpv += weights.v * 2.0 * (pv - tv)

    hx = np.maximum(0.0, P[:, 0] - P[:, 2])
    hy = np.maximum(0.0, P[:, 1] - P[:, 3])
    dP[:, 0] += weights.x * 2.0 * g2 * hx
    dP[:, 2] -= weights.x * 2.0 * g2 * hx
    dP[:, 1] += weights.y * 2.0 * g2 * hy
    dP[:, 3] -= weights.y * 2.0 * g2 * hy

    hx1 = np.maximum(0.0, C[0] - P[:, 0])
    hx2 = np.maximum(0.0, P[:, 2] - C[2])
    hy1 = np.maximum(0.0, C[1] - P[:, 1])
    hy2 = np.maximum(0.0, P[:, 3] - C[3])
    dP[:, 0] -= weights.x1 * 2.0 * g2 * hx1
    dP[:, 2] += weights.x2 * 2.0 * g2 * hx2
    dP[:, 1] -= weights.y1 * 2.0 * g2 * hy1
    dP[:, 3] += weights.y2 * 2.0 * g2 * hy2

    gated = (gate != 0).astype(float)
    iou, diou = _iou_and_grad(P, G, True)
    dP += weights.O * (-2.0 * (1.0 - iou) * gated)[:, None] * diou
    return dP, dpv


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite values in loss inputs")


@dataclass
class LossBreakdown:
    """Per-branch, per-term loss values plus the weighted total."""

    branches: dict[str, dict[str, dict[str, float]]] = field(default_factory=dict)
    total: float = 0.0

    def term_sum(self, term: str) -> float:
        return sum(fam[term] for branch in self.branches.values() for fam in branch.values())


def _gt_arrays(gt: DruidGroundTruth):
    face = np.array(gt.face.as_tuple(), dtype=float)
    return face, gt.seg_box_array(), gt.vis_array(), gt.v_f


def loss_terms(pred, gt: DruidGroundTruth, branch: str, mode: str = "smooth",
               printed_overlap_indicator: bool = False) -> LossBreakdown:
    """Term values for a single branch output.

    ``pred`` is the 10-value output of a segment branch (own box, own
    visibility, face-box estimate, face visibility estimate) or the 5-value
    face-head output when ``branch == "F"``.
    """
    if mode not in ("literal", "smooth"):
        raise ValueError(f"unknown mode {mode!r}")
    pred = np.asarray(pred, dtype=float)
    _check_finite(pred)
    face, seg_boxes, vis, v_f = _gt_arrays(gt)
    out = LossBreakdown()

    def fam(P, pv, G, tv, gate):
        terms = _family_terms(P[None], np.array([pv]), G[None], np.array([tv]),
                              np.array([gate]), face, mode, printed_overlap_indicator)
        return {k: float(v[0]) for k, v in terms.items()}

    if branch == FACE_BRANCH:
        if pred.shape != (5,):
            raise ValueError("face head output must have 5 values")
        out.branches[FACE_BRANCH] = {"face": fam(pred[:4], pred[4], face, v_f, v_f)}
    else:
        idx = SEGMENT_IDS.index(branch)
        if pred.shape != (10,):
            raise ValueError("segment branch output must have 10 values")
        out.branches[branch] = {
            "own": fam(pred[:4], pred[4], seg_boxes[idx], vis[idx], vis[idx]),
            "face": fam(pred[5:9], pred[9], face, v_f, v_f),
        }
    out.total = _breakdown_total(out, LossWeights())
    return out


def _breakdown_total(bd: LossBreakdown, weights: LossWeights) -> float:
    w = weights.as_dict()
    return float(sum(w[t] * fam[t] for branch in bd.branches.values()
                     for fam in branch.values() for t in TERMS))


def total_loss(seg_preds, face_pred, gt: DruidGroundTruth,
               weights: LossWeights | None = None, mode: str = "smooth",
               printed_overlap_indicator: bool = False,
               return_breakdown: bool = False):
    """Composite loss over all 15 branches.

    Each segment branch contributes its own-box family and its auxiliary
    face-estimate family; the face head contributes the face family computed
    on its 5 outputs.
    """
    if mode not in ("literal", "smooth"):
        raise ValueError(f"unknown mode {mode!r}")
    weights = weights or LossWeights()
    seg_preds = np.asarray(seg_preds, dtype=float)
    face_pred = np.asarray(face_pred, dtype=float)
    if seg_preds.shape != (14, 10) or face_pred.shape != (5,):
        raise ValueError("expected 14x10 segment outputs and a 5-value face output")
    _check_finite(seg_preds, face_pred)
    face, seg_boxes, vis, v_f = _gt_arrays(gt)
    vf14 = np.full(14, v_f)
    face14 = np.tile(face, (14, 1))

    own = _family_terms(seg_preds[:, :4], seg_preds[:, 4], seg_boxes, vis, vis,
                        face, mode, printed_overlap_indicator)
    aux = _family_terms(seg_preds[:, 5:9], seg_preds[:, 9], face14, vf14, vf14,
                        face, mode, printed_overlap_indicator)
    fh = _family_terms(face_pred[None, :4], face_pred[4:5], face[None],
                       np.array([v_f]), np.array([v_f]), face, mode,
                       printed_overlap_indicator)

    w = weights.as_dict()
    total = float(sum(w[t] * (own[t].sum() + aux[t].sum() + fh[t][0]) for t in TERMS))
    if not return_breakdown:
        return total
    bd = LossBreakdown(total=total)
    for i, seg in enumerate(SEGMENT_IDS):
        bd.branches[seg] = {
            "own": {t: float(own[t][i]) for t in TERMS},
            "face": {t: float(aux[t][i]) for t in TERMS},
        }
    bd.branches[FACE_BRANCH] = {"face": {t: float(fh[t][0]) for t in TERMS}}
    return total, bd


def loss_grad(seg_preds, face_pred, gt: DruidGroundTruth,
              weights: LossWeights | None = None,
              mode: str = "smooth") -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient of ``total_loss`` with respect to every prediction.

    Only the smooth surrogate is differentiable; literal indicators have zero
    gradient almost everywhere and are rejected.
    """
    if mode != "smooth":
        raise ValueError("gradients are defined for smooth mode only; "
                         "literal indicators are flat almost everywhere")
    weights = weights or LossWeights()
    seg_preds = np.asarray(seg_preds, dtype=float)
    face_pred = np.asarray(face_pred, dtype=float)
    if seg_preds.shape != (14, 10) or face_pred.shape != (5,):
        raise ValueError("expected 14x10 segment outputs and a 5-value face output")
    _check_finite(seg_preds, face_pred)
    face, seg_boxes, vis, v_f = _gt_arrays(gt)
    vf14 = np.full(14, v_f)
    face14 = np.tile(face, (14, 1))

    dseg = np.zeros((14, 10))
    dP, dpv = _weighted_family_grad(seg_preds[:, :4], seg_preds[:, 4], seg_boxes, vis,
                                    vis, face, weights)
    dseg[:, :4] = dP
    dseg[:, 4] = dpv
    dP, dpv = _weighted_family_grad(seg_preds[:, 5:9], seg_preds[:, 9], face14, vf14,
                                    vf14, face, weights)
    dseg[:, 5:9] = dP
    dseg[:, 9] = dpv

    dface = np.zeros(5)
    dP, dpv = _weighted_family_grad(face_pred[None, :4], face_pred[4:5], face[None],
                                    np.array([v_f]), np.array([v_f]), face, weights)
    dface[:4] = dP[0]
    dface[4] = dpv[0]
    return dseg, dface
