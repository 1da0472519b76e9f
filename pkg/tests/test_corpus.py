import json
import time

import numpy as np
import pytest

from faceseg.corpus import (
    AnnotatedImage,
    DetectorNoise,
    SceneSpec,
    read_annotations,
    read_corpus,
    render_synthetic,
    simulate_segment_detectors,
    write_annotations,
    write_corpus,
)
from faceseg.geometry import BBox, SegmentCatalog, SEGMENT_IDS, PROPOSAL_SEGMENTS, segment_from_face
from faceseg.proposals import ProposalConfig, cluster_detections, proposal_bbox
from faceseg.evalkit import iou

CATALOG = SegmentCatalog.default()


def small_spec(**kw):
    defaults = dict(width=96, height=96, seed=11, photometric=None)
    defaults.update(kw)
    return SceneSpec(**defaults)


def test_determinism_bitwise():
    spec = SceneSpec(seed=5)
    a = render_synthetic(spec, 12)
    b = render_synthetic(spec, 12)
    for x, y in zip(a, b):
        assert x.image_id == y.image_id
        assert np.array_equal(x.pixels, y.pixels)
        assert (x.gt is None) == (y.gt is None)
        if x.gt is not None:
            assert x.gt.face == y.gt.face


def test_visible_segments_match_forward_mapping():
    images = render_synthetic(small_spec(), 30)
    for ai in images:
        if ai.gt is None:
            continue
        for seg in SEGMENT_IDS:
            want = segment_from_face(seg, ai.gt.face, CATALOG)
            got = ai.gt.boxes[seg]
            for a, b in zip(got.as_tuple(), want.as_tuple()):
                assert a == pytest.approx(b, abs=1e-9)


def test_no_face_allocation_deterministic():
    spec = small_spec(no_face_fraction=0.2)
    images = render_synthetic(spec, 1000)
    assert sum(1 for ai in images if not ai.has_face) == 200
    images = render_synthetic(small_spec(no_face_fraction=0.0), 50)
    assert all(ai.has_face for ai in images)


def test_crop_closure_holds_in_rendered_gt():
    spec = small_spec(crop_weights={"none": 0.2, "TO_L12": 0.2, "TO_U34": 0.2,
                                    "TO_R34": 0.2, "FLIP": 0.2})
    for ai in render_synthetic(spec, 40):
        if ai.gt is None:
            continue
        for a in SEGMENT_IDS:
            for b in SEGMENT_IDS:
                if CATALOG[a].contains(CATALOG[b]) and ai.gt.vis[a] == 1:
                    assert ai.gt.vis[b] == 1


def test_zero_noise_detections_equal_ground_truth():
    images = render_synthetic(small_spec(crop_weights={"none": 1.0}), 10)
    for ai in images:
        dets = simulate_segment_detectors(ai, DetectorNoise(), seed=3)
        if ai.gt is None:
            assert dets == []
            continue
        assert len(dets) == len(PROPOSAL_SEGMENTS)
        for d in dets:
            assert d.box == ai.gt.boxes[d.seg]


def test_miss_probability_one_empties():
    images = render_synthetic(small_spec(), 5)
    for ai in images:
        assert simulate_segment_detectors(ai, DetectorNoise(miss=1.0), seed=3) == []


def test_jitter_replay_is_deterministic():
    ai = render_synthetic(small_spec(crop_weights={"none": 1.0}), 3)[0]
    noise = DetectorNoise(miss=0.2, center_jitter=2.0, scale_jitter=0.05, fp_rate=1.5)
    a = simulate_segment_detectors(ai, noise, seed=77)
    b = simulate_segment_detectors(ai, noise, seed=77)
    assert [d.key() for d in a] == [d.key() for d in b]
    c = simulate_segment_detectors(ai, noise, seed=78)
    assert [d.key() for d in a] != [d.key() for d in c]


def test_zero_noise_cluster_covers_face():
    images = render_synthetic(small_spec(crop_weights={"none": 1.0},
                                         no_face_fraction=0.0), 15)
    for ai in images:
        dets = simulate_segment_detectors(ai, DetectorNoise(), seed=1)
        clusters = cluster_detections(dets, ProposalConfig(r=20.0))
        assert len(clusters) == 1
        box = proposal_bbox(clusters[0].members)
        gt_clipped = ai.gt.face.clip(*ai.pixels.shape[::-1])
        assert iou(box, gt_clipped) >= 0.99


def test_annotation_round_trip(tmp_path):
    images = render_synthetic(small_spec(), 20)
    path = tmp_path / "annotations.jsonl"
    write_annotations(path, images)
    again = read_annotations(path)
    assert len(again) == len(images)
    for x, y in zip(images, again):
        assert x.image_id == y.image_id
        assert (x.gt is None) == (y.gt is None)
        if x.gt is not None:
            assert x.gt.face == y.gt.face
            assert x.gt.vis == y.gt.vis
            assert x.gt.boxes == y.gt.boxes


def test_annotation_errors_name_the_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"image_id":"a","width":8,"height":8,"face":null,"segments":{}}\n'
                    '{"image_id":"b","width":8,"height":8,"segments":{}}\n')
    with pytest.raises(ValueError, match="line 2"):
        read_annotations(path)
    path.write_text("not json\n")
    with pytest.raises(ValueError, match="line 1"):
        read_annotations(path)


def test_empty_annotation_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    assert read_annotations(path) == []


def test_corpus_directory_round_trip(tmp_path):
    spec = small_spec()
    images = render_synthetic(spec, 8)
    write_corpus(tmp_path / "corpus", images, spec)
    again = read_corpus(tmp_path / "corpus")
    assert (tmp_path / "corpus" / "spec.json").exists()
    for x, y in zip(images, again):
        assert x.image_id == y.image_id
        # PGM quantizes to 8 bits
        assert np.max(np.abs(x.pixels - y.pixels)) <= 1 / 255 + 1e-12


def test_scene_spec_round_trip():
    spec = SceneSpec(seed=9, no_face_fraction=0.3)
    again = SceneSpec.from_dict(json.loads(json.dumps(spec.to_dict())))
    assert again.to_dict() == spec.to_dict()


def test_generation_rate_floor():
    spec = SceneSpec(seed=2)
    render_synthetic(spec, 5)  # warm up
    start = time.perf_counter()
    render_synthetic(spec, 200)
    rate = 200 / (time.perf_counter() - start)
    assert rate >= 100, f"generation rate {rate:.0f} images/s below floor"
