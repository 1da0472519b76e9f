import numpy as np
import pytest

from faceseg.augment import (
    CROP_KINDS,
    PhotometricConfig,
    apply_crop,
    crop_plan,
    negative_sample,
    photometric,
    recompute_visibility,
)
from faceseg.druid_loss import DruidGroundTruth
from faceseg.geometry import BBox, ImageMeta, SegmentCatalog, SEGMENT_IDS

CATALOG = SegmentCatalog.default()


def full_face_sample(img_w=160, img_h=160, face=(40, 40, 120, 120)):
    rng = np.random.default_rng(0)
    image = rng.uniform(0.2, 0.8, size=(img_h, img_w))
    gt = DruidGroundTruth.from_face(BBox(*face), CATALOG)
    return image, gt


def test_crop_plan_full_face_offers_all_seven():
    image, gt = full_face_sample()
    plan = crop_plan(gt, ImageMeta(*image.shape[::-1]), CATALOG)
    assert sorted(plan) == sorted(CROP_KINDS)


def test_crop_plan_left_half_only_flip():
    # an already left-half-visible face admits no further segment crops
    image, gt = full_face_sample()
    image2, gt2 = apply_crop(image, gt, "TO_L12", CATALOG)
    plan = crop_plan(gt2, ImageMeta(*image2.shape[::-1]), CATALOG)
    assert plan == ["FLIP"]


def test_crop_plan_no_visible_face_flip_only():
    image, _ = full_face_sample()
    gt = DruidGroundTruth.from_face(BBox(500, 500, 600, 600), CATALOG)
    gt.vis = recompute_visibility(gt, ImageMeta(160, 160), CATALOG)
    plan = crop_plan(gt, ImageMeta(160, 160), CATALOG)
    assert plan == ["FLIP"]


def test_to_l12_visible_set():
    image, gt = full_face_sample()
    _, gt2 = apply_crop(image, gt, "TO_L12", CATALOG)
    visible = {seg for seg in SEGMENT_IDS if gt2.vis[seg] == 1}
    assert visible == {"L12", "UL12"}
    assert gt2.v_f == pytest.approx(2 / 14)


def test_to_l34_implies_l12_and_ul12():
    image, gt = full_face_sample()
    _, gt2 = apply_crop(image, gt, "TO_L34", CATALOG)
    assert gt2.vis["L34"] == 1
    assert gt2.vis["L12"] == 1
    assert gt2.vis["UL12"] == 1


def test_containment_implication_closure_all_crops():
    image, gt = full_face_sample()
    for kind in CROP_KINDS:
        _, gt2 = apply_crop(image, gt, kind, CATALOG)
        for a in SEGMENT_IDS:
            for b in SEGMENT_IDS:
                if CATALOG[a].contains(CATALOG[b]) and gt2.vis[a] == 1:
                    assert gt2.vis[b] == 1, f"{kind}: {a} visible but contained {b} not"


def test_flip_is_involution_on_ground_truth():
    image, gt = full_face_sample(face=(30, 42, 111, 137))
    img1, gt1 = apply_crop(image, gt, "FLIP", CATALOG)
    img2, gt2 = apply_crop(img1, gt1, "FLIP", CATALOG)
    assert np.array_equal(img2, image)
    assert gt2.face == gt.face
    for seg in SEGMENT_IDS:
        assert gt2.boxes[seg] == gt.boxes[seg]
        assert gt2.vis[seg] == gt.vis[seg]


def test_flip_swaps_left_right_identities():
    image, gt = full_face_sample()
    gt.vis["R12"] = 0
    _, gt2 = apply_crop(image, gt, "FLIP", CATALOG)
    assert gt2.vis["L12"] == 0
    assert gt2.vis["R12"] == 1


def test_crop_ground_truth_keeps_druid_invariants():
    image, gt = full_face_sample()
    for kind in CROP_KINDS:
        _, gt2 = apply_crop(image, gt, kind, CATALOG)
        gt2.validate()
        assert gt2.v_f == pytest.approx(sum(gt2.vis.values()) / 14)


def test_inapplicable_crop_raises():
    image, gt = full_face_sample()
    image2, gt2 = apply_crop(image, gt, "TO_L12", CATALOG)
    with pytest.raises(ValueError):
        apply_crop(image2, gt2, "TO_L12", CATALOG)


def test_photometric_identity_cases():
    rng = np.random.default_rng(1)
    image = rng.uniform(0.0, 1.0, size=(32, 32))
    # blur probability zero and gamma scale zero leaves the image unchanged
    cfg = PhotometricConfig(blur_prob=0.0, gamma_scale=0.0)
    out = photometric(image, cfg, seed=5)
    assert np.allclose(out, image)


def test_photometric_gamma_darkens_with_positive_s():
    # s = 1 gives gamma 2: pixel 0.5 -> 0.25
    image = np.full((8, 8), 0.5)
    assert np.allclose(image ** (2.0 ** 1.0), 0.25)
    cfg = PhotometricConfig(blur_prob=0.0)
    for seed in range(10):
        rng = np.random.default_rng(seed)
        rng.random()  # the blur decision draw
        s = rng.standard_normal()
        out = photometric(image, cfg, seed=seed)
        if s > 0:
            assert out.mean() < 0.5
        else:
            assert out.mean() > 0.5


def test_photometric_stays_in_unit_range_and_deterministic():
    rng = np.random.default_rng(2)
    image = rng.uniform(0.0, 1.0, size=(40, 40))
    cfg = PhotometricConfig()
    a = photometric(image, cfg, seed=123)
    b = photometric(image, cfg, seed=123)
    assert np.array_equal(a, b)
    assert a.min() >= 0.0 and a.max() <= 1.0


def test_blur_radius_zero_is_identity():
    from faceseg.imageops import gaussian_blur
    rng = np.random.default_rng(3)
    image = rng.uniform(0, 1, size=(16, 16))
    assert np.array_equal(gaussian_blur(image, 0.0), image)


def test_negative_sample_disjoint_and_face_sized():
    image, gt = full_face_sample(img_w=400, img_h=160, face=(10, 20, 150, 140))
    box = negative_sample(image, gt, seed=7)
    assert box.width == pytest.approx(gt.face.width)
    assert box.height == pytest.approx(gt.face.height)
    assert box.x1 >= 0 and box.y1 >= 0 and box.x2 <= 400 and box.y2 <= 160
    ix = min(box.x2, gt.face.x2) - max(box.x1, gt.face.x1)
    iy = min(box.y2, gt.face.y2) - max(box.y1, gt.face.y1)
    assert ix <= 0 or iy <= 0


def test_negative_sample_impossible_when_face_fills_image():
    image, gt = full_face_sample(img_w=100, img_h=100, face=(0, 0, 100, 100))
    with pytest.raises(ValueError):
        negative_sample(image, gt, seed=0)
