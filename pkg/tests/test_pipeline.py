import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from simtext import geometry as geo
from simtext.errors import ParameterError
from simtext.pipeline import (Annotation, Detection, ReconstructConfig, generate_offset_label,
                              generate_similar_label, reconstruct)
from simtext.raster import connected_components, rasterize, region_score
from simtext.synth import random_quad

SQUARE = np.array([(0, 0), (10, 0), (10, 10), (0, 10)], float)


def test_annotation_sentinel():
    assert Annotation.from_text(SQUARE, "###").ignore
    assert not Annotation.from_text(SQUARE, "hello").ignore


def test_detection_score_range():
    with pytest.raises(ParameterError):
        Detection(SQUARE, 1.5)


def test_similar_label_square():
    gt, ignore, skipped = generate_similar_label([Annotation(SQUARE, "a")], 0.6, 20, 20)
    np.testing.assert_array_equal(gt, rasterize([(2, 2), (8, 2), (8, 8), (2, 8)], 20, 20))
    assert gt.sum() == 36 and not ignore.any() and skipped == 0


def test_similar_label_ignore_and_union():
    anns = [Annotation.from_text(SQUARE, "###"), Annotation(SQUARE + 20, "b"), Annotation(SQUARE + (0, 20), "c")]
    gt, ignore, _ = generate_similar_label(anns, 0.6, 40, 40)
    np.testing.assert_array_equal(ignore, rasterize(SQUARE, 40, 40))
    assert not (gt & ignore).any()
    assert connected_components(gt).count == 2


def test_similar_label_skips_degenerate():
    anns = [Annotation([(0, 0), (5, 5), (10, 10)], "flat"), Annotation(SQUARE, "ok")]
    res = generate_similar_label(anns, 0.6, 20, 20)
    assert res.skipped == 1 and res.gt.sum() == 36


def test_offset_label_examples():
    gt, _, skipped = generate_offset_label([Annotation(SQUARE, "a")], 0.4, 20, 20)
    # inward offset by 2.1 -> [2.1, 7.9]^2, pixel centers 2.5..7.5
    np.testing.assert_array_equal(gt, rasterize([(2.1, 2.1), (7.9, 2.1), (7.9, 7.9), (2.1, 7.9)], 20, 20))
    assert gt.sum() == 36 and skipped == 0
    gt, _, _ = generate_offset_label([Annotation(SQUARE, "a")], 1.0, 20, 20)
    np.testing.assert_array_equal(gt, rasterize(SQUARE, 20, 20))


def test_offset_label_skips_collapsed():
    # 1 px square whose inward offset covers no pixel center
    tiny = np.array([(0.6, 0.6), (1.6, 0.6), (1.6, 1.6), (0.6, 1.6)])
    res = generate_offset_label([Annotation(tiny, "t"), Annotation(SQUARE + 5, "ok")], 0.4, 20, 20)
    assert res.skipped == 1 and res.gt.any()


def test_reconstruct_square_round_trip():
    gt, _, _ = generate_similar_label([Annotation(SQUARE, "a")], 0.6, 20, 20)
    dets, timing = reconstruct(gt.astype(float), ReconstructConfig(delta=0.6))
    assert len(dets) == 1
    assert geo.polygon_iou(dets[0].polygon, SQUARE) >= 0.9
    assert dets[0].score == 1.0
    assert timing.instances == 1 and timing.expand_us >= 0 and len(timing.expand_samples) == 1


def test_reconstruct_empty_and_min_area():
    dets, timing = reconstruct(np.zeros((16, 16)))
    assert dets == [] and timing.instances == 0
    m = np.zeros((16, 16))
    m[4, 4:7] = 1.0
    assert reconstruct(m, ReconstructConfig(min_area=10))[0] == []


def test_reconstruct_score_filter_and_order():
    m = np.zeros((40, 40))
    m[2:10, 2:10] = 0.6
    m[20:30, 20:30] = 0.9
    m[2:10, 25:35] = 0.4  # above binarization, below score threshold
    dets, _ = reconstruct(m, ReconstructConfig())
    assert [round(d.score, 6) for d in dets] == [0.9, 0.6]


def test_reconstruct_clips_to_canvas():
    m = np.zeros((20, 20))
    m[0:8, 0:8] = 1.0
    dets, _ = reconstruct(m, ReconstructConfig(delta=0.5))
    p = dets[0].polygon
    assert p.min() >= 0 and p[:, 0].max() <= 20 and p[:, 1].max() <= 20


@pytest.mark.parametrize("method", ["similar", "offset"])
def test_reconstruct_deterministic(method):
    rng = np.random.default_rng(5)
    m = rng.random((48, 48)) ** 3
    a, _ = reconstruct(m, ReconstructConfig(method=method))
    b, _ = reconstruct(m, ReconstructConfig(method=method))
    assert len(a) == len(b)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.polygon, y.polygon)
        assert x.score == y.score


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_detections_bounded_by_components_with_region_scores(seed):
    rng = np.random.default_rng(seed)
    m = np.clip(rng.random((32, 32)) * 1.4 - 0.2, 0, 1)
    cfg = ReconstructConfig(min_area=4)
    dets, _ = reconstruct(m, cfg)
    r = connected_components(m > cfg.binarize_thresh)
    assert len(dets) <= r.count
    scores = sorted(region_score(m, r, k) for k in range(1, r.count + 1))
    for d in dets:
        assert any(abs(d.score - s) < 1e-12 for s in scores)
    assert [d.score for d in dets] == sorted((d.score for d in dets), reverse=True)


def _quads(seed, n, jitter):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        q = random_quad(rng, (20, 120), (-np.pi / 2, np.pi / 2), jitter=jitter)
        sides = np.hypot(*(np.roll(q, -1, 0) - q).T)
        if sides.min() >= 20:
            out.append(q + 100)
    return out


@pytest.mark.parametrize("seed", range(3))
def test_similar_round_trip_convex_quads(seed):
    for q in _quads(seed, 15, 0.15):
        gt, _, _ = generate_similar_label([Annotation(q, "t")], 0.6, 200, 200)
        dets, _ = reconstruct(gt.astype(float), ReconstructConfig(delta=0.6))
        assert len(dets) == 1
        assert geo.polygon_iou(dets[0].polygon, q) >= 0.90


def matching_beta(gamma):
    # exact inverse of the offset label for any tangential polygon
    return 2 * (1 - gamma**2) / (1 + gamma**2)


@pytest.mark.parametrize("seed", range(3))
def test_offset_round_trip_parity(seed):
    rng = np.random.default_rng(100 + seed)
    gamma = 0.4
    cfg = ReconstructConfig(method="offset", beta=matching_beta(gamma))
    done = 0
    while done < 15:
        h = rng.uniform(20, 100)
        w = h * rng.uniform(1, 1.5)
        q = random_quad(rng, (w, w), (-np.pi / 2, np.pi / 2))
        q[:, 1] *= h / w
        q = q + 100
        if np.hypot(*(np.roll(q, -1, 0) - q).T).min() < 20:
            continue
        gt, _, _ = generate_offset_label([Annotation(q, "t")], gamma, 200, 200)
        dets, _ = reconstruct(gt.astype(float), cfg)
        assert len(dets) == 1
        assert geo.polygon_iou(dets[0].polygon, q) >= 0.85
        done += 1


def test_reconstruct_config_validation():
    with pytest.raises(ParameterError):
        ReconstructConfig(method="magic")
    with pytest.raises(ParameterError):
        ReconstructConfig(delta=0)
    with pytest.raises(ParameterError):
        ReconstructConfig(beta=-1)
