import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import Pipeline

from sfdet.anchors import AnchorSpec, multi_anchor_lattice
from sfdet.estimators import AnchorMatcher, HighPassFilter, SingleFeatureRPN
from sfdet.proposals import PipelineConfig, rpn_postprocess
from sfdet.scoremap import apply_hpf, make_kernel, sigmoid_map
from sfdet.validation import check_boxes, check_fraction, check_positive_int

from helpers import synthetic_objects


def test_params_roundtrip_and_clone():
    for est in (HighPassFilter(size=3), SingleFeatureRPN(k_pre=50, k_post=10), AnchorMatcher()):
        params = est.get_params()
        twin = clone(est)
        assert twin.get_params() == params and twin is not est
    f = HighPassFilter().set_params(kind="gaussian", size=3)
    assert f.kind == "gaussian"


def test_hpf_matches_functional():
    rng = np.random.default_rng(0)
    m = rng.uniform(size=(9, 9, 3))
    out = HighPassFilter().fit_transform(m)
    assert np.array_equal(out, apply_hpf(m, make_kernel("unsharp", 5)))
    batch = HighPassFilter().fit(None).transform(np.stack([m, m]))
    assert batch.shape == (2, 9, 9, 3) and np.array_equal(batch[1], out)


def test_hpf_options():
    logits = np.random.default_rng(1).normal(size=(8, 8))
    f = HighPassFilter(sigmoid=True, clip=False, kind="identity", size=1).fit()
    assert np.allclose(f.transform(logits), sigmoid_map(logits))
    w = np.zeros((3, 3))
    w[1, 1] = 2.0
    g = HighPassFilter(weights=w, clip=False).fit()
    assert np.array_equal(g.transform(np.ones((4, 4))), np.full((4, 4), 2.0))


def test_hpf_errors():
    with pytest.raises(NotFittedError):
        HighPassFilter().transform(np.zeros((6, 6)))
    with pytest.raises(ValueError):
        HighPassFilter(kind="sobel").fit()
    with pytest.raises(ValueError):
        HighPassFilter().fit().transform(np.full((6, 6), np.nan))


def test_hpf_in_pipeline():
    pipe = Pipeline([("act", HighPassFilter(kind="identity", size=1, sigmoid=True, clip=False)),
                     ("sharpen", HighPassFilter())])
    logits = np.random.default_rng(2).normal(size=(10, 10, 2))
    expect = apply_hpf(sigmoid_map(logits), make_kernel("unsharp", 5))
    assert np.allclose(pipe.fit_transform(logits), expect, atol=1e-15)


def _rpn_input(rng, h, w, a):
    return np.concatenate([rng.normal(size=(h, w, a)), rng.normal(scale=0.1, size=(h, w, 5 * a))],
                          axis=2)


def test_rpn_matches_functional():
    rng = np.random.default_rng(3)
    est = SingleFeatureRPN(anchor_sizes=(16, 32), k_pre=60, k_post=40).fit()
    assert est.n_anchors_per_location_ == 6
    X = _rpn_input(rng, 10, 12, 6)
    lat = multi_anchor_lattice(AnchorSpec((16, 32), strides=(8, 8)), 8, 10, 12)
    cfg = PipelineConfig(60, 40, 0.8, True, make_kernel("unsharp", 5))
    ref = rpn_postprocess(X[:, :, :6], X[:, :, 6:], lat, cfg)
    assert est.predict_proposals(X) == ref
    out = est.predict(X)
    assert out.shape == (len(ref), 6)
    assert np.all(np.diff(out[:, 5]) <= 0)


def test_rpn_errors():
    with pytest.raises(NotFittedError):
        SingleFeatureRPN().predict(np.zeros((4, 4, 90)))
    est = SingleFeatureRPN().fit()
    with pytest.raises(ValueError, match="expected"):
        est.predict(np.zeros((4, 4, 7)))
    with pytest.raises(ValueError):
        SingleFeatureRPN(k_pre=0).fit()
    with pytest.raises(ValueError):
        SingleFeatureRPN(nms_iou_threshold=1.2).fit()


def test_anchor_matcher():
    X = np.array([b.as_tuple() for b in synthetic_objects()])
    m = AnchorMatcher(image_size=(1024, 1024)).fit(X)
    assert m.image_size_ == (1024, 1024) and len(m.lattices_) == 5
    pred = m.predict(X)
    assert pred.shape == (20,)
    assert np.sum(pred == -1) == m.coverage_.unmatched_count
    assert m.score(X) == pytest.approx(1 - m.coverage_.unmatched_fraction)


def test_anchor_matcher_infers_extent():
    X = np.array([[40.0, 30.0, 16, 16, 0], [100.0, 90.0, 32, 32, 0]])
    m = AnchorMatcher().fit(X)
    assert m.image_size_ == (116, 106)
    assert m.predict(np.zeros((0, 5))).shape == (0,)


def test_validation_helpers():
    assert check_boxes([[0, 0, 1, 1, 0]]).shape == (1, 5)
    with pytest.raises(ValueError):
        check_boxes([[0, 0, 1, 1]])
    with pytest.raises(ValueError):
        check_boxes([[0, 0, -1, 1, 0]])
    assert check_positive_int(3, "n") == 3
    for bad in (0, True, 2.5):
        with pytest.raises(ValueError):
            check_positive_int(bad, "n")
    assert check_fraction(0.5, "t") == 0.5
    assert check_fraction(1.0, "t", open_interval=False) == 1.0
    with pytest.raises(ValueError):
        check_fraction(0.0, "t")
