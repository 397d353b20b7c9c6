"""scikit-learn compatible wrappers around the functional core.

These follow the usual estimator contract (constructor stores parameters
verbatim, ``fit`` validates and sets trailing-underscore attributes) so they
can sit inside a :class:`sklearn.pipeline.Pipeline` or be cloned.
"""
from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .anchors import (ADJUSTED_SIZES, DEFAULT_RATIOS, FPN_STRIDES, AnchorSpec, assign_max_iou,
                      coverage_report, lattices_for_image, multi_anchor_lattice)
from .proposals import PipelineConfig, proposals_to_rows, rpn_postprocess
from .scoremap import Kernel, convolve2d, make_kernel, sigmoid_map
from .validation import (boxes_from_array, check_fraction, check_positive_int,
                         check_score_map)


class HighPassFilter(TransformerMixin, BaseEstimator):
    """Score-map filter: optional sigmoid, per-channel correlation, clamp.

    Parameters
    ----------
    kind, size : str, int
        Filter from the built-in bank (see :func:`sfdet.scoremap.make_kernel`).
    weights : array-like, optional
        Custom odd-sided square kernel; overrides ``kind``/``size``.
    sigmoid : bool
        Treat inputs as logits and activate them first.
    clip : bool
        Clamp the output to [0, 1].
    """

    def __init__(self, kind="unsharp", size=5, weights=None, sigmoid=False, clip=True, n_jobs=1):
        self.kind = kind
        self.size = size
        self.weights = weights
        self.sigmoid = sigmoid
        self.clip = clip
        self.n_jobs = n_jobs

    def fit(self, X=None, y=None):
        if self.weights is not None:
            self.kernel_ = Kernel(np.asarray(self.weights, dtype=float), "custom")
        else:
            self.kernel_ = make_kernel(self.kind, self.size)
        return self

    def _one(self, m):
        if self.sigmoid:
            m = sigmoid_map(m)
        out = convolve2d(m, self.kernel_, n_jobs=self.n_jobs)
        return np.clip(out, 0.0, 1.0) if self.clip else out

    def transform(self, X):
        check_is_fitted(self, "kernel_")
        X = check_score_map(X, allow_batch=True)
        if X.ndim == 4:
            return np.stack([self._one(m) for m in X])
        return self._one(X)


class SingleFeatureRPN(BaseEstimator):
    """Proposal generator on one feature level.

    ``predict`` takes a ``(H, W, 6A)`` array: the first ``A`` channels are
    classification logits, the remaining ``5A`` are box deltas. It returns an
    ``(n, 6)`` array of ``cx, cy, w, h, theta, score`` rows.
    """

    def __init__(self, stride=8, anchor_sizes=ADJUSTED_SIZES, aspect_ratios=DEFAULT_RATIOS,
                 k_pre=2000, k_post=2000, nms_iou_threshold=0.8, hpf=True,
                 hpf_kind="unsharp", hpf_size=5, n_jobs=1):
        self.stride = stride
        self.anchor_sizes = anchor_sizes
        self.aspect_ratios = aspect_ratios
        self.k_pre = k_pre
        self.k_post = k_post
        self.nms_iou_threshold = nms_iou_threshold
        self.hpf = hpf
        self.hpf_kind = hpf_kind
        self.hpf_size = hpf_size
        self.n_jobs = n_jobs

    def fit(self, X=None, y=None):
        sizes = tuple(self.anchor_sizes)
        self.spec_ = AnchorSpec(sizes, tuple(self.aspect_ratios), (self.stride,) * len(sizes))
        self.config_ = PipelineConfig(
            check_positive_int(self.k_pre, "k_pre"),
            check_positive_int(self.k_post, "k_post"),
            check_fraction(self.nms_iou_threshold, "nms_iou_threshold"),
            bool(self.hpf),
            make_kernel(self.hpf_kind, self.hpf_size),
        )
        self.n_anchors_per_location_ = len(sizes) * len(self.spec_.scales_per_size) * \
            len(self.spec_.aspect_ratios)
        if X is not None:
            self._split(check_score_map(X))
        return self

    def _split(self, X):
        a = self.n_anchors_per_location_
        if X.ndim != 3 or X.shape[2] != 6 * a:
            raise ValueError(f"expected (H, W, {6 * a}) input, got shape {X.shape}")
        return X[:, :, :a], X[:, :, a:]

    def predict_proposals(self, X):
        check_is_fitted(self, "config_")
        scores, deltas = self._split(check_score_map(X))
        lattice = multi_anchor_lattice(self.spec_, self.stride, X.shape[0], X.shape[1])
        return rpn_postprocess(scores, deltas, lattice, self.config_, n_jobs=self.n_jobs)

    def predict(self, X):
        rows = proposals_to_rows(self.predict_proposals(X))
        return np.asarray(rows, dtype=float).reshape(-1, 6)


class AnchorMatcher(BaseEstimator):
    """Max-IoU anchor assignment across pyramid levels.

    ``fit`` takes an ``(n, 5)`` array of oriented boxes, builds one lattice
    per stride over the image extent and stores the coverage report in
    ``coverage_``. ``predict`` returns the matched level index per box, or
    ``-1`` when the best IoU stays under ``pos_threshold``.
    """

    def __init__(self, anchor_sizes=ADJUSTED_SIZES, strides=FPN_STRIDES,
                 aspect_ratios=DEFAULT_RATIOS, pos_threshold=0.5, iou_mode="hbb",
                 image_size=None, n_jobs=1):
        self.anchor_sizes = anchor_sizes
        self.strides = strides
        self.aspect_ratios = aspect_ratios
        self.pos_threshold = pos_threshold
        self.iou_mode = iou_mode
        self.image_size = image_size
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        boxes = boxes_from_array(X)
        check_fraction(self.pos_threshold, "pos_threshold")
        self.spec_ = AnchorSpec(tuple(self.anchor_sizes), tuple(self.aspect_ratios),
                                tuple(self.strides))
        if self.image_size is not None:
            w, h = self.image_size
        else:
            w = h = 1.0
            for b in boxes:
                hb = b.to_hbox()
                w, h = max(w, hb.x_max), max(h, hb.y_max)
            w, h = math.ceil(w), math.ceil(h)
        self.image_size_ = (w, h)
        self.lattices_ = lattices_for_image(self.spec_, w, h)
        self.coverage_ = coverage_report(boxes, self.spec_, w, h, self.pos_threshold,
                                         self.iou_mode, self.n_jobs)
        return self

    def assign(self, X):
        check_is_fitted(self, "lattices_")
        boxes = boxes_from_array(X)
        if not boxes:
            return []
        return assign_max_iou(boxes, self.lattices_, self.pos_threshold, self.iou_mode,
                              self.n_jobs)

    def predict(self, X):
        return np.array([a.best_level if a.positive else -1 for a in self.assign(X)], dtype=int)

    def score(self, X, y=None):
        """Fraction of boxes matched on some level."""
        pred = self.predict(X)
        return float(np.mean(pred >= 0)) if pred.size else 0.0
