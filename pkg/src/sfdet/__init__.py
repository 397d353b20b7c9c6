"""Single-feature two-stage detector simplification toolkit.

Anchor coverage analysis, single-level RPN post-processing with high-pass
score filtering, rotated-box geometry and an analytic FLOPs model.
"""
from .anchors import (AnchorLattice, AnchorSpec, Assignment, CoverageReport, assign_max_iou,
                      coverage_report, generate_lattice, multi_anchor_lattice, worst_case_iou)
from .costmodel import (CostBreakdown, NeckConfig, RoiHeadConfig, RpnConfig, conv_cost,
                        detector_cost, filter_cost, neck_cost, roi_head_cost, rpn_cost)
from .estimators import AnchorMatcher, HighPassFilter, SingleFeatureRPN
from .geom import (ConvexPolygon, HBox, OBox, convex_clip, iou_hbb, iou_obb, iou_raster_oracle,
                   obox_to_polygon, polygon_area)
from .proposals import (PipelineConfig, Proposal, decode, roi_budget_sweep, rotated_nms,
                        rpn_postprocess, topk)
from .scoremap import Kernel, apply_hpf, convolve2d, make_kernel, sigmoid_map

__version__ = "0.1.0"
