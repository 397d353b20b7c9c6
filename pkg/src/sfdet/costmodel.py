"""Analytic GFLOPs model for the neck, RPN head, score filter and RoI head.

One multiply-accumulate counts as one FLOP. Biases, normalization,
activations, top-down upsampling and NMS are not counted.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from typing import Iterable

GIGA = 1e9


def _pos(name: str, *vals) -> None:
    for v in vals:
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")


def conv_cost(kernel_side: int, in_ch: int, out_ch: int, out_h: int, out_w: int) -> float:
    _pos("conv dimension", kernel_side, in_ch, out_ch, out_h, out_w)
    return kernel_side * kernel_side * in_ch * out_ch * out_h * out_w / GIGA


def feature_side(image_side: int, stride: int) -> int:
    return math.ceil(image_side / stride)


@dataclass(frozen=True)
class NeckConfig:
    in_channels: tuple[int, ...] = (256, 512, 1024, 2048)
    out_channels: int = 256
    input_image_side: int = 1024
    levels: tuple[int, ...] = (4, 8, 16, 32, 64)
    extra_level_via_pool: bool = True

    def __post_init__(self):
        object.__setattr__(self, "in_channels", tuple(int(c) for c in self.in_channels))
        object.__setattr__(self, "levels", tuple(int(s) for s in self.levels))
        if not self.levels:
            raise ValueError("neck needs at least one level")
        if not self.in_channels or len(self.in_channels) > len(self.levels):
            raise ValueError("need 1..len(levels) lateral input stages")
        _pos("neck channel count", self.out_channels, self.input_image_side, *self.in_channels)
        for s in self.levels:
            if s <= 0 or s & (s - 1):
                raise ValueError(f"stride {s} is not a power of 2")
        if list(self.levels) != sorted(set(self.levels)):
            raise ValueError("strides must be strictly ascending")

    @property
    def lateral_levels(self) -> tuple[int, ...]:
        return self.levels[:len(self.in_channels)]

    @property
    def extra_levels(self) -> tuple[int, ...]:
        return self.levels[len(self.in_channels):]


def neck_cost(cfg: NeckConfig, keep_levels: Iterable[int] | None = None) -> float:
    """FPN cost for the layers the kept outputs depend on.

    A kept pyramid level needs its own lateral 1x1 conv, every coarser
    lateral on the top-down path, and its 3x3 output conv. Extra levels
    built by pooling the coarsest output cost nothing themselves but keep
    that output alive; conv-built extra levels chain 3x3 stride-2 convs.
    """
    keep = set(cfg.levels if keep_levels is None else (int(s) for s in keep_levels))
    if not keep:
        raise ValueError("keep_levels must not be empty")
    if not keep <= set(cfg.levels):
        raise ValueError(f"keep_levels {sorted(keep)} not a subset of {list(cfg.levels)}")
    lat = cfg.lateral_levels
    extra = cfg.extra_levels
    outputs = keep & set(lat)
    extra_kept = [s for s in extra if s in keep]
    extra_needed = extra[:extra.index(max(extra_kept)) + 1] if extra_kept else ()
    if extra_needed:
        outputs.add(lat[-1])
    if not outputs:
        return 0.0
    finest = min(outputs)
    side = cfg.input_image_side
    total = 0.0
    for s, c in zip(lat, cfg.in_channels):
        if s >= finest:
            f = feature_side(side, s)
            total += conv_cost(1, c, cfg.out_channels, f, f)
    for s in outputs:
        f = feature_side(side, s)
        total += conv_cost(3, cfg.out_channels, cfg.out_channels, f, f)
    if not cfg.extra_level_via_pool:
        for s in extra_needed:
            f = feature_side(side, s)
            total += conv_cost(3, cfg.out_channels, cfg.out_channels, f, f)
    return total


@dataclass(frozen=True)
class RpnConfig:
    channels: int = 256
    anchors_per_location: int = 3
    reg_params_per_anchor: int = 6
    levels: tuple[int, ...] = (4, 8, 16, 32, 64)

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(int(s) for s in self.levels))
        if not self.levels:
            raise ValueError("RPN needs at least one level")
        _pos("RPN count", self.channels, self.anchors_per_location,
             self.reg_params_per_anchor, *self.levels)


def rpn_cost(cfg: RpnConfig, input_image_side: int) -> float:
    total = 0.0
    c, a = cfg.channels, cfg.anchors_per_location
    for s in cfg.levels:
        f = feature_side(input_image_side, s)
        total += conv_cost(3, c, c, f, f)
        total += conv_cost(1, c, a, f, f)
        total += conv_cost(1, c, a * cfg.reg_params_per_anchor, f, f)
    return total


def filter_cost(map_h: int, map_w: int, channels: int, kernel_side: int) -> float:
    _pos("filter dimension", map_h, map_w, channels, kernel_side)
    return kernel_side * kernel_side * map_h * map_w * channels / GIGA


@dataclass(frozen=True)
class RoiHeadConfig:
    num_rois: int = 1000
    roi_feature_side: int = 7
    roi_channels: int = 256
    fc_dims: tuple[int, ...] = (1024, 1024)
    num_classes: int = 16
    reg_params: int = 5
    reg_class_agnostic: bool = True

    def __post_init__(self):
        object.__setattr__(self, "fc_dims", tuple(int(d) for d in self.fc_dims))
        if not self.fc_dims:
            raise ValueError("fc_dims must not be empty")
        _pos("RoI head count", self.num_rois, self.roi_feature_side, self.roi_channels,
             self.num_classes, self.reg_params, *self.fc_dims)


def roi_head_macs_per_roi(cfg: RoiHeadConfig) -> int:
    dims = (cfg.roi_feature_side ** 2 * cfg.roi_channels,) + cfg.fc_dims
    macs = sum(a * b for a, b in zip(dims, dims[1:]))
    last = dims[-1]
    reg_out = cfg.reg_params * (1 if cfg.reg_class_agnostic else cfg.num_classes)
    return macs + last * (cfg.num_classes + 1) + last * reg_out


def roi_head_cost(cfg: RoiHeadConfig) -> float:
    return cfg.num_rois * roi_head_macs_per_roi(cfg) / GIGA


@dataclass(frozen=True)
class CostBreakdown:
    backbone_gflops: float
    neck_gflops: float
    rpn_gflops: float
    filter_gflops: float
    roi_head_gflops: float
    total_gflops: float = field(init=False)

    def __post_init__(self):
        parts = (self.backbone_gflops, self.neck_gflops, self.rpn_gflops,
                 self.filter_gflops, self.roi_head_gflops)
        if any(p < 0 for p in parts):
            raise ValueError("cost components must be non-negative")
        object.__setattr__(self, "total_gflops", sum(parts))

    def to_dict(self) -> dict:
        return asdict(self)


def detector_cost(backbone_gflops: float, neck: NeckConfig, rpn: RpnConfig, roi: RoiHeadConfig,
                  simplified: bool = False, hpf: bool = False, single_stride: int = 8,
                  hpf_kernel_side: int = 5) -> CostBreakdown:
    """Assemble a per-component breakdown.

    ``simplified`` keeps only the ``single_stride`` pyramid level and moves
    every level's anchors onto it.
    """
    if simplified:
        if single_stride not in neck.levels:
            raise ValueError(f"stride {single_stride} not in neck levels {neck.levels}")
        neck_g = neck_cost(neck, {single_stride})
        rpn = replace(rpn, levels=(single_stride,),
                      anchors_per_location=rpn.anchors_per_location * len(rpn.levels))
    else:
        neck_g = neck_cost(neck)
    filt = 0.0
    if hpf:
        for s in rpn.levels:
            f = feature_side(neck.input_image_side, s)
            filt += filter_cost(f, f, rpn.anchors_per_location, hpf_kernel_side)
    return CostBreakdown(float(backbone_gflops), neck_g, rpn_cost(rpn, neck.input_image_side),
                         filt, roi_head_cost(roi))


@dataclass(frozen=True)
class ModelConfig:
    name: str
    backbone_gflops: float
    neck: NeckConfig
    rpn: RpnConfig
    roi_head: RoiHeadConfig
    single_stride: int = 8
    hpf_kernel_side: int = 5

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        try:
            known = {f.name for f in fields(cls)}
            unknown = set(d) - known
            if unknown:
                raise ValueError(f"unknown config keys: {sorted(unknown)}")
            return cls(
                name=str(d["name"]),
                backbone_gflops=float(d["backbone_gflops"]),
                neck=NeckConfig(**d.get("neck", {})),
                rpn=RpnConfig(**d.get("rpn", {})),
                roi_head=RoiHeadConfig(**d.get("roi_head", {})),
                single_stride=int(d.get("single_stride", 8)),
                hpf_kernel_side=int(d.get("hpf_kernel_side", 5)),
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed model config: {exc}") from exc

    def to_dict(self) -> dict:
        return asdict(self)

    def breakdowns(self) -> tuple[CostBreakdown, CostBreakdown]:
        base = detector_cost(self.backbone_gflops, self.neck, self.rpn, self.roi_head)
        simple = detector_cost(self.backbone_gflops, self.neck, self.rpn, self.roi_head,
                               simplified=True, hpf=True, single_stride=self.single_stride,
                               hpf_kernel_side=self.hpf_kernel_side)
        return base, simple


BUNDLED_MODELS = ("oriented-rcnn", "lsknet-t", "lsknet-s")


def load_model_config(name_or_path: str) -> ModelConfig:
    """Load a bundled model by name, or a JSON config file by path."""
    if name_or_path in BUNDLED_MODELS:
        text = resources.files("sfdet.configs").joinpath(f"{name_or_path}.json").read_text()
    else:
        with open(name_or_path, encoding="utf-8") as fh:
            text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed model config: {exc}") from exc
    if not isinstance(data, dict):
        raise ValueError("malformed model config: expected a JSON object")
    return ModelConfig.from_dict(data)


def reduction(baseline: CostBreakdown, simplified: CostBreakdown) -> float:
    return 1.0 - simplified.total_gflops / baseline.total_gflops
