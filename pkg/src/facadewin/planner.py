"""Detector configuration planning from dataset statistics.

Depth rule: the network input of side ``n = 1024 / 2**m`` is downsampled by
``k`` stride-2 stages.  A window of width ``w`` pixels then spans
``w / 2**k`` cells in the coarsest feature map; the chosen depth is the
largest ``k <= 5`` for which that span stays strictly above 3 cells.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .annotations import WindowAnnotation

REFERENCE_SIDE = 1024
MIN_CELLS = 3.0
MAX_DEPTH = 5
MIN_ANCHOR = 4
ROI_MULTIPLIER = 3.0
ROI_BOUNDS = (8, 200)
DEFAULT_P_MIN = 0.7


class PlanningError(ValueError):
    pass


@dataclass(frozen=True)
class Quantiles:
    q25: float
    q50: float
    q75: float

    def __post_init__(self):
        if not self.q25 <= self.q50 <= self.q75:
            raise ValueError(f"quantiles must be ordered, got {self}")

    def values(self) -> tuple[float, float, float]:
        return (self.q25, self.q50, self.q75)


@dataclass(frozen=True)
class DatasetStats:
    image_side: int
    window_width_quantiles: Quantiles
    aspect_quantiles: Quantiles
    mean_windows_per_image: float
    object_fraction: float

    def __post_init__(self):
        m = side_exponent(self.image_side)
        if m not in (2, 3, 4, 5):
            raise ValueError(f"image side {self.image_side} is not 1024 / 2**m with m in 2..5")
        if self.mean_windows_per_image < 0:
            raise ValueError("mean_windows_per_image must be >= 0")

    @property
    def m(self) -> int:
        return side_exponent(self.image_side)

    @classmethod
    def for_side(cls, image_side: int, fraction: float = 0.1,
                 mean_windows_per_image: float = 10.0) -> "DatasetStats":
        """Stats for square windows whose width is ``fraction`` of the image side."""
        w = estimate_object_width(image_side, fraction)
        return cls(image_side=image_side, window_width_quantiles=Quantiles(w, w, w),
                   aspect_quantiles=Quantiles(1.0, 1.0, 1.0),
                   mean_windows_per_image=mean_windows_per_image, object_fraction=fraction)


def side_exponent(image_side: int) -> int | None:
    """``m`` with ``image_side == 1024 / 2**m``, or None if there is none."""
    if image_side < 1:
        return None
    m = math.log2(REFERENCE_SIDE / image_side)
    if m != int(m):
        return None
    return int(m)


def dataset_stats(annotations: Sequence[WindowAnnotation], image_side: int,
                  n_images: int) -> DatasetStats:
    """Window size/aspect quartiles and density of a labelled square-image set."""
    if n_images < 1:
        raise ValueError("need at least one image")
    if annotations:
        widths = np.sqrt([a.bbox.area for a in annotations])
        aspects = np.array([a.bbox.h / a.bbox.w for a in annotations])
        wq = Quantiles(*np.quantile(widths, [0.25, 0.5, 0.75]).tolist())
        aq = Quantiles(*np.quantile(aspects, [0.25, 0.5, 0.75]).tolist())
        fraction = float(widths.mean()) / image_side
    else:
        w = estimate_object_width(image_side)
        wq, aq, fraction = Quantiles(w, w, w), Quantiles(1.0, 1.0, 1.0), 0.1
    return DatasetStats(image_side=image_side, window_width_quantiles=wq, aspect_quantiles=aq,
                        mean_windows_per_image=len(annotations) / n_images,
                        object_fraction=fraction)


@dataclass(frozen=True)
class LossWeights:
    """Weights of RPN class/box and head class/box/mask losses, in that order."""

    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    delta: float = 1.0
    epsilon: float = 1.0

    def __post_init__(self):
        values = self.as_array()
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError(f"loss weights must be finite and non-negative, got {values}")

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.gamma, self.delta, self.epsilon], dtype=float)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "LossWeights":
        return cls(*(float(v) for v in values))

    def scaled(self, n: float) -> "LossWeights":
        return LossWeights.from_array(n * self.as_array())


@dataclass(frozen=True)
class NetworkConfig:
    input_side: int
    k_layer: int
    anchor_scales: list[int]
    anchor_ratios: list[float]
    rois_per_image: int
    loss_weights: LossWeights = field(default_factory=LossWeights)
    p_min: float = DEFAULT_P_MIN

    def __post_init__(self):
        if not 1 <= self.k_layer <= MAX_DEPTH:
            raise ValueError(f"k_layer must be in [1, {MAX_DEPTH}], got {self.k_layer}")
        if list(self.anchor_scales) != sorted(self.anchor_scales) or \
                any(s < MIN_ANCHOR for s in self.anchor_scales):
            raise ValueError(f"anchor scales must be ascending and >= {MIN_ANCHOR}")
        if self.rois_per_image < 1:
            raise ValueError("rois_per_image must be >= 1")
        if not 0.0 <= self.p_min <= 1.0:
            raise ValueError("p_min must lie in [0, 1]")

    @property
    def feature_stride(self) -> int:
        return 2 ** self.k_layer

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> "NetworkConfig":
        doc = dict(doc)
        doc["loss_weights"] = LossWeights(**doc["loss_weights"])
        return cls(**doc)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1)


def estimate_object_width(image_side: float, fraction: float = 0.1) -> float:
    if image_side < 1:
        raise ValueError("image_side must be >= 1")
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie strictly between 0 and 1")
    return fraction * image_side


def plan_depth(object_width: float) -> int:
    """Deepest stride-2 stack (at most 5) leaving objects wider than 3 cells."""
    if not object_width > 0:
        raise ValueError("object_width must be positive")
    if object_width / 2 <= MIN_CELLS:
        raise PlanningError(
            f"objects too small for any downsampling: {object_width} px / 2 <= {MIN_CELLS}")
    k = 1
    while k < MAX_DEPTH and object_width / 2 ** (k + 1) > MIN_CELLS:
        k += 1
    return k


def plan_anchors(stats: DatasetStats) -> tuple[list[int], list[float]]:
    scales = sorted({max(MIN_ANCHOR, int(math.floor(q + 0.5)))
                     for q in stats.window_width_quantiles.values()})
    ratios = sorted({round(r, 2) for r in stats.aspect_quantiles.values()})
    return scales, ratios


def plan_rois(mean_windows_per_image: float) -> int:
    if mean_windows_per_image < 0:
        raise ValueError("mean_windows_per_image must be >= 0")
    lo, hi = ROI_BOUNDS
    return int(min(hi, max(lo, math.ceil(ROI_MULTIPLIER * mean_windows_per_image))))


def combine_losses(weights: LossWeights, losses: Sequence[float]) -> float:
    """Weighted sum of the five component losses."""
    values = np.asarray(losses, dtype=float)
    if values.shape != (5,):
        raise ValueError(f"expected 5 loss values, got shape {values.shape}")
    if not np.all(np.isfinite(values)) or np.any(values < 0):
        raise ValueError("losses must be finite and non-negative")
    return float(math.fsum(weights.as_array() * values))


def normalize_weights(weights: LossWeights) -> LossWeights:
    """Sum-to-one representative of the positive-scaling class of ``weights``."""
    values = weights.as_array()
    total = math.fsum(values)
    if total == 0:
        raise ValueError("cannot normalise all-zero loss weights")
    return LossWeights.from_array(values / total)


def build_config(stats: DatasetStats, p_min: float = DEFAULT_P_MIN,
                 loss_weights: LossWeights | None = None) -> NetworkConfig:
    """Compose depth, anchors and ROI count into a :class:`NetworkConfig`.

    The depth rule is driven by the median window width of ``stats``.
    """
    k = plan_depth(stats.window_width_quantiles.q50)
    scales, ratios = plan_anchors(stats)
    return NetworkConfig(
        input_side=stats.image_side,
        k_layer=k,
        anchor_scales=scales,
        anchor_ratios=ratios,
        rois_per_image=plan_rois(stats.mean_windows_per_image),
        loss_weights=normalize_weights(loss_weights or LossWeights()),
        p_min=p_min,
    )


def generate_anchors(config: NetworkConfig) -> np.ndarray:
    """All anchors as float ``(x0, y0, x1, y1)`` rows.

    One anchor per scale/ratio pair centred on every cell of the
    ``input_side / 2**k_layer`` feature grid; ``ratio`` is height / width.
    """
    stride = config.feature_stride
    cells = np.arange(config.input_side // stride) * stride + stride / 2.0
    cx, cy = np.meshgrid(cells, cells)
    shapes = [(s / math.sqrt(r), s * math.sqrt(r))
              for s in config.anchor_scales for r in config.anchor_ratios]
    out = []
    for w, h in shapes:
        out.append(np.stack([cx.ravel() - w / 2, cy.ravel() - h / 2,
                             cx.ravel() + w / 2, cy.ravel() + h / 2], axis=1))
    return np.concatenate(out, axis=0)


def anchor_coverage(config: NetworkConfig, annotations: Sequence[WindowAnnotation],
                    iou_threshold: float = 0.5) -> float:
    """Fraction of windows whose best anchor reaches ``iou_threshold`` box IoU."""
    if not annotations:
        return 1.0
    anchors = generate_anchors(config)
    gts = np.array([[a.bbox.x, a.bbox.y, a.bbox.x2, a.bbox.y2] for a in annotations], dtype=float)
    iw = np.clip(np.minimum(gts[:, None, 2], anchors[None, :, 2])
                 - np.maximum(gts[:, None, 0], anchors[None, :, 0]), 0, None)
    ih = np.clip(np.minimum(gts[:, None, 3], anchors[None, :, 3])
                 - np.maximum(gts[:, None, 1], anchors[None, :, 1]), 0, None)
    inter = iw * ih
    area_g = (gts[:, 2] - gts[:, 0]) * (gts[:, 3] - gts[:, 1])
    area_a = (anchors[:, 2] - anchors[:, 0]) * (anchors[:, 3] - anchors[:, 1])
    iou = inter / (area_g[:, None] + area_a[None, :] - inter)
    return float(np.mean(iou.max(axis=1) >= iou_threshold))
