"""Integer boxes, run-length encoded binary masks and IoU.

Pixel model: a box ``(x, y, w, h)`` covers the half-open lattice
``[x, x + w) x [y, y + h)``.  Masks are stored as uncompressed RLE in
column-major order, starting with a run of zeros, which is the same layout
as COCO's uncompressed ``{"size": [h, w], "counts": [...]}`` segmentation.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np


class CodecError(ValueError):
    """Raised for run-length data that does not describe a valid mask."""


@dataclass(frozen=True)
class BBox:
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            value = getattr(self, name)
            if int(value) != value:
                raise ValueError(f"BBox.{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if self.w < 1 or self.h < 1:
            raise ValueError(f"box extent must be >= 1, got w={self.w} h={self.h}")
        if self.x < 0 or self.y < 0:
            raise ValueError(f"box origin must be >= 0, got x={self.x} y={self.y}")

    @property
    def x2(self) -> int:
        return self.x + self.w

    @property
    def y2(self) -> int:
        return self.y + self.h

    @property
    def area(self) -> int:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    def to_list(self) -> list[int]:
        return [self.x, self.y, self.w, self.h]

    @classmethod
    def from_list(cls, values: Sequence[float]) -> "BBox":
        x, y, w, h = values
        return cls(int(x), int(y), int(w), int(h))

    def to_mask(self, width: int, height: int) -> "BinaryMask":
        """Filled mask of this box inside a ``width x height`` canvas."""
        dense = np.zeros((height, width), dtype=bool)
        dense[self.y:self.y2, self.x:self.x2] = True
        return BinaryMask.from_dense(dense)


def rle_encode(dense: np.ndarray) -> list[int]:
    """Column-major run lengths of a 2-D boolean array, starting with zeros."""
    dense = np.asarray(dense)
    if dense.ndim != 2 or dense.size == 0:
        raise CodecError(f"expected a non-empty 2-D bitmap, got shape {dense.shape}")
    flat = dense.astype(bool).ravel(order="F")
    # positions where the value changes, plus both ends
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return runs


def rle_decode(runs: Sequence[int], width: int, height: int) -> np.ndarray:
    """Inverse of :func:`rle_encode`; returns a ``(height, width)`` bool array."""
    runs = np.asarray(runs, dtype=np.int64)
    if width < 1 or height < 1:
        raise CodecError(f"mask dimensions must be positive, got {width}x{height}")
    if runs.ndim != 1 or runs.size == 0:
        raise CodecError("run list must be a non-empty flat sequence")
    if np.any(runs < 0):
        raise CodecError("run lengths must be non-negative")
    if int(runs.sum()) != width * height:
        raise CodecError(
            f"runs sum to {int(runs.sum())}, expected {width} x {height} = {width * height}"
        )
    values = np.arange(runs.size) % 2 == 1
    flat = np.repeat(values, runs)
    return flat.reshape((height, width), order="F")


@dataclass(frozen=True, eq=True)
class BinaryMask:
    width: int
    height: int
    runs: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "runs", tuple(int(r) for r in self.runs))
        if self.width < 1 or self.height < 1:
            raise CodecError(f"mask dimensions must be positive, got {self.width}x{self.height}")
        if any(r < 0 for r in self.runs):
            raise CodecError("run lengths must be non-negative")
        if sum(self.runs) != self.width * self.height:
            raise CodecError(
                f"runs sum to {sum(self.runs)}, expected {self.width * self.height}"
            )

    @classmethod
    def from_dense(cls, dense: np.ndarray) -> "BinaryMask":
        dense = np.asarray(dense)
        return cls(width=dense.shape[1], height=dense.shape[0], runs=tuple(rle_encode(dense)))

    @cached_property
    def dense(self) -> np.ndarray:
        arr = rle_decode(self.runs, self.width, self.height)
        arr.flags.writeable = False
        return arr

    @property
    def area(self) -> int:
        return int(sum(self.runs[1::2]))

    def bbox(self) -> BBox | None:
        """Tight bounding box of the set pixels, or None for an empty mask."""
        ys, xs = np.nonzero(self.dense)
        if xs.size == 0:
            return None
        return BBox(int(xs.min()), int(ys.min()),
                    int(xs.max() - xs.min() + 1), int(ys.max() - ys.min() + 1))

    def to_coco(self) -> dict:
        return {"size": [self.height, self.width], "counts": list(self.runs)}

    @classmethod
    def from_coco(cls, rle: dict) -> "BinaryMask":
        height, width = rle["size"]
        counts = rle["counts"]
        if isinstance(counts, str):
            raise CodecError("compressed (string) RLE counts are not supported")
        return cls(width=int(width), height=int(height), runs=tuple(counts))

    # cached_property writes into __dict__, keep it out of pickles and equality
    def __getstate__(self):
        return {"width": self.width, "height": self.height, "runs": self.runs}

    def __setstate__(self, state):
        for key, value in state.items():
            object.__setattr__(self, key, value)


def iou_box(a: BBox, b: BBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def iou_mask(a: BinaryMask, b: BinaryMask) -> float:
    if (a.width, a.height) != (b.width, b.height):
        raise ValueError(
            f"mask dimensions differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )
    da, db = a.dense, b.dense
    union = int(np.count_nonzero(da | db))
    if union == 0:
        return 1.0
    return int(np.count_nonzero(da & db)) / union


def box_iou_matrix(boxes_a: Sequence[BBox], boxes_b: Sequence[BBox]) -> np.ndarray:
    """Pairwise box IoU, shape ``(len(boxes_a), len(boxes_b))``."""
    if len(boxes_a) == 0 or len(boxes_b) == 0:
        return np.zeros((len(boxes_a), len(boxes_b)))
    a = np.array([[b.x, b.y, b.x2, b.y2] for b in boxes_a], dtype=np.int64)
    b = np.array([[b.x, b.y, b.x2, b.y2] for b in boxes_b], dtype=np.int64)
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return inter / union


def mask_iou_matrix(masks_a: Sequence[BinaryMask], masks_b: Sequence[BinaryMask]) -> np.ndarray:
    """Pairwise mask IoU; both-empty pairs count as 1.0 like :func:`iou_mask`."""
    if len(masks_a) == 0 or len(masks_b) == 0:
        return np.zeros((len(masks_a), len(masks_b)))
    shapes = {(m.width, m.height) for m in (*masks_a, *masks_b)}
    if len(shapes) != 1:
        raise ValueError(f"mask dimensions differ: {sorted(shapes)}")
    fa = np.stack([m.dense.ravel() for m in masks_a]).astype(np.int64)
    fb = np.stack([m.dense.ravel() for m in masks_b]).astype(np.int64)
    inter = fa @ fb.T
    union = fa.sum(1)[:, None] + fb.sum(1)[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(union == 0, 1.0, inter / np.maximum(union, 1))
    return out
