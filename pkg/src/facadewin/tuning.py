"""Score-threshold sweeps, NMS and the double/missed-window diagnostics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .annotations import Detection, WindowAnnotation, group_by_image
from .evaluation import ap50, counts_at, iou_matrix, match_detections, score_order
from .geometry import box_iou_matrix

OBJECTIVES = ("ap50", "recall", "f1")


def default_grid() -> list[float]:
    """0.05 .. 0.95 in steps of 0.05."""
    return [round(0.05 * i, 2) for i in range(1, 20)]


@dataclass(frozen=True)
class SweepPoint:
    threshold: float
    precision: float
    recall: float
    ap50: float

    @property
    def f1(self) -> float:
        s = self.precision + self.recall
        return 2 * self.precision * self.recall / s if s > 0 else 0.0


def sweep_threshold(dets: Sequence[Detection], gts: Sequence[WindowAnnotation],
                    grid: Sequence[float] | None = None, objective: str = "ap50",
                    mode: str = "box") -> tuple[float, list[SweepPoint]]:
    """Evaluate every threshold in ``grid`` and pick the best by ``objective``.

    The ``ap50`` column is computed on the full ranking and is therefore the
    same at every threshold, so with ``objective="ap50"`` the lowest grid point
    wins; ``f1`` and ``recall`` actually discriminate.  Ties go to the lowest
    threshold.
    """
    if objective not in OBJECTIVES:
        raise ValueError(f"objective must be one of {OBJECTIVES}, got {objective!r}")
    grid = default_grid() if grid is None else list(grid)
    if not grid:
        raise ValueError("threshold grid is empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("threshold grid must be strictly ascending")
    full_ap = ap50(dets, gts, mode)
    curve = []
    for t in grid:
        tp, fp, fn = counts_at(dets, gts, t, mode)
        curve.append(SweepPoint(threshold=float(t), precision=tp / (tp + fp) if tp + fp else 1.0,
                                recall=tp / (tp + fn) if tp + fn else 1.0, ap50=full_ap))
    key = {"ap50": lambda p: p.ap50, "recall": lambda p: p.recall, "f1": lambda p: p.f1}[objective]
    best = max(curve, key=key)  # max keeps the first (lowest) of equal keys
    return best.threshold, curve


def write_curve_csv(path, curve: Sequence[SweepPoint]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["threshold", "precision", "recall", "ap50"])
        for p in curve:
            writer.writerow([f"{p.threshold:.2f}", repr(p.precision), repr(p.recall), repr(p.ap50)])


def nms(dets: Sequence[Detection], iou_threshold: float = 0.5) -> list[Detection]:
    """Greedy per-image suppression on box IoU; survivors keep input order."""
    keep = np.zeros(len(dets), dtype=bool)
    rank = np.empty(len(dets), dtype=np.int64)
    rank[score_order(dets)] = np.arange(len(dets))
    for idx in group_by_image(dets).values():
        idx = sorted(idx, key=lambda i: rank[i])
        boxes = [dets[i].bbox for i in idx]
        ious = box_iou_matrix(boxes, boxes)
        alive = np.ones(len(idx), dtype=bool)
        for a in range(len(idx)):
            if not alive[a]:
                continue
            keep[idx[a]] = True
            later = np.arange(a + 1, len(idx))
            alive[later[ious[a, a + 1:] >= iou_threshold]] = False
    return [d for d, k in zip(dets, keep) if k]


@dataclass(frozen=True)
class DoubleDetection:
    gt_index: int
    det_indices: tuple[int, ...]

    @property
    def count(self) -> int:
        return len(self.det_indices)


def find_double_detections(dets: Sequence[Detection], gts: Sequence[WindowAnnotation],
                           iou_threshold: float = 0.5, mode: str = "box") -> list[DoubleDetection]:
    """Ground truths claimed by two or more detections, most-claimed first."""
    out = []
    det_groups = group_by_image(dets)
    for image_id, g_idx in group_by_image(gts).items():
        d_idx = det_groups.get(image_id, [])
        if len(d_idx) < 2:
            continue
        ious = iou_matrix([dets[i] for i in d_idx], [gts[j] for j in g_idx], mode)
        for col, gj in enumerate(g_idx):
            hits = tuple(d_idx[r] for r in np.flatnonzero(ious[:, col] >= iou_threshold))
            if len(hits) >= 2:
                out.append(DoubleDetection(gj, hits))
    out.sort(key=lambda d: (-d.count, d.gt_index))
    return out


@dataclass
class CenterBias:
    """Normalised centre distances of missed vs detected windows.

    Distances are measured from the bbox centre to the image centre and
    divided by the half-diagonal of the (square) image, so they lie in [0, 1].
    A mean is None when its group is empty.
    """

    missed: list[int]
    missed_mean: float | None
    detected_mean: float | None
    distances: list[float] = field(default_factory=list)


def center_distance(gt: WindowAnnotation, image_side: float) -> float:
    cx, cy = gt.bbox.center
    c = image_side / 2.0
    return math.hypot(cx - c, cy - c) / (image_side * math.sqrt(2) / 2)


def missed_center_bias(dets: Sequence[Detection], gts: Sequence[WindowAnnotation],
                       image_side: float | Mapping[str, float], iou_threshold: float = 0.5, p_min: float = 0.0,
                       mode: str = "box") -> CenterBias:
    kept = [d for d in dets if d.score >= p_min]
    m = match_detections(kept, gts, iou_threshold, mode)
    missed = set(m.unmatched_gts)
    if isinstance(image_side, Mapping):
        dist = [center_distance(g, image_side[g.image_id]) for g in gts]
    else:
        dist = [center_distance(g, image_side) for g in gts]
    miss_d = [dist[j] for j in range(len(gts)) if j in missed]
    hit_d = [dist[j] for j in range(len(gts)) if j not in missed]
    return CenterBias(
        missed=sorted(missed),
        missed_mean=float(np.mean(miss_d)) if miss_d else None,
        detected_mean=float(np.mean(hit_d)) if hit_d else None,
        distances=dist,
    )


def diagnostics(dets: Sequence[Detection], gts: Sequence[WindowAnnotation],
                image_side: float | Mapping[str, float],
                iou_threshold: float = 0.5, p_min: float = 0.0, mode: str = "box") -> dict:
    """JSON-ready summary of double detections and missed-window centre bias."""
    kept_idx = [i for i, d in enumerate(dets) if d.score >= p_min]
    kept = [dets[i] for i in kept_idx]
    doubles = find_double_detections(kept, gts, iou_threshold, mode)
    bias = missed_center_bias(kept, gts, image_side, iou_threshold, 0.0, mode)
    return {
        "p_min": p_min,
        "iou_threshold": iou_threshold,
        "doubles": [{"gt": d.gt_index, "image_id": gts[d.gt_index].image_id,
                     "bbox": gts[d.gt_index].bbox.to_list(), "count": d.count,
                     "detections": [kept_idx[i] for i in d.det_indices]} for d in doubles],
        "missed": [{"gt": j, "image_id": gts[j].image_id, "bbox": gts[j].bbox.to_list()}
                   for j in bias.missed],
        "missed_center_mean": bias.missed_mean,
        "detected_center_mean": bias.detected_mean,
    }
