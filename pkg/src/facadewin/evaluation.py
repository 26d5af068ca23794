"""Greedy IoU matching, precision/recall and AP50 for single-class detections."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .annotations import Detection, WindowAnnotation, group_by_image
from .geometry import box_iou_matrix, mask_iou_matrix

MODES = ("box", "mask")


@dataclass
class MatchResult:
    """Outcome of greedy matching.

    ``order`` lists detection indices by descending score (input order on
    ties).  ``tp`` and ``matched_gt`` are indexed like the input detections;
    ``matched_gt[i]`` is -1 for false positives.
    """

    order: np.ndarray
    tp: np.ndarray
    matched_gt: np.ndarray
    unmatched_gts: list[int]

    @property
    def n_tp(self) -> int:
        return int(self.tp.sum())

    @property
    def n_fp(self) -> int:
        return int(len(self.tp) - self.tp.sum())

    @property
    def n_fn(self) -> int:
        return len(self.unmatched_gts)


@dataclass(frozen=True)
class EvalReport:
    recall: float
    precision: float
    ap50: float
    tp: int
    fp: int
    fn: int
    n_images: int
    mode: str
    p_min: float = 0.0

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> "EvalReport":
        fields = {k: doc[k] for k in ("recall", "precision", "ap50")}
        return cls(tp=int(doc.get("tp", 0)), fp=int(doc.get("fp", 0)), fn=int(doc.get("fn", 0)),
                   n_images=int(doc.get("n_images", 0)), mode=doc.get("mode", "box"),
                   p_min=float(doc.get("p_min", 0.0)), **{k: float(v) for k, v in fields.items()})

    def csv_row(self, run: str = "") -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([run, self.mode, self.p_min, self.recall, self.precision, self.ap50,
                         self.tp, self.fp, self.fn, self.n_images])
        return buf.getvalue()


CSV_HEADER = "run,mode,p_min,recall,precision,ap50,tp,fp,fn,n_images\n"


@dataclass(frozen=True)
class RunDelta:
    recall: float
    precision: float
    ap50: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.recall, self.precision, self.ap50)


def _check_mode(mode: str):
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def score_order(dets: Sequence[Detection]) -> np.ndarray:
    """Indices by descending score; stable so ties keep input order."""
    scores = np.array([d.score for d in dets], dtype=float)
    return np.argsort(-scores, kind="stable")


def iou_matrix(dets: Sequence[Detection], gts: Sequence[WindowAnnotation],
               mode: str = "box") -> np.ndarray:
    _check_mode(mode)
    if mode == "box":
        return box_iou_matrix([d.bbox for d in dets], [g.bbox for g in gts])
    missing = [i for i, d in enumerate(dets) if d.mask is None]
    if missing:
        raise ValueError(f"mask mode needs masks on every detection; missing for {missing[:5]}")
    return mask_iou_matrix([d.mask for d in dets], [g.mask for g in gts])


def match_detections(dets: Sequence[Detection], gts: Sequence[WindowAnnotation],
                     iou_threshold: float = 0.5, mode: str = "box") -> MatchResult:
    """Greedy one-to-one matching, highest score first.

    Each detection claims the unclaimed ground truth on its image with the
    highest IoU >= ``iou_threshold``; equal IoUs go to the lower GT index.
    """
    _check_mode(mode)
    order = score_order(dets)
    tp = np.zeros(len(dets), dtype=bool)
    matched = np.full(len(dets), -1, dtype=np.int64)
    claimed = np.zeros(len(gts), dtype=bool)
    gt_groups = group_by_image(gts)
    det_groups = group_by_image(dets)
    rank = np.empty(len(dets), dtype=np.int64)
    rank[order] = np.arange(len(dets))

    for image_id, d_idx in det_groups.items():
        g_idx = gt_groups.get(image_id, [])
        if not g_idx:
            continue
        d_idx = sorted(d_idx, key=lambda i: rank[i])
        ious = iou_matrix([dets[i] for i in d_idx], [gts[j] for j in g_idx], mode)
        taken = np.zeros(len(g_idx), dtype=bool)
        for row, di in enumerate(d_idx):
            cand = np.where(taken | (ious[row] < iou_threshold), -np.inf, ious[row])
            best = int(np.argmax(cand))  # argmax returns the first maximum
            if cand[best] == -np.inf:
                continue
            taken[best] = True
            tp[di] = True
            matched[di] = g_idx[best]
            claimed[g_idx[best]] = True
    return MatchResult(order=order, tp=tp, matched_gt=matched,
                       unmatched_gts=[j for j in range(len(gts)) if not claimed[j]])


def precision_recall_curve(dets: Sequence[Detection], gts: Sequence[WindowAnnotation],
                           mode: str = "box", iou_threshold: float = 0.5
                           ) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative (recall, precision) after each detection in score order."""
    if not dets:
        return np.zeros(0), np.zeros(0)
    m = match_detections(dets, gts, iou_threshold, mode)
    hits = m.tp[m.order].astype(np.int64)
    ctp = np.cumsum(hits)
    cfp = np.cumsum(1 - hits)
    recall = ctp / len(gts) if len(gts) else np.zeros(len(ctp))
    precision = ctp / (ctp + cfp)
    return recall, precision


def envelope_ap(recall: np.ndarray, precision: np.ndarray) -> float:
    """Area under the right-to-left running maximum of precision."""
    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def sampled_ap(recall: np.ndarray, precision: np.ndarray, n_points: int = 101) -> float:
    """COCO-style AP: mean envelope precision at ``n_points`` recall levels."""
    levels = np.linspace(0.0, 1.0, n_points)
    if recall.size == 0:
        return 0.0
    env = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, levels, side="left")
    vals = np.where(idx < len(env), env[np.minimum(idx, len(env) - 1)], 0.0)
    return float(vals.mean())


def ap50(dets: Sequence[Detection], gts: Sequence[WindowAnnotation], mode: str = "box",
         coco101: bool = False, iou_threshold: float = 0.5) -> float:
    """Average precision at IoU 0.5 over the full score ranking."""
    _check_mode(mode)
    if not gts:
        return 1.0 if not dets else 0.0
    if not dets:
        return 0.0
    recall, precision = precision_recall_curve(dets, gts, mode, iou_threshold)
    return sampled_ap(recall, precision) if coco101 else envelope_ap(recall, precision)


def counts_at(dets: Sequence[Detection], gts: Sequence[WindowAnnotation], p_min: float = 0.0,
              mode: str = "box", iou_threshold: float = 0.5) -> tuple[int, int, int]:
    """(tp, fp, fn) after discarding detections scoring below ``p_min``."""
    _check_mode(mode)
    m = match_detections([d for d in dets if d.score >= p_min], gts, iou_threshold, mode)
    return m.n_tp, m.n_fp, m.n_fn


def evaluate(dets: Sequence[Detection], gts: Sequence[WindowAnnotation], p_min: float = 0.0,
             mode: str = "box", image_ids: Sequence[str] | None = None,
             coco101: bool = False, iou_threshold: float = 0.5) -> EvalReport:
    """Precision and recall at ``p_min``; AP50 over all detections regardless."""
    tp, fp, fn = counts_at(dets, gts, p_min, mode, iou_threshold)
    if image_ids is None:
        image_ids = {g.image_id for g in gts} | {d.image_id for d in dets}
    return EvalReport(
        recall=tp / (tp + fn) if tp + fn else 1.0,
        precision=tp / (tp + fp) if tp + fp else 1.0,
        ap50=ap50(dets, gts, mode, coco101=coco101, iou_threshold=iou_threshold),
        tp=tp, fp=fp, fn=fn, n_images=len(set(image_ids)), mode=mode, p_min=float(p_min),
    )


def compare_runs(standard: EvalReport, optimised: EvalReport) -> RunDelta:
    """Optimised minus standard, rounded to two decimals."""
    if standard.mode != optimised.mode:
        raise ValueError(f"cannot compare {standard.mode} report with {optimised.mode} report")

    def delta(a, b):
        return round(b - a, 2) + 0.0  # + 0.0 turns -0.0 into 0.0

    return RunDelta(recall=delta(standard.recall, optimised.recall),
                    precision=delta(standard.precision, optimised.precision),
                    ap50=delta(standard.ap50, optimised.ap50))


def report_from_scores(recall: float, precision: float, ap: float, mode: str = "box") -> EvalReport:
    """A report carrying only the headline scores, e.g. from a published table."""
    return EvalReport(recall=recall, precision=precision, ap50=ap, tp=0, fp=0, fn=0,
                      n_images=0, mode=mode)
