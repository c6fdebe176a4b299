"""Detection records, YOLO label files and detection-quality metrics.

Metrics follow the usual single-pass protocol: predictions are matched
greedily to ground truth in descending confidence, the global TP/FP sequence
is turned into a precision/recall curve, and AP is the area under its
monotone precision envelope (all-point interpolation).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import EmptyInputError, ParseError, ValidationError

IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))


@dataclass(frozen=True)
class BBoxNorm:
    """Box centre and size, normalised to the image dimensions."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("cx", "cy", "w", "h"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or math.isnan(v):
                raise ValidationError(f"{name} must be a number, got {v!r}")
        if not (0.0 <= self.cx <= 1.0 and 0.0 <= self.cy <= 1.0):
            raise ValidationError(f"box centre ({self.cx}, {self.cy}) outside [0, 1]")
        if not (0.0 < self.w <= 1.0 and 0.0 < self.h <= 1.0):
            raise ValidationError(f"box size ({self.w}, {self.h}) outside (0, 1]")

    @classmethod
    def from_corners(cls, x0: float, y0: float, x1: float, y1: float) -> BBoxNorm:
        return cls((x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0)

    def corners(self) -> tuple[float, float, float, float]:
        """(x_min, y_min, x_max, y_max), clipped to the unit square."""
        return (
            max(0.0, self.cx - self.w / 2),
            max(0.0, self.cy - self.h / 2),
            min(1.0, self.cx + self.w / 2),
            min(1.0, self.cy + self.h / 2),
        )


@dataclass(frozen=True)
class Detection:
    category: int
    bbox: BBoxNorm
    confidence: Optional[float] = None

    def __post_init__(self):
        if self.category < 0:
            raise ValidationError(f"category must be >= 0, got {self.category}")
        if self.confidence is not None and not 0.0 <= self.confidence <= 1.0:
            raise ValidationError(f"confidence {self.confidence} outside [0, 1]")

    @property
    def score(self) -> float:
        """Confidence used for ranking; unscored boxes rank as certain."""
        return 1.0 if self.confidence is None else self.confidence


def parse_yolo_line(line: str, lineno: int = 0, path=None) -> Optional[Detection]:
    fields = line.split()
    if not fields:
        return None
    if len(fields) not in (5, 6):
        raise ParseError(
            f"expected 'category cx cy w h [confidence]', got {len(fields)} fields",
            line=lineno, path=path,
        )
    try:
        category = int(fields[0])
        nums = [float(f) for f in fields[1:]]
    except ValueError as exc:
        raise ParseError(str(exc), line=lineno, path=path) from None
    try:
        bbox = BBoxNorm(*nums[:4])
        return Detection(category, bbox, nums[4] if len(nums) == 5 else None)
    except ValidationError as exc:
        where = f"{path}:" if path is not None else ""
        raise ValidationError(f"{where}{lineno}: {exc}") from None


def parse_yolo_text(text: str, path=None) -> list[Detection]:
    dets = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        det = parse_yolo_line(line, lineno, path)
        if det is not None:
            dets.append(det)
    return dets


def parse_yolo_file(path) -> list[Detection]:
    path = Path(path)
    return parse_yolo_text(path.read_text(encoding="utf-8"), path=path)


def format_yolo(dets) -> str:
    lines = []
    for d in dets:
        b = d.bbox
        row = f"{d.category} {b.cx!r} {b.cy!r} {b.w!r} {b.h!r}"
        if d.confidence is not None:
            row += f" {d.confidence!r}"
        lines.append(row)
    return "".join(line + "\n" for line in lines)


def write_yolo_file(dets, path) -> None:
    Path(path).write_text(format_yolo(dets), encoding="utf-8")


def read_detection_dir(directory) -> dict[str, list[Detection]]:
    """Map file stem -> detections for every ``*.txt`` in ``directory``."""
    directory = Path(directory)
    return {p.stem: parse_yolo_file(p) for p in sorted(directory.glob("*.txt"))}


def iou(a: BBoxNorm, b: BBoxNorm) -> float:
    ax0, ay0, ax1, ay1 = a.corners()
    bx0, by0, bx1, by1 = b.corners()
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    if union <= 0:
        return 0.0
    return min(1.0, inter / union)


@dataclass
class MatchResult:
    """Outcome of matching one image's predictions against its ground truth.

    ``tp`` is indexed like the input predictions; ``gt_for_pred`` holds the
    matched ground-truth index or None.
    """

    tp: list[bool]
    gt_for_pred: list[Optional[int]]
    fn: int

    @property
    def n_tp(self) -> int:
        return sum(self.tp)

    @property
    def n_fp(self) -> int:
        return len(self.tp) - self.n_tp


def match_detections(preds, gts, iou_thresh: float = 0.5) -> MatchResult:
    order = sorted(range(len(preds)), key=lambda i: -preds[i].score)
    taken = [False] * len(gts)
    tp = [False] * len(preds)
    gt_for_pred: list[Optional[int]] = [None] * len(preds)
    for i in order:
        best, best_iou = None, iou_thresh
        for j, gt in enumerate(gts):
            if taken[j] or gt.category != preds[i].category:
                continue
            v = iou(preds[i].bbox, gt.bbox)
            if v >= best_iou and (best is None or v > best_iou):
                best, best_iou = j, v
        if best is not None:
            taken[best] = True
            tp[i] = True
            gt_for_pred[i] = best
    return MatchResult(tp, gt_for_pred, len(gts) - sum(taken))


def average_precision(ranked_tp, n_gt: int) -> float:
    """All-point interpolated AP of a confidence-ranked TP/FP sequence.

    ``ranked_tp`` must already be sorted best-first.
    """
    ranked_tp = list(ranked_tp)
    if n_gt == 0:
        return 0.0 if ranked_tp else 1.0
    if not ranked_tp:
        return 0.0
    precision = []
    recall = []
    cum_tp = 0
    for k, hit in enumerate(ranked_tp, start=1):
        cum_tp += bool(hit)
        precision.append(cum_tp / k)
        recall.append(cum_tp / n_gt)
    # precision envelope, sweeping from the low-confidence end
    for k in range(len(precision) - 2, -1, -1):
        precision[k] = max(precision[k], precision[k + 1])
    ap = 0.0
    prev_r = 0.0
    for p, r in zip(precision, recall):
        ap += (r - prev_r) * p
        prev_r = r
    return ap


@dataclass
class EvalReport:
    precision: float
    recall: float
    ap50: float
    map50_95: float
    per_threshold: list = field(default_factory=list)
    tp: int = 0
    fp: int = 0
    fn: int = 0
    conf_threshold: float = 0.25
    images: int = 0
    missing_predictions: list = field(default_factory=list)
    missing_ground_truth: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "ap50": self.ap50,
            "map50_95": self.map50_95,
            "per_threshold": [{"iou": t, "ap": ap} for t, ap in self.per_threshold],
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "images": self.images,
            "missing_predictions": list(self.missing_predictions),
            "missing_ground_truth": list(self.missing_ground_truth),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_table(self) -> str:
        rows = [
            ("images", str(self.images)),
            ("precision", f"{self.precision:.4f}"),
            ("recall", f"{self.recall:.4f}"),
            ("mAP50", f"{self.ap50:.4f}"),
            ("mAP50-95", f"{self.map50_95:.4f}"),
            ("tp / fp / fn", f"{self.tp} / {self.fp} / {self.fn}"),
        ]
        rows += [(f"AP@{t:.2f}", f"{ap:.4f}") for t, ap in self.per_threshold]
        width = max(len(k) for k, _ in rows)
        return "".join(f"{k:<{width}}  {v}\n" for k, v in rows)


def _ranked(matches_by_image, preds_by_image, category):
    """Global (score desc, stem asc, input order) TP sequence for one category."""
    rows = []
    for stem in sorted(matches_by_image):
        preds = preds_by_image[stem]
        m = matches_by_image[stem]
        for i, p in enumerate(preds):
            if p.category == category:
                rows.append((-p.score, stem, i, m.tp[i]))
    rows.sort(key=lambda r: r[:3])
    return [r[3] for r in rows]


def evaluate_sets(
    preds_by_image: dict,
    gts_by_image: dict,
    iou_thresholds=IOU_THRESHOLDS,
    conf_threshold: float = 0.25,
) -> EvalReport:
    """Evaluate predictions against ground truth, both keyed by image stem.

    Stems present on only one side are reported and skipped.  AP is averaged
    over categories that occur in either set.
    """
    stems = sorted(set(preds_by_image) & set(gts_by_image))
    missing_preds = sorted(set(gts_by_image) - set(preds_by_image))
    missing_gts = sorted(set(preds_by_image) - set(gts_by_image))
    if not stems:
        raise EmptyInputError("no images with both predictions and ground truth")
    iou_thresholds = tuple(iou_thresholds)
    if not iou_thresholds:
        raise EmptyInputError("at least one IoU threshold is required")
    preds = {s: preds_by_image[s] for s in stems}
    gts = {s: gts_by_image[s] for s in stems}
    categories = sorted(
        {d.category for s in stems for d in preds[s]} | {d.category for s in stems for d in gts[s]}
    )

    per_threshold = []
    op_point = None
    for thr in iou_thresholds:
        matches = {s: match_detections(preds[s], gts[s], thr) for s in stems}
        if categories:
            aps = []
            for c in categories:
                n_gt = sum(1 for s in stems for d in gts[s] if d.category == c)
                aps.append(average_precision(_ranked(matches, preds, c), n_gt))
            ap = sum(aps) / len(aps)
        else:
            ap = 1.0
        per_threshold.append((thr, ap))
        if op_point is None or thr == 0.5:
            op_point = (thr, matches)

    _, matches = op_point
    tp = fp = 0
    for s in stems:
        for p, hit in zip(preds[s], matches[s].tp):
            if p.score >= conf_threshold:
                tp += hit
                fp += not hit
    n_gt = sum(len(gts[s]) for s in stems)
    fn = n_gt - tp
    ap50 = dict(per_threshold).get(0.5, per_threshold[0][1])
    return EvalReport(
        precision=tp / (tp + fp) if tp + fp else 0.0,
        recall=tp / n_gt if n_gt else 0.0,
        ap50=ap50,
        map50_95=sum(ap for _, ap in per_threshold) / len(per_threshold),
        per_threshold=per_threshold,
        tp=tp,
        fp=fp,
        fn=fn,
        conf_threshold=conf_threshold,
        images=len(stems),
        missing_predictions=missing_preds,
        missing_ground_truth=missing_gts,
    )


def evaluate(preds_dir, gts_dir, iou_thresholds=IOU_THRESHOLDS, conf_threshold: float = 0.25) -> EvalReport:
    return evaluate_sets(
        read_detection_dir(preds_dir),
        read_detection_dir(gts_dir),
        iou_thresholds=iou_thresholds,
        conf_threshold=conf_threshold,
    )


def best_ball_per_frame(dets) -> Optional[Detection]:
    """Highest-confidence detection; the first one wins ties."""
    best = None
    for d in dets:
        if best is None or d.score > best.score:
            best = d
    return best
