"""Per-image detection-difficulty scoring.

A frame's difficulty is computed from the discrepancy between a detector's
output and the ground truth. Each detection is matched against same-label
ground truth and categorized as positive, near-positive, multi-positive, or
negative; confidence-weighted counts of those categories yield a weighted
precision and recall, and the difficulty score is one minus their harmonic
mean. A perfectly detected frame scores ~0, a frame with ground truth but
no usable detections scores 1.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import JoinMismatchError, ValidationError
from .model import Detection, DetectionDump, FrameKey, GroundTruthBox, VideoDataset, iou

logger = logging.getLogger("oddkit.metric")


@dataclass(frozen=True)
class MetricConfig:
    """Thresholds and category toggles for the difficulty metric.

    Attributes:
        t_near: lower IoU bound for the near-positive band.
        t_pos: IoU at or above which a detection is positive-side.
        epsilon: tiny stabilizer added to the harmonic-mean denominator.
        use_near_positive: count near-positive detections at half weight
            instead of demoting them to negatives.
        use_multi_positive: count duplicate high-IoU detections as
            positives instead of negatives.
    """

    t_near: float = 0.3
    t_pos: float = 0.5
    epsilon: float = 1e-6
    use_near_positive: bool = True
    use_multi_positive: bool = True

    def __post_init__(self) -> None:
        if not 0.0 < self.t_near < self.t_pos <= 1.0:
            raise ValidationError(f"need 0 < t_near < t_pos <= 1, got t_near={self.t_near}, t_pos={self.t_pos}")
        if not 0.0 < self.epsilon < 1e-3:
            raise ValidationError(f"epsilon must lie in (0, 1e-3), got {self.epsilon}")


class MatchCategory(enum.Enum):
    POSITIVE = "positive"
    NEAR_POSITIVE = "near_positive"
    MULTI_POSITIVE = "multi_positive"
    NEGATIVE = "negative"


@dataclass(frozen=True)
class CategorizedDetection:
    """A detection with its match category and best same-label IoU."""

    detection: Detection
    category: MatchCategory
    best_iou: float
    matched_gt_index: int | None = None


@dataclass(frozen=True)
class OddScore:
    """Difficulty value in [0, 1] plus its precision/recall components."""

    value: float
    wp: float
    wr: float


def categorize(
    preds: Sequence[Detection],
    gts: Sequence[GroundTruthBox],
    cfg: MetricConfig = MetricConfig(),
) -> list[CategorizedDetection]:
    """Assign every detection exactly one match category.

    Matching is per label: for each ground-truth box, the same-label
    detection with the highest IoU is elected positive when that IoU
    reaches ``t_pos`` (a detection elected by several boxes stays a single
    positive). Non-elected detections whose best same-label IoU reaches
    ``t_pos`` are multi-positive, those landing in ``[t_near, t_pos)`` are
    near-positive, and everything else (including labels with no ground
    truth) is negative. Ties in the election go to the detection ranked
    first by descending confidence, then input order.
    """
    if not preds:
        return []

    # Canonical detection order; the returned list follows it so output is
    # independent of how the caller ordered the input.
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].confidence, i))
    by_label: dict[str, list[int]] = {}
    for rank, i in enumerate(order):
        by_label.setdefault(preds[i].label, []).append(rank)
    gt_by_label: dict[str, list[int]] = {}
    for j, gt in enumerate(gts):
        gt_by_label.setdefault(gt.label, []).append(j)

    best_iou = [0.0] * len(order)
    elected: dict[int, int] = {}  # canonical rank -> lowest gt index it won
    for label, pred_ranks in by_label.items():
        gt_indices = gt_by_label.get(label, [])
        if not gt_indices:
            continue
        matrix = {
            rank: [iou(preds[order[rank]].bbox, gts[j].bbox) for j in gt_indices] for rank in pred_ranks
        }
        for rank in pred_ranks:
            best_iou[rank] = max(matrix[rank])
        for col, j in enumerate(gt_indices):
            winner = min(pred_ranks, key=lambda rank: (-matrix[rank][col], rank))
            if matrix[winner][col] >= cfg.t_pos and winner not in elected:
                elected[winner] = j

    out: list[CategorizedDetection] = []
    for rank in range(len(order)):
        det = preds[order[rank]]
        bi = best_iou[rank]
        if rank in elected:
            category = MatchCategory.POSITIVE
            matched: int | None = elected[rank]
        elif bi >= cfg.t_pos:
            category = MatchCategory.MULTI_POSITIVE if cfg.use_multi_positive else MatchCategory.NEGATIVE
            matched = None
        elif bi >= cfg.t_near:
            category = MatchCategory.NEAR_POSITIVE if cfg.use_near_positive else MatchCategory.NEGATIVE
            matched = None
        else:
            category = MatchCategory.NEGATIVE
            matched = None
        out.append(CategorizedDetection(det, category, bi, matched))
    return out


def weighted_samples(cats: Iterable[CategorizedDetection], p: int) -> float:
    """Confidence-weighted sample count for the positive (p=1) or negative (p=0) side.

    Positives and multi-positives contribute their full confidence,
    near-positives half of it. Uses exact summation so the result does not
    depend on iteration order.
    """
    if p not in (0, 1):
        raise ValidationError(f"p must be 0 or 1, got {p!r}")
    terms = []
    for cat in cats:
        c = cat.detection.confidence
        if p == 1:
            if cat.category is MatchCategory.POSITIVE or cat.category is MatchCategory.MULTI_POSITIVE:
                terms.append(c)
            elif cat.category is MatchCategory.NEAR_POSITIVE:
                terms.append(0.5 * c)
        elif cat.category is MatchCategory.NEGATIVE:
            terms.append(c)
    return math.fsum(terms)


def weighted_precision(ws_pos: float, ws_neg: float, has_gt: bool) -> float:
    """Share of detection weight on the positive side.

    A frame without ground truth scores 1 by definition. A frame that has
    ground truth but no detections at all scores 0: the natural limit even
    though live detectors always emit something, replayed dumps may not.
    """
    if not has_gt:
        return 1.0
    total = ws_pos + ws_neg
    if total == 0.0:
        return 0.0
    return ws_pos / total


def weighted_recall(ws_pos: float, total_gt: int) -> float:
    """Positive-side weight relative to the frame's ground-truth box count."""
    if total_gt == 0:
        return 1.0
    return ws_pos / max(float(total_gt), ws_pos)


def odd_score(
    preds: Sequence[Detection],
    gts: Sequence[GroundTruthBox],
    cfg: MetricConfig = MetricConfig(),
) -> OddScore:
    """Difficulty of one frame: 1 - 2*wp*wr / (wp + wr + epsilon)."""
    cats = categorize(preds, gts, cfg)
    ws_pos = weighted_samples(cats, 1)
    ws_neg = weighted_samples(cats, 0)
    wp = weighted_precision(ws_pos, ws_neg, len(gts) > 0)
    wr = weighted_recall(ws_pos, len(gts))
    value = 1.0 - 2.0 * wp * wr / (wp + wr + cfg.epsilon)
    return OddScore(value, wp, wr)


def odd_loss(gt_score: float, predicted: float) -> float:
    """Smooth-L1 regression loss between a target score and a prediction.

    The prediction is magnified by 10 before taking the difference, so
    callers emulating a trainer supply the ground-truth side pre-scaled to
    match. Quadratic within |z| < 1, linear outside.
    """
    z = gt_score - 10.0 * predicted
    az = abs(z)
    if az < 1.0:
        return 0.5 * z * z
    return az - 0.5


def label_dataset(
    ds: VideoDataset,
    dump: DetectionDump,
    cfg: MetricConfig = MetricConfig(),
) -> dict[FrameKey, float]:
    """Compute one difficulty score per dataset frame from a detection dump.

    Frames absent from the dump are scored as if the detector returned
    nothing (logged as a warning); dump entries for unknown frames are a
    hard join error. The returned mapping follows dataset order.
    """
    known = set()
    scores: dict[FrameKey, float] = {}
    missing = 0
    for frame in ds.iter_frames():
        known.add(frame.key)
        boxes = dump.get(frame.key)
        if boxes is None:
            missing += 1
            boxes = []
        scores[frame.key] = odd_score(boxes, frame.ground_truth, cfg).value
    if missing:
        logger.warning("dump covers %d/%d frames; missing frames scored as zero detections", len(scores) - missing, len(scores))
    strays = [key for key in dump if key not in known]
    if strays:
        k = strays[0]
        raise JoinMismatchError(
            f"dump contains {len(strays)} frame(s) absent from the dataset, e.g. {k.video_id}[{k.index}]"
        )
    return scores
