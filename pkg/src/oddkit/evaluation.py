"""VOC-style mean-average-precision evaluation of detection dumps.

Detections are ranked by confidence per label across the whole dataset and
greedily matched against unmatched same-label ground truth on their frame;
average precision integrates the precision envelope over recall (all-point
interpolation by default, the older 11-point variant on request).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import JoinMismatchError, ValidationError
from .model import Detection, DetectionDump, FrameKey, VideoDataset, iou


class Interpolation(enum.Enum):
    ALL_POINT = "all"
    ELEVEN_POINT = "eleven"


@dataclass(frozen=True)
class EvalConfig:
    iou_threshold: float = 0.5
    interpolation: Interpolation = Interpolation.ALL_POINT

    def __post_init__(self) -> None:
        if not 0.0 < self.iou_threshold <= 1.0:
            raise ValidationError(f"iou_threshold must lie in (0, 1], got {self.iou_threshold}")


@dataclass(frozen=True)
class FrameCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0


@dataclass(frozen=True)
class EvalReport:
    """Per-label average precision, their mean, and per-frame match counts.

    The mean is taken over labels with at least one ground-truth box;
    labels that only ever appear in detections contribute false positives
    to the frame counts but no AP term.
    """

    per_label_ap: dict[str, float]
    mean_ap: float
    frame_counts: dict[FrameKey, FrameCounts] = field(default_factory=dict)


def average_precision(tp_flags: Sequence[bool], n_positive: int, interpolation: Interpolation) -> float:
    """AP from confidence-ranked true-positive flags and the positive count."""
    if n_positive == 0:
        return 0.0
    if not tp_flags:
        return 0.0
    tp = np.cumsum(np.asarray(tp_flags, dtype=np.float64))
    fp = np.cumsum(~np.asarray(tp_flags, dtype=bool))
    recall = tp / n_positive
    precision = tp / np.maximum(tp + fp, np.finfo(np.float64).eps)

    if interpolation is Interpolation.ELEVEN_POINT:
        ap = 0.0
        for t in np.arange(0.0, 1.1, 0.1):
            mask = recall >= t
            ap += (np.max(precision[mask]) if mask.any() else 0.0) / 11.0
        return float(ap)

    # All-point: sentinel-pad, walk the precision envelope right to left,
    # then integrate over the recall steps.
    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    for i in range(mpre.size - 1, 0, -1):
        mpre[i - 1] = max(mpre[i - 1], mpre[i])
    steps = np.where(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def _detection_sort_key(key: FrameKey, det: Detection):
    # Content-based ranking: ties on confidence resolve identically no
    # matter how the input lists were ordered.
    b = det.bbox
    return (-det.confidence, key.video_id, key.index, b.x1, b.y1, b.x2, b.y2)


def _check_join(ds: VideoDataset, dump: DetectionDump, what: str) -> None:
    known = {frame.key for frame in ds.iter_frames()}
    strays = [key for key in dump if key not in known]
    if strays:
        k = strays[0]
        raise JoinMismatchError(
            f"{what} contains {len(strays)} frame(s) absent from the dataset, e.g. {k.video_id}[{k.index}]"
        )


def _match_dump(ds: VideoDataset, dump: DetectionDump, cfg: EvalConfig):
    """Greedy matching shared by evaluate and frame_diff.

    Returns (per-label ranked TP flags, per-label ground-truth counts,
    per-frame counts).
    """
    gt_boxes: dict[tuple[FrameKey, str], list] = {}
    n_gt: dict[str, int] = {}
    counts: dict[FrameKey, list[int]] = {}
    for frame in ds.iter_frames():
        counts[frame.key] = [0, 0, 0]
        for gt in frame.ground_truth:
            gt_boxes.setdefault((frame.key, gt.label), []).append(gt.bbox)
            n_gt[gt.label] = n_gt.get(gt.label, 0) + 1

    per_label: dict[str, list[tuple]] = {}
    for key, boxes in dump.items():
        for det in boxes:
            per_label.setdefault(det.label, []).append((key, det))

    tp_flags: dict[str, list[bool]] = {}
    for label, entries in per_label.items():
        entries.sort(key=lambda e: _detection_sort_key(*e))
        claimed: dict[tuple[FrameKey, str], list[bool]] = {}
        flags = []
        for key, det in entries:
            candidates = gt_boxes.get((key, label), [])
            taken = claimed.setdefault((key, label), [False] * len(candidates))
            best_iou, best_j = 0.0, -1
            for j, box in enumerate(candidates):
                if taken[j]:
                    continue
                ov = iou(det.bbox, box)
                if ov > best_iou:
                    best_iou, best_j = ov, j
            hit = best_j >= 0 and best_iou >= cfg.iou_threshold
            if hit:
                taken[best_j] = True
                counts[key][0] += 1
            else:
                counts[key][1] += 1
            flags.append(hit)
        tp_flags[label] = flags

    for frame in ds.iter_frames():
        counts[frame.key][2] = len(frame.ground_truth) - counts[frame.key][0]
    return tp_flags, n_gt, {k: FrameCounts(*v) for k, v in counts.items()}


def evaluate(ds: VideoDataset, dump: DetectionDump, cfg: EvalConfig = EvalConfig()) -> EvalReport:
    """Score a detection dump against the dataset's ground truth."""
    _check_join(ds, dump, "dump")
    tp_flags, n_gt, frame_counts = _match_dump(ds, dump, cfg)
    per_label_ap = {
        label: average_precision(tp_flags.get(label, []), n, cfg.interpolation)
        for label, n in sorted(n_gt.items())
    }
    mean_ap = float(np.mean(list(per_label_ap.values()))) if per_label_ap else 0.0
    return EvalReport(per_label_ap, mean_ap, frame_counts)


@dataclass(frozen=True)
class FrameDiffRow:
    key: FrameKey
    a: FrameCounts
    b: FrameCounts


def frame_diff(
    ds: VideoDataset, a: DetectionDump, b: DetectionDump, cfg: EvalConfig = EvalConfig()
) -> list[FrameDiffRow]:
    """Per-frame (tp, fp, fn) comparison of two dumps under the same matcher."""
    _check_join(ds, a, "dump a")
    _check_join(ds, b, "dump b")
    _, _, counts_a = _match_dump(ds, a, cfg)
    _, _, counts_b = _match_dump(ds, b, cfg)
    return [FrameDiffRow(frame.key, counts_a[frame.key], counts_b[frame.key]) for frame in ds.iter_frames()]
