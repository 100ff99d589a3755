"""Geometric and dataset domain types shared by every other module.

All types are immutable after construction and every operation here is a
pure function, so values can be shared freely between threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box given by continuous corner coordinates.

    Area is (x2 - x1) * (y2 - y1) with no "+1" pixel convention; a valid
    box has strictly positive area and finite coordinates.
    """

    x1: float
    y1: float
    x2: float
    y2: float

    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def as_list(self) -> list[float]:
        return [self.x1, self.y1, self.x2, self.y2]

    def is_valid(self) -> bool:
        coords = (self.x1, self.y1, self.x2, self.y2)
        return all(math.isfinite(c) for c in coords) and self.x2 > self.x1 and self.y2 > self.y1


@dataclass(frozen=True)
class Detection:
    """One predicted box with its category label and confidence in [0, 1]."""

    bbox: BoundingBox
    label: str
    confidence: float


@dataclass(frozen=True)
class GroundTruthBox:
    """One annotated box with a non-empty category label."""

    bbox: BoundingBox
    label: str


@dataclass(frozen=True, order=True)
class FrameKey:
    """Identifies a frame by video id and position within the video."""

    video_id: str
    index: int


@dataclass(frozen=True)
class FrameRecord:
    """Ground truth for one frame; the annotation list may be empty."""

    key: FrameKey
    ground_truth: tuple[GroundTruthBox, ...] = ()
    image_path: str | None = None


@dataclass(frozen=True)
class Video:
    """One video: an id plus its frames ordered by ascending index."""

    id: str
    frames: tuple[FrameRecord, ...] = ()


@dataclass(frozen=True)
class VideoDataset:
    """Ordered collection of videos with per-frame ground truth."""

    videos: tuple[Video, ...] = ()

    def iter_frames(self) -> Iterator[FrameRecord]:
        """Yield frames in dataset order: video order, then frame index."""
        for video in self.videos:
            yield from video.frames

    def frame_map(self) -> dict[FrameKey, FrameRecord]:
        return {frame.key: frame for frame in self.iter_frames()}

    @property
    def n_frames(self) -> int:
        return sum(len(v.frames) for v in self.videos)


# A detection dump is a persisted mapping from frame to its detected boxes.
DetectionDump = dict[FrameKey, list[Detection]]


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection-over-union of two valid boxes.

    Returns 0.0 for disjoint boxes and 1.0 for identical ones; symmetric in
    its arguments. Valid inputs guarantee a strictly positive union.
    """
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    if ix <= 0.0:
        return 0.0
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iy <= 0.0:
        return 0.0
    inter = ix * iy
    union = a.area() + b.area() - inter
    return inter / union


@dataclass(frozen=True)
class Violation:
    """One invariant violation found by a validator, with its location."""

    key: FrameKey | None
    field: str
    message: str

    def __str__(self) -> str:
        where = f"{self.key.video_id}[{self.key.index}]" if self.key else "<dataset>"
        return f"{where}: {self.field}: {self.message}"


def _check_box(key: FrameKey, field_name: str, box: BoundingBox, out: list[Violation]) -> None:
    coords = (box.x1, box.y1, box.x2, box.y2)
    if not all(math.isfinite(c) for c in coords):
        out.append(Violation(key, field_name, f"non-finite coordinates {coords}"))
        return
    if box.x2 <= box.x1:
        out.append(Violation(key, field_name, f"x2 ({box.x2}) must be > x1 ({box.x1})"))
    if box.y2 <= box.y1:
        out.append(Violation(key, field_name, f"y2 ({box.y2}) must be > y1 ({box.y1})"))


def validate_dataset(ds: VideoDataset) -> list[Violation]:
    """Check every dataset invariant, reporting rather than raising.

    Returns an empty list iff the dataset is well formed; each violation
    names the offending frame and field.
    """
    violations: list[Violation] = []
    seen_videos: set[str] = set()
    for video in ds.videos:
        if video.id in seen_videos:
            violations.append(Violation(None, "video.id", f"duplicate video id {video.id!r}"))
        seen_videos.add(video.id)
        prev_index: int | None = None
        for frame in video.frames:
            key = frame.key
            if key.video_id != video.id:
                violations.append(
                    Violation(key, "key.video_id", f"frame key names {key.video_id!r}, expected {video.id!r}")
                )
            if key.index < 0:
                violations.append(Violation(key, "key.index", "frame index must be non-negative"))
            if prev_index is not None and key.index <= prev_index:
                violations.append(
                    Violation(key, "key.index", f"frame indices not strictly increasing ({prev_index} then {key.index})")
                )
            prev_index = key.index
            for i, gt in enumerate(frame.ground_truth):
                if not gt.label:
                    violations.append(Violation(key, f"ground_truth[{i}].label", "label must be non-empty"))
                _check_box(key, f"ground_truth[{i}].bbox", gt.bbox, violations)
    return violations


def validate_detections(key: FrameKey, boxes: list[Detection]) -> list[Violation]:
    """Check detection invariants for one frame's boxes."""
    violations: list[Violation] = []
    for i, det in enumerate(boxes):
        if not det.label:
            violations.append(Violation(key, f"boxes[{i}].label", "label must be non-empty"))
        if not (math.isfinite(det.confidence) and 0.0 <= det.confidence <= 1.0):
            violations.append(
                Violation(key, f"boxes[{i}].score", f"confidence {det.confidence} outside [0, 1]")
            )
        _check_box(key, f"boxes[{i}].bbox", det.bbox, violations)
    return violations
