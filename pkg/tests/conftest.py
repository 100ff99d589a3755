"""Shared builders for datasets, dumps, and randomized frames."""

from __future__ import annotations

import random
import sys
from pathlib import Path

import pytest

from oddkit.model import (
    BoundingBox,
    Detection,
    FrameKey,
    FrameRecord,
    GroundTruthBox,
    Video,
    VideoDataset,
)

TOY_BACKEND = Path(__file__).parent / "toy_backend.py"


def toy_backend_cmd(*flags: str) -> str:
    return " ".join([sys.executable, str(TOY_BACKEND), *flags])


def box(x1: float, y1: float, x2: float, y2: float) -> BoundingBox:
    return BoundingBox(float(x1), float(y1), float(x2), float(y2))


def det(x1, y1, x2, y2, label="obj", confidence=0.9) -> Detection:
    return Detection(box(x1, y1, x2, y2), label, confidence)


def gt(x1, y1, x2, y2, label="obj") -> GroundTruthBox:
    return GroundTruthBox(box(x1, y1, x2, y2), label)


def build_dataset(spec: dict[str, list[tuple[int, list[GroundTruthBox]]]]) -> VideoDataset:
    """spec maps video id -> [(frame index, ground truth boxes), ...]."""
    videos = []
    for video_id, frames in spec.items():
        records = tuple(
            FrameRecord(FrameKey(video_id, index), tuple(gts)) for index, gts in frames
        )
        videos.append(Video(video_id, records))
    return VideoDataset(tuple(videos))


def two_frame_dataset() -> VideoDataset:
    return build_dataset(
        {
            "va": [(0, [gt(0, 0, 10, 10, "cat")]), (1, [gt(5, 5, 20, 20, "dog")])],
            "vb": [(0, [gt(0, 0, 8, 8, "cat"), gt(30, 30, 50, 50, "dog")])],
        }
    )


def perfect_dump(ds: VideoDataset) -> dict[FrameKey, list[Detection]]:
    return {
        frame.key: [Detection(g.bbox, g.label, 1.0) for g in frame.ground_truth]
        for frame in ds.iter_frames()
    }


def random_box(rng: random.Random, extent: float = 100.0) -> BoundingBox:
    x1 = rng.uniform(0.0, extent - 2.0)
    y1 = rng.uniform(0.0, extent - 2.0)
    return BoundingBox(x1, y1, x1 + rng.uniform(1.0, extent - x1), y1 + rng.uniform(1.0, extent - y1))


def jittered(rng: random.Random, base: BoundingBox, amount: float) -> BoundingBox:
    w = base.x2 - base.x1
    h = base.y2 - base.y1
    x1 = base.x1 + rng.uniform(-amount, amount) * w
    y1 = base.y1 + rng.uniform(-amount, amount) * h
    return BoundingBox(x1, y1, x1 + max(w * (1 + rng.uniform(-amount, amount)), 0.5), y1 + max(h * (1 + rng.uniform(-amount, amount)), 0.5))


def random_frame(rng: random.Random, labels=("a", "b", "c"), max_gt=4, max_pred=6):
    """A randomized frame exercising all four match categories."""
    gts = [GroundTruthBox(random_box(rng), rng.choice(labels)) for _ in range(rng.randint(0, max_gt))]
    preds = []
    for _ in range(rng.randint(0, max_pred)):
        if gts and rng.random() < 0.65:
            base = rng.choice(gts)
            bbox = jittered(rng, base.bbox, rng.uniform(0.0, 0.8))
            label = base.label if rng.random() < 0.8 else rng.choice(labels)
        else:
            bbox = random_box(rng)
            label = rng.choice(labels)
        preds.append(Detection(bbox, label, rng.uniform(0.0, 1.0)))
    return preds, gts


@pytest.fixture
def rng() -> random.Random:
    return random.Random(20240817)
