"""Deterministic synthetic datasets for desk-scale pipeline runs.

The generator assigns each frame a latent difficulty and degrades the
simulated detections accordingly: harder frames get more localization
jitter, more misses, more false positives, and lower confidences. Two
dumps are produced — a noisy fast-detector dump and a cleaner slow-detector
dump — plus a score file holding the ground-truth difficulty of the fast
dump, i.e. what a perfect difficulty predictor would output.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .metric import MetricConfig, label_dataset
from .model import (
    BoundingBox,
    Detection,
    DetectionDump,
    FrameKey,
    FrameRecord,
    GroundTruthBox,
    Video,
    VideoDataset,
)

LABELS = ("airplane", "bicycle", "bird", "car", "dog", "horse")


@dataclass(frozen=True)
class FixtureSpec:
    """Size and shape parameters for the generator."""

    n_videos: int = 24
    frames_per_video: int = 32
    max_gt_per_frame: int = 4
    image_width: float = 640.0
    image_height: float = 480.0
    # How much easier frames look to the slow detector (0 = flawless).
    vod_difficulty_factor: float = 0.3


@dataclass(frozen=True)
class FixtureSet:
    dataset: VideoDataset
    siod_dump: DetectionDump
    vod_dump: DetectionDump
    scores: dict[FrameKey, float]


def _random_box(rng: random.Random, spec: FixtureSpec) -> BoundingBox:
    w = rng.uniform(30.0, spec.image_width / 3)
    h = rng.uniform(30.0, spec.image_height / 3)
    x1 = rng.uniform(0.0, spec.image_width - w)
    y1 = rng.uniform(0.0, spec.image_height - h)
    return BoundingBox(x1, y1, x1 + w, y1 + h)


def _jitter_box(rng: random.Random, box: BoundingBox, difficulty: float) -> BoundingBox:
    # Shift and rescale proportionally to difficulty; cap the wobble so the
    # box stays valid.
    w = box.x2 - box.x1
    h = box.y2 - box.y1
    dx = rng.uniform(-0.5, 0.5) * difficulty * w
    dy = rng.uniform(-0.5, 0.5) * difficulty * h
    grow = 1.0 + rng.uniform(-0.35, 0.35) * difficulty
    nw = max(w * grow, 1.0)
    nh = max(h * grow, 1.0)
    x1 = box.x1 + dx
    y1 = box.y1 + dy
    return BoundingBox(x1, y1, x1 + nw, y1 + nh)


def _detections_for(
    rng: random.Random,
    gts: tuple[GroundTruthBox, ...],
    difficulty: float,
    spec: FixtureSpec,
) -> list[Detection]:
    out: list[Detection] = []
    for gt in gts:
        if rng.random() < 0.75 * difficulty:
            continue  # miss
        box = _jitter_box(rng, gt.bbox, difficulty)
        label = gt.label
        if rng.random() < 0.25 * difficulty:
            label = rng.choice([l for l in LABELS if l != gt.label])
        confidence = max(0.05, min(1.0, 1.0 - 0.7 * difficulty + rng.uniform(-0.1, 0.1)))
        out.append(Detection(box, label, confidence))
    n_fp = rng.choice([0, 0, 0, 1, 1, 2]) if difficulty > 0.25 else 0
    for _ in range(n_fp):
        out.append(Detection(_random_box(rng, spec), rng.choice(LABELS), rng.uniform(0.3, 0.9)))
    return out


def make_fixtures(seed: int, spec: FixtureSpec = FixtureSpec()) -> FixtureSet:
    """Generate a dataset, fast/slow dumps, and an oracle score file.

    The same seed always produces bit-identical output.
    """
    rng = random.Random(seed)
    videos = []
    siod_dump: DetectionDump = {}
    vod_dump: DetectionDump = {}
    for v in range(spec.n_videos):
        video_id = f"video-{v:03d}"
        base_difficulty = rng.uniform(0.0, 0.85)
        frames = []
        for i in range(spec.frames_per_video):
            difficulty = min(1.0, max(0.0, base_difficulty + rng.uniform(-0.2, 0.2)))
            key = FrameKey(video_id, i)
            n_gt = rng.randint(1, spec.max_gt_per_frame)
            gts = tuple(
                GroundTruthBox(_random_box(rng, spec), rng.choice(LABELS)) for _ in range(n_gt)
            )
            frames.append(FrameRecord(key, gts, None))
            siod_dump[key] = _detections_for(rng, gts, difficulty, spec)
            vod_dump[key] = _detections_for(rng, gts, difficulty * spec.vod_difficulty_factor, spec)
        videos.append(Video(video_id, tuple(frames)))
    dataset = VideoDataset(tuple(videos))
    scores = label_dataset(dataset, siod_dump, MetricConfig())
    return FixtureSet(dataset, siod_dump, vod_dump, scores)
