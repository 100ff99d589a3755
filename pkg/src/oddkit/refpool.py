"""Global reference-frame pool selection for aggregation-based detectors.

Easy frames (lowest difficulty scores) make the most reliable references,
so the pool for a video is simply its k lowest-scoring frames.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import ConfigurationError, ValidationError
from .model import FrameKey

logger = logging.getLogger("oddkit.refpool")


@dataclass(frozen=True)
class PoolConfig:
    """Size of the per-video reference pool."""

    k: int = 10

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValidationError(f"pool size k must be >= 1, got {self.k}")


@dataclass(frozen=True)
class GlobalPool:
    """The selected reference frames of one video, ascending by index."""

    video_id: str
    frames: tuple[FrameKey, ...]
    scores: tuple[float, ...]


@dataclass(frozen=True)
class PoolAck:
    """Host-side acknowledgement echoing what the backend accepted."""

    video_id: str
    frames: tuple[int, ...]


def select_pool(
    frames: Sequence[FrameKey], scores: Mapping[FrameKey, float], cfg: PoolConfig = PoolConfig()
) -> GlobalPool:
    """Pick the k lowest-scoring frames of one video.

    Ties go to the lower frame index; the result is ordered by frame index.
    A video shorter than k contributes all of its frames.
    """
    if not frames:
        raise ValidationError("cannot select a reference pool for an empty video")
    video_id = frames[0].video_id
    for key in frames:
        if key.video_id != video_id:
            raise ValidationError(f"pool selection crosses videos: {video_id!r} vs {key.video_id!r}")
        if key not in scores:
            raise ValidationError(f"no score for frame {key.video_id}[{key.index}]")
    if cfg.k >= len(frames):
        if cfg.k > len(frames):
            logger.info("video %s has %d frames, fewer than k=%d; pool is the whole video", video_id, len(frames), cfg.k)
        chosen = list(frames)
    else:
        ranked = sorted(frames, key=lambda key: (scores[key], key.index))
        chosen = sorted(ranked[: cfg.k], key=lambda key: key.index)
    return GlobalPool(video_id, tuple(chosen), tuple(scores[key] for key in chosen))


def random_pool(
    frames: Sequence[FrameKey],
    scores: Mapping[FrameKey, float],
    cfg: PoolConfig,
    rng: random.Random,
) -> GlobalPool:
    """Baseline selector: k frames chosen uniformly at random, score-blind.

    Exists only for comparison studies against the lowest-score rule;
    deterministic for a given generator state. Scores are echoed for
    reporting but play no part in the choice.
    """
    if not frames:
        raise ValidationError("cannot select a reference pool for an empty video")
    chosen = sorted(rng.sample(list(frames), min(cfg.k, len(frames))), key=lambda key: key.index)
    return GlobalPool(frames[0].video_id, tuple(chosen), tuple(scores.get(key, 0.0) for key in chosen))


def announce_pool(pool: GlobalPool, backend) -> PoolAck:
    """Tell a backend to aggregate the pool's video against these frames.

    The backend must have advertised the ``global_pool`` capability at
    handshake; announcing is idempotent.
    """
    if "global_pool" not in backend.capabilities:
        raise ConfigurationError(
            f"backend {backend.name!r} does not support global reference pools"
        )
    indices = [key.index for key in pool.frames]
    backend.set_global_pool(pool.video_id, indices)
    return PoolAck(pool.video_id, tuple(indices))
