"""Difficulty-thresholded routing between a fast and a slow detector.

Frames scoring below the threshold go to the fast still-image detector,
the rest to the slow video detector. A video is processed in two rounds:
round one walks every frame in order, fetching its score and detecting the
easy ones with the fast path; round two optionally announces a per-video
reference pool and then detects the remaining frames with the slow path.
Results are collected back into the original frame order.
"""

from __future__ import annotations

import enum
import logging
import math
import time
from dataclasses import dataclass
from typing import Mapping

from .backends import DetectorBackend, ScoreSource
from .errors import ConfigurationError, ProtocolError, ValidationError
from .model import DetectionDump, FrameKey, VideoDataset
from .refpool import PoolConfig, announce_pool, select_pool

logger = logging.getLogger("oddkit.scheduling")


class Route(enum.Enum):
    SIOD = "siod"
    VOD = "vod"


@dataclass(frozen=True)
class ScheduleDecision:
    key: FrameKey
    score: float
    route: Route


@dataclass(frozen=True)
class CostModel:
    """Per-frame cost constants (abstract units, e.g. GFLOPs or seconds).

    Defaults are published per-frame GFLOPs for a ResNet-50 Faster R-CNN
    carrying a difficulty head (fast path), a SELSA-style aggregating
    detector (slow path), and the difficulty head alone.
    """

    siod_cost: float = 131.63
    vod_cost: float = 324.2
    score_cost: float = 0.13

    def __post_init__(self) -> None:
        if self.siod_cost <= 0 or self.vod_cost <= 0:
            raise ValidationError("siod_cost and vod_cost must be positive")
        if self.score_cost < 0:
            raise ValidationError("score_cost must be non-negative")
        if self.vod_cost < self.siod_cost:
            logger.warning(
                "vod_cost (%g) is below siod_cost (%g); the slow path is usually costlier",
                self.vod_cost, self.siod_cost,
            )


@dataclass(frozen=True)
class SchedulerConfig:
    """Everything a scheduling run needs besides the dataset itself."""

    score_source: ScoreSource
    siod: DetectorBackend
    vod: DetectorBackend
    odd_threshold: float = 0.2
    ogrfs: PoolConfig | None = None
    cost_model: CostModel = CostModel()

    def __post_init__(self) -> None:
        if not math.isfinite(self.odd_threshold):
            raise ValidationError(f"odd_threshold must be finite, got {self.odd_threshold}")


@dataclass(frozen=True)
class RunReport:
    """Outcome of one scheduling run; carries no wall-clock fields."""

    merged: DetectionDump
    decisions: list[ScheduleDecision]
    n_siod: int
    n_vod: int
    modeled_total_cost: float
    modeled_fps: float
    proportion_siod: float


@dataclass
class TimingRecorder:
    """Measured per-backend wall time, kept out of the deterministic report."""

    siod_seconds: float = 0.0
    vod_seconds: float = 0.0
    score_seconds: float = 0.0
    n_frames: int = 0

    @property
    def total_seconds(self) -> float:
        return self.siod_seconds + self.vod_seconds + self.score_seconds

    @property
    def measured_fps(self) -> float | None:
        if self.n_frames == 0 or self.total_seconds <= 0.0:
            return None
        return self.n_frames / self.total_seconds


def decide(ds: VideoDataset, scores: Mapping[FrameKey, float], threshold: float) -> list[ScheduleDecision]:
    """Route every dataset frame: strictly below the threshold means fast path.

    Output is ordered by video order then frame index; a frame without a
    score is a hard error.
    """
    decisions = []
    for frame in ds.iter_frames():
        try:
            score = scores[frame.key]
        except KeyError:
            key = frame.key
            raise ValidationError(f"no score for frame {key.video_id}[{key.index}]") from None
        route = Route.SIOD if score < threshold else Route.VOD
        decisions.append(ScheduleDecision(frame.key, score, route))
    return decisions


def model_speed(decisions: list[ScheduleDecision], cm: CostModel) -> tuple[float, float]:
    """Total modeled cost and frames-per-cost-unit for a set of decisions."""
    if not decisions:
        raise ValidationError("cannot model speed over zero decisions")
    n = len(decisions)
    n_siod = sum(1 for d in decisions if d.route is Route.SIOD)
    total = n * cm.score_cost + n_siod * cm.siod_cost + (n - n_siod) * cm.vod_cost
    return total, n / total


def run(ds: VideoDataset, cfg: SchedulerConfig, timing: TimingRecorder | None = None) -> RunReport:
    """Execute the two-round hybrid pipeline over a dataset.

    Pass a TimingRecorder to collect measured backend latency; the returned
    report itself stays bit-identical across repeated runs.
    """
    if cfg.ogrfs is not None and "global_pool" not in cfg.vod.capabilities:
        raise ConfigurationError(
            f"reference-pool selection requested but backend {cfg.vod.name!r} "
            "does not advertise the 'global_pool' capability"
        )

    def timed(bucket: str, fn, *args):
        if timing is None:
            return fn(*args)
        started = time.perf_counter()
        try:
            return fn(*args)
        finally:
            setattr(timing, bucket, getattr(timing, bucket) + (time.perf_counter() - started))

    # Round one: score every frame in order; easy frames go to the fast
    # detector immediately.
    decisions: list[ScheduleDecision] = []
    scores: dict[FrameKey, float] = {}
    siod_results: dict[FrameKey, list] = {}
    for frame in ds.iter_frames():
        score = timed("score_seconds", cfg.score_source.score_for, frame)
        if not 0.0 <= score <= 1.0:
            raise ValidationError(
                f"score source {cfg.score_source.name!r} returned {score!r} for "
                f"{frame.key.video_id}[{frame.key.index}], outside [0, 1]"
            )
        scores[frame.key] = score
        route = Route.SIOD if score < cfg.odd_threshold else Route.VOD
        decisions.append(ScheduleDecision(frame.key, score, route))
        if route is Route.SIOD:
            try:
                siod_results[frame.key] = timed("siod_seconds", cfg.siod.detect, frame.key, frame.image_path)
            except ProtocolError as exc:
                raise ProtocolError(
                    f"round 1 (fast path) failed at {frame.key.video_id}[{frame.key.index}]: {exc}"
                ) from exc

    routed = {d.key: d.route for d in decisions}

    # Round two: per video, announce the reference pool if configured, then
    # detect the remaining frames in order.
    vod_results: dict[FrameKey, list] = {}
    for video in ds.videos:
        if cfg.ogrfs is not None and video.frames:
            pool = select_pool([f.key for f in video.frames], scores, cfg.ogrfs)
            announce_pool(pool, cfg.vod)
        for frame in video.frames:
            if routed[frame.key] is Route.VOD:
                try:
                    vod_results[frame.key] = timed("vod_seconds", cfg.vod.detect, frame.key, frame.image_path)
                except ProtocolError as exc:
                    raise ProtocolError(
                        f"round 2 (slow path) failed at {frame.key.video_id}[{frame.key.index}]: {exc}"
                    ) from exc

    # Collect in the dataset's original frame order.
    merged: DetectionDump = {}
    for frame in ds.iter_frames():
        source = siod_results if routed[frame.key] is Route.SIOD else vod_results
        merged[frame.key] = source[frame.key]

    n_siod = len(siod_results)
    n_vod = len(vod_results)
    total_frames = n_siod + n_vod
    if timing is not None:
        timing.n_frames += total_frames
    if total_frames:
        modeled_total, modeled_fps = model_speed(decisions, cfg.cost_model)
        proportion = n_siod / total_frames
    else:
        modeled_total, modeled_fps, proportion = 0.0, 0.0, 0.0
    return RunReport(merged, decisions, n_siod, n_vod, modeled_total, modeled_fps, proportion)


def report_payload(report: RunReport) -> dict:
    """JSON-serializable form of a run report (decisions plus accounting)."""
    return {
        "n_siod": report.n_siod,
        "n_vod": report.n_vod,
        "proportion_siod": report.proportion_siod,
        "modeled_total_cost": report.modeled_total_cost,
        "modeled_fps": report.modeled_fps,
        "decisions": [
            {"video_id": d.key.video_id, "index": d.key.index, "score": d.score, "route": d.route.value}
            for d in report.decisions
        ],
    }
