"""Scheduler tests: routing rule, cost model, two-round runs, invariants."""

from __future__ import annotations

import random

import pytest

from conftest import build_dataset, gt, two_frame_dataset
from oddkit.backends import FileScoreSource, ReplayBackend
from oddkit.errors import ConfigurationError, ProtocolError, ValidationError
from oddkit.model import Detection, FrameKey
from oddkit.refpool import PoolConfig
from oddkit.scheduling import (
    CostModel,
    Route,
    SchedulerConfig,
    TimingRecorder,
    decide,
    model_speed,
    run,
)


def four_frame_dataset():
    return build_dataset({"v": [(i, [gt(0, 0, 10, 10)]) for i in range(4)]})


def scores_for(ds, values):
    return dict(zip((f.key for f in ds.iter_frames()), values))


def test_decide_strict_inequality():
    ds = four_frame_dataset()
    decisions = decide(ds, scores_for(ds, [0.1, 0.2, 0.3, 0.4]), 0.25)
    assert [d.route for d in decisions] == [Route.SIOD, Route.SIOD, Route.VOD, Route.VOD]
    assert [d.key.index for d in decisions] == [0, 1, 2, 3]


def test_decide_extremes():
    ds = four_frame_dataset()
    scores = scores_for(ds, [0.0, 0.3, 0.6, 1.0])
    assert all(d.route is Route.VOD for d in decide(ds, scores, 0.0))
    assert all(d.route is Route.SIOD for d in decide(ds, scores, 1.01))


def test_decide_missing_score_names_frame():
    ds = four_frame_dataset()
    scores = scores_for(ds, [0.1, 0.2, 0.3, 0.4])
    del scores[FrameKey("v", 2)]
    with pytest.raises(ValidationError, match=r"v\[2\]"):
        decide(ds, scores, 0.5)


def test_model_speed_examples():
    cm = CostModel(siod_cost=1.0, vod_cost=2.0, score_cost=0.0)
    ds = four_frame_dataset()
    ten = build_dataset({"v": [(i, [gt(0, 0, 1, 1)]) for i in range(10)]})
    all_vod = decide(ten, {f.key: 1.0 for f in ten.iter_frames()}, 0.0)
    total, fps = model_speed(all_vod, cm)
    assert (total, fps) == (20.0, 0.5)

    half = decide(ten, {f.key: (0.0 if f.key.index < 5 else 1.0) for f in ten.iter_frames()}, 0.5)
    total, _ = model_speed(half, cm)
    assert total == 15.0

    all_siod = decide(ten, {f.key: 0.0 for f in ten.iter_frames()}, 1.01)
    _, fps_siod = model_speed(all_siod, cm)
    assert fps_siod / fps == cm.vod_cost / cm.siod_cost

    with pytest.raises(ValidationError):
        model_speed([], cm)


def test_cost_model_invariants(caplog):
    with pytest.raises(ValidationError):
        CostModel(siod_cost=0.0)
    with pytest.raises(ValidationError):
        CostModel(score_cost=-1.0)
    with caplog.at_level("WARNING", logger="oddkit.scheduling"):
        CostModel(siod_cost=5.0, vod_cost=1.0)
    assert any("slow path" in r.message for r in caplog.records)


def _disjoint_dumps(ds):
    """Two dumps whose boxes are distinguishable by confidence."""
    siod = {
        f.key: [Detection(g.bbox, g.label, 0.25) for g in f.ground_truth]
        for f in ds.iter_frames()
    }
    vod = {
        f.key: [Detection(g.bbox, g.label, 0.75) for g in f.ground_truth]
        for f in ds.iter_frames()
    }
    return siod, vod


def _config(ds, siod_dump, vod_dump, scores, threshold, **kwargs):
    return SchedulerConfig(
        score_source=FileScoreSource(scores),
        siod=ReplayBackend(siod_dump, name="siod"),
        vod=ReplayBackend(vod_dump, name="vod"),
        odd_threshold=threshold,
        **kwargs,
    )


def test_run_all_vod_passthrough():
    ds = two_frame_dataset()
    siod, vod = _disjoint_dumps(ds)
    scores = {f.key: 0.5 for f in ds.iter_frames()}
    report = run(ds, _config(ds, siod, vod, scores, 0.0))
    assert report.merged == vod
    assert (report.n_siod, report.n_vod) == (0, ds.n_frames)
    assert report.proportion_siod == 0.0


def test_run_all_siod_passthrough():
    ds = two_frame_dataset()
    siod, vod = _disjoint_dumps(ds)
    scores = {f.key: 0.5 for f in ds.iter_frames()}
    report = run(ds, _config(ds, siod, vod, scores, 1.01))
    assert report.merged == siod
    assert (report.n_siod, report.n_vod) == (ds.n_frames, 0)


def test_run_mixed_partition_matches_routes():
    ds = four_frame_dataset()
    siod, vod = _disjoint_dumps(ds)
    scores = scores_for(ds, [0.1, 0.6, 0.1, 0.6])
    report = run(ds, _config(ds, siod, vod, scores, 0.5))
    assert [d.route for d in report.decisions] == [Route.SIOD, Route.VOD, Route.SIOD, Route.VOD]
    for decision in report.decisions:
        expected = siod if decision.route is Route.SIOD else vod
        assert report.merged[decision.key] == expected[decision.key]
        assert decision.route is (Route.SIOD if decision.score < 0.5 else Route.VOD)
    assert list(report.merged) == [f.key for f in ds.iter_frames()]
    assert report.n_siod + report.n_vod == ds.n_frames
    assert report.proportion_siod == 0.5


def test_run_is_deterministic():
    ds = two_frame_dataset()
    siod, vod = _disjoint_dumps(ds)
    scores = {f.key: 0.3 for f in ds.iter_frames()}
    first = run(ds, _config(ds, siod, vod, scores, 0.4))
    second = run(ds, _config(ds, siod, vod, scores, 0.4))
    assert first == second


def test_run_score_out_of_range_rejected():
    ds = two_frame_dataset()
    siod, vod = _disjoint_dumps(ds)

    class BadSource:
        name = "bad"

        def score_for(self, frame):
            return 1.5

    cfg = SchedulerConfig(score_source=BadSource(), siod=ReplayBackend(siod), vod=ReplayBackend(vod))
    with pytest.raises(ValidationError, match=r"\[0, 1\]"):
        run(ds, cfg)


class PoolRecordingBackend(ReplayBackend):
    def __init__(self, dump, name="vod-pool"):
        super().__init__(dump, name=name)
        self.capabilities = frozenset({"detect", "global_pool"})
        self.pools: list[tuple[str, tuple[int, ...]]] = []

    def set_global_pool(self, video_id, frames):
        self.pools.append((video_id, tuple(frames)))


def test_run_announces_one_pool_per_video_before_detecting():
    ds = build_dataset(
        {
            "a": [(i, [gt(0, 0, 10, 10)]) for i in range(5)],
            "b": [(i, [gt(0, 0, 10, 10)]) for i in range(3)],
        }
    )
    siod, vod = _disjoint_dumps(ds)
    scores = {f.key: 0.1 * (f.key.index + 1) for f in ds.iter_frames()}
    backend = PoolRecordingBackend(vod)
    cfg = SchedulerConfig(
        score_source=FileScoreSource(scores),
        siod=ReplayBackend(siod),
        vod=backend,
        odd_threshold=0.25,
        ogrfs=PoolConfig(k=2),
    )
    report = run(ds, cfg)
    # Lowest-scoring two frames per video, every video announced once.
    assert backend.pools == [("a", (0, 1)), ("b", (0, 1))]
    assert report.n_siod + report.n_vod == ds.n_frames


def test_run_pool_without_capability_fails_before_any_detection():
    ds = two_frame_dataset()
    siod, vod = _disjoint_dumps(ds)

    class CountingSource:
        name = "counting"
        calls = 0

        def score_for(self, frame):
            type(self).calls += 1
            return 0.5

    cfg = SchedulerConfig(
        score_source=CountingSource(),
        siod=ReplayBackend(siod),
        vod=ReplayBackend(vod),
        ogrfs=PoolConfig(k=1),
    )
    with pytest.raises(ConfigurationError, match="global_pool"):
        run(ds, cfg)
    assert CountingSource.calls == 0


def test_run_abort_identifies_round_and_frame():
    ds = four_frame_dataset()
    siod, vod = _disjoint_dumps(ds)
    del vod[FrameKey("v", 3)]
    scores = scores_for(ds, [0.1, 0.1, 0.1, 0.9])

    class Exploding(ReplayBackend):
        def detect(self, key, image_path=None):
            if key not in self._dump:
                raise ProtocolError(f"boom at {key.video_id}[{key.index}]")
            return super().detect(key, image_path)

    cfg = SchedulerConfig(
        score_source=FileScoreSource(scores),
        siod=ReplayBackend(siod),
        vod=Exploding(vod),
        odd_threshold=0.5,
    )
    with pytest.raises(ProtocolError, match=r"round 2 .*v\[3\]"):
        run(ds, cfg)


def test_timing_recorder_kept_out_of_report():
    ds = two_frame_dataset()
    siod, vod = _disjoint_dumps(ds)
    scores = {f.key: 0.3 for f in ds.iter_frames()}
    timing = TimingRecorder()
    report = run(ds, _config(ds, siod, vod, scores, 0.4), timing)
    assert timing.n_frames == ds.n_frames
    assert timing.total_seconds >= 0.0
    bare = run(ds, _config(ds, siod, vod, scores, 0.4))
    assert report == bare


def test_threshold_nesting_and_fps_monotonicity():
    rng = random.Random(99)
    grid = (0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.25, 0.2, 0.15, 0.1, 0.05)
    for _ in range(20):
        ds = build_dataset(
            {f"v{v}": [(i, [gt(0, 0, 5, 5)]) for i in range(rng.randint(1, 8))] for v in range(3)}
        )
        scores = {f.key: rng.random() for f in ds.iter_frames()}
        cm = CostModel()
        previous: set | None = None
        previous_fps = None
        for threshold in sorted(grid):
            decisions = decide(ds, scores, threshold)
            fast = {d.key for d in decisions if d.route is Route.SIOD}
            if previous is not None:
                assert previous <= fast
                _, fps = model_speed(decisions, cm)
                assert fps >= previous_fps
            previous = fast
            previous_fps = model_speed(decisions, cm)[1]
