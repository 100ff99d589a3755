"""Acceptance suite: one test per release criterion, each printing a verdict.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines. Tolerances are pinned here and nowhere else.
"""

from __future__ import annotations

import contextlib
import random
import time

import pytest

from conftest import box, build_dataset, det, gt, perfect_dump, random_frame
from naive_metric import naive_odd
from oddkit.backends import FileScoreSource, ReplayBackend
from oddkit.evaluation import evaluate
from oddkit.fixtures import FixtureSpec, make_fixtures
from oddkit.metric import MetricConfig, categorize, odd_score
from oddkit.model import Detection, FrameKey
from oddkit.refpool import PoolConfig, select_pool
from oddkit.scheduling import CostModel, Route, decide, model_speed
from oddkit.sweep import THRESHOLD_GRID, lossless_rate, read_sweep_csv, sweep, write_sweep_csv

CFG = MetricConfig()
EPS = CFG.epsilon


@contextlib.contextmanager
def criterion(name: str):
    try:
        yield
    except BaseException:
        print(f"[FAIL] {name}")
        raise
    print(f"[PASS] {name}")


def test_metric_oracle_equivalence():
    with criterion("metric oracle equivalence (>=1000 frames, <=1e-9, <10s)"):
        rng = random.Random(1234)
        started = time.perf_counter()
        for _ in range(1200):
            preds, gts = random_frame(rng)
            expected = naive_odd(
                [p.bbox.as_list() for p in preds],
                [p.label for p in preds],
                [p.confidence for p in preds],
                [g.bbox.as_list() for g in gts],
                [g.label for g in gts],
            )
            assert abs(odd_score(preds, gts, CFG).value - expected) <= 1e-9
        assert time.perf_counter() - started < 10.0


def test_metric_spot_values():
    with criterion("metric spot values (hand-derived within 1e-6, exact edge cases)"):
        empty = odd_score([], [], CFG).value
        assert empty == 1.0 - 2.0 / (2.0 + EPS)  # exactly eps/(2+eps)
        assert abs(empty - EPS / (2.0 + EPS)) < 1e-12
        assert abs(empty - 0.0) < 1e-6

        perfect = odd_score([det(0, 0, 10, 10, "c", 1.0)], [gt(0, 0, 10, 10, "c")], CFG).value
        assert perfect == 1.0 - 2.0 / (2.0 + EPS)

        confident = odd_score([det(0, 0, 10, 10, "c", 0.8)], [gt(0, 0, 10, 10, "c")], CFG).value
        assert abs(confident - 1 / 9) < 1e-6  # wp=1, wr=0.8
        assert confident == pytest.approx(1.0 - 1.6 / (1.8 + EPS), abs=1e-15)

        near = odd_score([det(0, 0, 10, 4.9, "c", 1.0)], [gt(0, 0, 10, 10, "c")], CFG).value
        assert abs(near - 1 / 3) < 1e-6  # wp=1, wr=0.5
        assert near == pytest.approx(1.0 - 1.0 / (1.5 + EPS), abs=1e-15)

        noisy = odd_score(
            [det(0, 0, 10, 10, "c", 1.0), det(50, 50, 60, 60, "c", 1.0)],
            [gt(0, 0, 10, 10, "c")],
            CFG,
        ).value
        assert abs(noisy - 1 / 3) < 1e-6  # wp=0.5, wr=1
        assert noisy == pytest.approx(1.0 - 1.0 / (1.5 + EPS), abs=1e-15)

        assert odd_score([], [gt(0, 0, 10, 10, "c")], CFG).value == 1.0


def test_monotonicity_suite():
    with criterion("monotonicity: 10k append-negative and 10k perfect-positive trials"):
        rng = random.Random(77)
        labels = ("a", "b")
        trials = 0
        while trials < 10_000:
            preds, gts = random_frame(rng, labels=labels, max_gt=3, max_pred=4)
            before = odd_score(preds, gts, CFG).value
            extra = Detection(box(900, 900, 905, 905), rng.choice(labels), rng.uniform(0.05, 1.0))
            after = odd_score(preds + [extra], gts, CFG).value
            assert after >= before, (preds, gts, extra)
            trials += 1

        trials = 0
        while trials < 10_000:
            preds, gts = random_frame(rng, labels=labels, max_gt=3, max_pred=4)
            matched = {
                c.matched_gt_index for c in categorize(preds, gts, CFG) if c.matched_gt_index is not None
            }
            unmatched = [j for j in range(len(gts)) if j not in matched]
            if not unmatched:
                continue
            target = gts[rng.choice(unmatched)]
            before = odd_score(preds, gts, CFG).value
            fix = Detection(target.bbox, target.label, 1.0)
            after = odd_score(preds + [fix], gts, CFG).value
            assert after <= before, (preds, gts, fix)
            trials += 1


def test_ablation_property():
    with criterion("ablation: disabling categories never lowers difficulty (1000 frames)"):
        rng = random.Random(2718)
        variants = (
            MetricConfig(use_near_positive=False),
            MetricConfig(use_multi_positive=False),
            MetricConfig(use_near_positive=False, use_multi_positive=False),
        )
        for _ in range(1000):
            preds, gts = random_frame(rng)
            full = odd_score(preds, gts, CFG).value
            for variant in variants:
                assert odd_score(preds, gts, variant).value >= full - 1e-12


def _sweep_fixture():
    bundle = make_fixtures(11)
    source = FileScoreSource(bundle.scores)
    siod_factory = lambda: ReplayBackend(bundle.siod_dump, name="siod")
    vod_factory = lambda: ReplayBackend(bundle.vod_dump, name="vod")
    return bundle, source, siod_factory, vod_factory


def test_scheduler_extremes_and_run_invariants():
    with criterion("scheduler extremes exact; order/partition hold on every sweep point"):
        bundle, source, siod_factory, vod_factory = _sweep_fixture()
        ds = bundle.dataset
        frame_order = [f.key for f in ds.iter_frames()]

        def check_invariants(threshold, report):
            assert list(report.merged) == frame_order  # order preservation
            assert report.n_siod + report.n_vod == len(frame_order)
            fast = {d.key for d in report.decisions if d.route is Route.SIOD}
            assert len(report.decisions) == len(frame_order)
            for d in report.decisions:
                assert (d.score < threshold) == (d.route is Route.SIOD)
                expected = bundle.siod_dump if d.key in fast else bundle.vod_dump
                assert report.merged[d.key] == expected[d.key]  # partition

        report = sweep(ds, source, siod_factory, vod_factory, on_run=check_invariants)
        assert report.baseline.mean_ap == evaluate(ds, bundle.vod_dump).mean_ap
        assert report.pure_siod.mean_ap == evaluate(ds, bundle.siod_dump).mean_ap


def test_threshold_monotonicity_over_random_fixtures():
    with criterion("threshold nesting + modeled fps monotone (50 random fixtures)"):
        rng = random.Random(31337)
        cm = CostModel()  # published per-frame cost defaults
        assert (cm.siod_cost, cm.vod_cost, cm.score_cost) == (131.63, 324.2, 0.13)
        for _ in range(50):
            ds = build_dataset(
                {
                    f"v{v}": [(i, [gt(0, 0, 5, 5)]) for i in range(rng.randint(1, 12))]
                    for v in range(rng.randint(1, 4))
                }
            )
            scores = {f.key: rng.random() for f in ds.iter_frames()}
            previous_fast: set | None = None
            previous_fps = None
            for threshold in sorted(THRESHOLD_GRID):
                decisions = decide(ds, scores, threshold)
                fast = {d.key for d in decisions if d.route is Route.SIOD}
                _, fps = model_speed(decisions, cm)
                if previous_fast is not None:
                    assert previous_fast <= fast
                    assert fps >= previous_fps
                previous_fast, previous_fps = fast, fps


# Published speed/accuracy sweep rows for six video detectors (ResNet-50),
# keyed by threshold, plus each model's original (mAP, FPS) baseline and its
# reported lossless acceleration rate in percent.
PUBLISHED_SWEEPS = {
    "FGFA": (
        {0.9: (72.1, 29.6), 0.8: (72.8, 27.5), 0.7: (73.1, 25.9), 0.6: (73.4, 23.8),
         0.5: (73.8, 19.4), 0.4: (71.2, 17.2), 0.3: (74.5, 15.3), 0.25: (74.7, 14.5),
         0.2: (74.7, 13.6), 0.15: (74.7, 13.1), 0.1: (74.7, 12.2), 0.05: (74.7, 11.4)},
        (74.7, 7.1), 104.2,
    ),
    "SELSA": (
        {0.9: (73.3, 34.1), 0.8: (74.4, 33.7), 0.7: (75.0, 30.7), 0.6: (75.8, 30.3),
         0.5: (76.7, 25.6), 0.4: (77.6, 22.7), 0.3: (78.7, 20.0), 0.25: (79.2, 19.1),
         0.2: (79.5, 18.1), 0.15: (79.7, 16.6), 0.1: (79.8, 15.4), 0.05: (80.0, 14.2)},
        (78.4, 11.6), 72.4,
    ),
    "TROIA": (
        {0.9: (73.9, 28.7), 0.8: (75.5, 24.6), 0.7: (76.3, 22.5), 0.6: (76.7, 19.7),
         0.5: (77.7, 15.9), 0.4: (78.8, 13.0), 0.3: (79.7, 10.8), 0.25: (79.9, 10.0),
         0.2: (80.1, 9.1), 0.15: (80.2, 8.4), 0.1: (80.4, 7.6), 0.05: (80.6, 6.9)},
        (79.8, 6.0), 66.7,
    ),
    "RDN-local": (
        {0.9: (72.0, 26.6), 0.8: (72.5, 23.1), 0.7: (72.7, 21.4), 0.6: (73.0, 19.0),
         0.5: (73.7, 15.7), 0.4: (74.2, 13.6), 0.3: (74.8, 11.4), 0.25: (75.1, 10.8),
         0.2: (75.3, 9.8), 0.15: (75.5, 9.5), 0.1: (75.6, 8.9), 0.05: (75.7, 8.2)},
        (75.7, 7.2), 13.9,
    ),
    "RDN-global": (
        {0.9: (73.1, 36.2), 0.8: (74.1, 34.5), 0.7: (74.9, 33.0), 0.6: (75.6, 31.5),
         0.5: (76.5, 27.9), 0.4: (77.6, 24.7), 0.3: (78.9, 22.7), 0.25: (79.2, 21.7),
         0.2: (79.4, 19.5), 0.15: (79.7, 18.7), 0.1: (79.9, 17.6), 0.05: (80.1, 16.0)},
        (77.6, 14.5), 70.3,
    ),
    "MEGA": (
        {0.9: (72.3, 25.5), 0.8: (73.0, 21.9), 0.7: (73.4, 19.5), 0.6: (74.2, 18.2),
         0.5: (75.2, 14.3), 0.4: (76.1, 12.4), 0.3: (77.2, 10.2), 0.25: (77.6, 9.6),
         0.2: (77.9, 8.7), 0.15: (78.2, 8.2), 0.1: (78.4, 7.7), 0.05: (78.5, 6.9)},
        (77.0, 4.8), 112.5,
    ),
}


def test_lossless_rate_reproduces_published_columns():
    with criterion("lossless-rate arithmetic reproduces all six published rates (+-0.15pp)"):
        for model, (columns, baseline, published) in PUBLISHED_SWEEPS.items():
            rows = [(t, m, f) for t, (m, f) in columns.items()]
            rate = lossless_rate(rows, baseline)
            assert rate is not None, model
            assert abs(rate - published) <= 0.15, (model, rate, published)


def test_reference_pool_brute_force():
    with criterion("reference pool equals brute force on 10k vectors incl. heavy ties"):
        rng = random.Random(4242)
        for _ in range(10_000):
            n = rng.randint(1, 25)
            frames = [FrameKey("v", i) for i in range(n)]
            if rng.random() < 0.5:
                values = [rng.choice([0.0, 0.1, 0.1, 0.2, 0.2, 0.5, 0.9]) for _ in range(n)]
            else:
                values = [rng.random() for _ in range(n)]
            scores = dict(zip(frames, values))
            k = rng.randint(1, 12)
            pool = select_pool(frames, scores, PoolConfig(k))
            ranked = sorted(frames, key=lambda f: (scores[f], f.index))
            expected = sorted(ranked[: min(k, n)], key=lambda f: f.index)
            assert list(pool.frames) == expected

            shuffled_items = list(scores.items())
            rng.shuffle(shuffled_items)
            assert select_pool(frames, dict(shuffled_items), PoolConfig(k)) == pool


def test_map_evaluator_criteria():
    with criterion("mAP evaluator: exact spot cases and 100-fixture order invariance"):
        ds = build_dataset({"v": [(0, [gt(0, 0, 10, 10, "cat")]), (1, [gt(3, 3, 9, 9, "dog")])]})
        assert evaluate(ds, perfect_dump(ds)).mean_ap == 1.0

        one = build_dataset({"v": [(0, [gt(0, 0, 10, 10, "cat")])]})
        tp_then_fp = {FrameKey("v", 0): [det(0, 0, 10, 10, "cat", 0.9), det(50, 50, 60, 60, "cat", 0.5)]}
        assert evaluate(one, tp_then_fp).per_label_ap["cat"] == 1.0
        fp_only = {FrameKey("v", 0): [det(50, 50, 60, 60, "cat", 0.9)]}
        assert evaluate(one, fp_only).mean_ap == 0.0

        rng = random.Random(555)
        for _ in range(100):
            spec = {}
            dump = {}
            for v in range(rng.randint(1, 3)):
                frames = []
                for i in range(rng.randint(1, 4)):
                    preds, gts = random_frame(rng)
                    frames.append((i, gts))
                    dump[FrameKey(f"v{v}", i)] = preds
                spec[f"v{v}"] = frames
            ds = build_dataset(spec)
            baseline = evaluate(ds, dump)
            keys = list(dump)
            rng.shuffle(keys)
            shuffled = {}
            for key in keys:
                boxes = list(dump[key])
                rng.shuffle(boxes)
                shuffled[key] = boxes
            again = evaluate(ds, shuffled)
            assert again.per_label_ap == baseline.per_label_ap
            assert again.mean_ap == baseline.mean_ap


def test_end_to_end_fixture_sweep(tmp_path):
    with criterion("end-to-end default-fixture sweep under 60s with invariant-clean CSV"):
        spec = FixtureSpec()
        assert spec.n_videos >= 20 and spec.frames_per_video >= 30
        bundle, source, siod_factory, vod_factory = _sweep_fixture()
        started = time.perf_counter()
        report = sweep(bundle.dataset, source, siod_factory, vod_factory, thresholds=THRESHOLD_GRID)
        elapsed = time.perf_counter() - started
        assert elapsed < 60.0, f"sweep took {elapsed:.1f}s"

        path = tmp_path / "sweep.csv"
        write_sweep_csv(str(path), report)
        parsed = read_sweep_csv(str(path))
        assert parsed == report

        rows = list(reversed(parsed.rows))  # ascending threshold
        for earlier, later in zip(rows, rows[1:]):
            assert later.n_siod >= earlier.n_siod
            assert later.modeled_fps >= earlier.modeled_fps
        assert parsed.baseline.mean_ap == evaluate(bundle.dataset, bundle.vod_dump).mean_ap
        assert parsed.pure_siod.mean_ap == evaluate(bundle.dataset, bundle.siod_dump).mean_ap
        assert parsed.baseline.n_siod == 0
        assert parsed.pure_siod.n_vod == 0
        for row in parsed.rows:
            assert row.n_siod + row.n_vod == bundle.dataset.n_frames
            assert row.lossless == (row.mean_ap >= parsed.baseline.mean_ap)
