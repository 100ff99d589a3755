"""Threshold sweeps, lossless-rate arithmetic, and summary tables.

A sweep runs the hybrid pipeline once per threshold, evaluates each merged
dump, and reports accuracy and modeled speed per row next to a pure-slow
baseline and a pure-fast extreme. A row is "lossless" when its accuracy is
not below the baseline's; the lossless acceleration rate is the biggest
relative speed gain among lossless rows.
"""

from __future__ import annotations

import concurrent.futures
import csv
import decimal
import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .backends import DetectorBackend, ScoreSource
from .errors import InputError, ValidationError
from .evaluation import EvalConfig, evaluate
from .metric import MetricConfig, label_dataset
from .model import DetectionDump, FrameKey, VideoDataset
from .refpool import PoolConfig
from .scheduling import CostModel, RunReport, SchedulerConfig, TimingRecorder, run

logger = logging.getLogger("oddkit.sweep")

# The customary sweep grid, densest where the interesting trade-offs live.
THRESHOLD_GRID = (0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.25, 0.2, 0.15, 0.1, 0.05)
BASELINE_THRESHOLD = 0.0
PURE_SIOD_THRESHOLD = 1.01


@dataclass(frozen=True)
class SweepRow:
    threshold: float
    mean_ap: float
    n_siod: int
    n_vod: int
    proportion_siod: float
    modeled_fps: float
    measured_fps: float | None
    lossless: bool


@dataclass(frozen=True)
class SweepReport:
    """Grid rows in descending-threshold order plus the two extreme rows."""

    rows: tuple[SweepRow, ...]
    baseline: SweepRow
    pure_siod: SweepRow
    lossless_acceleration_rate: float | None


def lossless_rate(
    rows: Iterable[tuple[float, float, float]], baseline: tuple[float, float]
) -> float | None:
    """Biggest relative speed gain (percent) among rows matching baseline accuracy.

    Rows are (threshold, mean_ap, fps) triples; the baseline is
    (mean_ap, fps). Returns None when no row reaches the baseline accuracy
    or there are no rows at all.
    """
    base_map, base_fps = baseline
    if base_fps <= 0:
        raise ValidationError(f"baseline fps must be positive, got {base_fps}")
    gains = [
        (fps - base_fps) / base_fps * 100.0
        for _, mean_ap, fps in rows
        if mean_ap >= base_map
    ]
    return max(gains) if gains else None


def sweep(
    ds: VideoDataset,
    score_source: ScoreSource,
    siod_factory: Callable[[], DetectorBackend],
    vod_factory: Callable[[], DetectorBackend],
    thresholds: Sequence[float] = THRESHOLD_GRID,
    cost_model: CostModel = CostModel(),
    eval_cfg: EvalConfig = EvalConfig(),
    ogrfs: PoolConfig | None = None,
    parallel: int = 1,
    measure_latency: bool = False,
    on_run: Callable[[float, RunReport], None] | None = None,
) -> SweepReport:
    """Run and evaluate the pipeline at every threshold plus both extremes.

    Backends are opened fresh per sweep point via the factories, so points
    may execute in parallel when every factory product is independent
    (replay backends). ``on_run`` is invoked with each finished run, e.g.
    to verify invariants.
    """
    if not thresholds:
        raise ValidationError("sweep needs at least one threshold")

    def run_point(threshold: float) -> tuple[float, SweepRow, RunReport]:
        siod = siod_factory()
        vod = vod_factory()
        timing = TimingRecorder() if measure_latency else None
        try:
            cfg = SchedulerConfig(
                score_source=score_source,
                siod=siod,
                vod=vod,
                odd_threshold=threshold,
                ogrfs=ogrfs,
                cost_model=cost_model,
            )
            report = run(ds, cfg, timing)
        finally:
            siod.close()
            vod.close()
        mean_ap = evaluate(ds, report.merged, eval_cfg).mean_ap
        row = SweepRow(
            threshold=threshold,
            mean_ap=mean_ap,
            n_siod=report.n_siod,
            n_vod=report.n_vod,
            proportion_siod=report.proportion_siod,
            modeled_fps=report.modeled_fps,
            measured_fps=timing.measured_fps if timing else None,
            lossless=False,
        )
        return threshold, row, report

    points = sorted({BASELINE_THRESHOLD, PURE_SIOD_THRESHOLD, *thresholds}, reverse=True)
    results: dict[float, tuple[SweepRow, RunReport]] = {}
    if parallel > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=parallel) as pool:
            for threshold, row, report in pool.map(run_point, points):
                results[threshold] = (row, report)
    else:
        for threshold in points:
            results[threshold] = run_point(threshold)[1:]
    if on_run is not None:
        for threshold in points:
            on_run(threshold, results[threshold][1])

    base_row = results[BASELINE_THRESHOLD][0]
    base_row = _flag(base_row, base_row.mean_ap)
    grid_rows = tuple(
        _flag(results[t][0], base_row.mean_ap) for t in sorted(set(thresholds), reverse=True)
    )
    pure_row = _flag(results[PURE_SIOD_THRESHOLD][0], base_row.mean_ap)
    rate = lossless_rate(
        ((r.threshold, r.mean_ap, r.modeled_fps) for r in grid_rows),
        (base_row.mean_ap, base_row.modeled_fps),
    )
    return SweepReport(grid_rows, base_row, pure_row, rate)


def _flag(row: SweepRow, baseline_map: float) -> SweepRow:
    return SweepRow(
        row.threshold, row.mean_ap, row.n_siod, row.n_vod, row.proportion_siod,
        row.modeled_fps, row.measured_fps, row.mean_ap >= baseline_map,
    )


def proportion_table(
    scores: Mapping[FrameKey, float], thresholds: Sequence[float]
) -> list[tuple[float, float]]:
    """Fraction of frames routed to the fast path at each threshold."""
    values = list(scores.values())
    n = len(values)
    out = []
    for threshold in thresholds:
        below = sum(1 for v in values if v < threshold)
        out.append((threshold, below / n if n else 0.0))
    return out


DEFAULT_ABLATION_VARIANTS: tuple[tuple[str, MetricConfig], ...] = (
    ("all-categories", MetricConfig()),
    ("no-multi-positive", MetricConfig(use_multi_positive=False)),
    ("no-near-positive", MetricConfig(use_near_positive=False)),
    ("positive-negative-only", MetricConfig(use_near_positive=False, use_multi_positive=False)),
)


@dataclass(frozen=True)
class AblationRow:
    variant: str
    mean: float
    minimum: float
    q25: float
    median: float
    q75: float
    maximum: float


def ablation_run(
    ds: VideoDataset,
    dump: DetectionDump,
    variants: Sequence[tuple[str, MetricConfig]] = DEFAULT_ABLATION_VARIANTS,
) -> list[AblationRow]:
    """Summarize the score distribution under each metric-config variant."""
    if ds.n_frames == 0:
        raise ValidationError("cannot summarize an empty dataset")
    rows = []
    for name, cfg in variants:
        values = np.array(list(label_dataset(ds, dump, cfg).values()))
        q25, median, q75 = np.quantile(values, [0.25, 0.5, 0.75])
        rows.append(
            AblationRow(
                name,
                float(values.mean()),
                float(values.min()),
                float(q25),
                float(median),
                float(q75),
                float(values.max()),
            )
        )
    return rows


def format_percent(fraction_or_percent: float, decimals: int = 1, already_percent: bool = False) -> str:
    """Render a percentage with half-away-from-zero rounding."""
    value = fraction_or_percent if already_percent else fraction_or_percent * 100.0
    quantum = decimal.Decimal(1).scaleb(-decimals)
    rendered = decimal.Decimal(repr(value)).quantize(quantum, rounding=decimal.ROUND_HALF_UP)
    return f"{rendered}%"


# -- CSV round-tripping -------------------------------------------------------

_CSV_FIELDS = (
    "kind", "threshold", "mean_ap", "n_siod", "n_vod",
    "proportion_siod", "modeled_fps", "measured_fps", "lossless",
)


def _row_record(kind: str, row: SweepRow) -> dict[str, str]:
    return {
        "kind": kind,
        "threshold": repr(row.threshold),
        "mean_ap": repr(row.mean_ap),
        "n_siod": str(row.n_siod),
        "n_vod": str(row.n_vod),
        "proportion_siod": repr(row.proportion_siod),
        "modeled_fps": repr(row.modeled_fps),
        "measured_fps": "" if row.measured_fps is None else repr(row.measured_fps),
        "lossless": "true" if row.lossless else "false",
    }


def write_sweep_csv(path: str, report: SweepReport) -> None:
    """Emit every sweep row at full precision; derived values are recomputed on read."""
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=_CSV_FIELDS)
            writer.writeheader()
            writer.writerow(_row_record("baseline", report.baseline))
            for row in report.rows:
                writer.writerow(_row_record("grid", row))
            writer.writerow(_row_record("pure_siod", report.pure_siod))
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc}") from exc


def read_sweep_csv(path: str) -> SweepReport:
    """Parse a sweep CSV back into an exact SweepReport."""
    rows: list[SweepRow] = []
    baseline: SweepRow | None = None
    pure_siod: SweepRow | None = None
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            for record in csv.DictReader(fh):
                row = SweepRow(
                    threshold=float(record["threshold"]),
                    mean_ap=float(record["mean_ap"]),
                    n_siod=int(record["n_siod"]),
                    n_vod=int(record["n_vod"]),
                    proportion_siod=float(record["proportion_siod"]),
                    modeled_fps=float(record["modeled_fps"]),
                    measured_fps=float(record["measured_fps"]) if record["measured_fps"] else None,
                    lossless=record["lossless"] == "true",
                )
                if record["kind"] == "baseline":
                    baseline = row
                elif record["kind"] == "pure_siod":
                    pure_siod = row
                else:
                    rows.append(row)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except (KeyError, ValueError) as exc:
        raise InputError(f"{path} is not a sweep CSV: {exc}") from exc
    if baseline is None or pure_siod is None:
        raise InputError(f"{path} is missing the baseline or pure_siod row")
    rate = lossless_rate(
        ((r.threshold, r.mean_ap, r.modeled_fps) for r in rows),
        (baseline.mean_ap, baseline.modeled_fps),
    )
    return SweepReport(tuple(rows), baseline, pure_siod, rate)
