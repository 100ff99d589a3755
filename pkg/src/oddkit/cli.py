"""The ``odd`` command-line interface.

Subcommands cover dataset validation, difficulty labeling, mAP evaluation,
hybrid scheduling runs, threshold sweeps, reference-pool selection,
lossless-rate arithmetic, routing-proportion tables, metric ablations,
synthetic fixture generation, and backend conformance checking.

A JSON config file passed via ``--config`` may supply any flag value
(snake_case keys); explicit flags override it. The ``ODD_LOG`` environment
variable (debug/info/warning/error) controls log verbosity. Exit codes:
0 success, 1 validation failure, 2 protocol failure, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any

from . import files
from .backends import (
    BackendDescriptor,
    BackendKind,
    BackendScoreSource,
    FileScoreSource,
    OracleScoreSource,
    ReplayBackend,
    ScoreSource,
    SubprocessBackend,
    backend_check,
    open_backend,
)
from .errors import EXIT_OK, EXIT_PROTOCOL, EXIT_VALIDATION, ConfigurationError, InputError, OddError
from .evaluation import EvalConfig, Interpolation, evaluate
from .fixtures import FixtureSpec, make_fixtures
from .metric import MetricConfig, label_dataset
from .model import FrameKey, validate_dataset
from .refpool import PoolConfig, random_pool, select_pool
from .scheduling import CostModel, SchedulerConfig, TimingRecorder, report_payload, run
from .sweep import (
    THRESHOLD_GRID,
    ablation_run,
    format_percent,
    lossless_rate,
    proportion_table,
    read_sweep_csv,
    sweep,
    write_sweep_csv,
)

logger = logging.getLogger("oddkit.cli")

_LOG_LEVELS = {"debug": logging.DEBUG, "info": logging.INFO, "warning": logging.WARNING, "error": logging.ERROR}


def _configure_logging() -> None:
    level = _LOG_LEVELS.get(os.environ.get("ODD_LOG", "warning").lower(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


class Settings:
    """Flag values resolved against a config file: flags win, then config."""

    def __init__(self, args: argparse.Namespace, config: dict[str, Any]):
        self._args = args
        self._config = config

    def get(self, name: str, fallback: Any = None) -> Any:
        value = getattr(self._args, name, None)
        if value is not None:
            return value
        if name in self._config:
            return self._config[name]
        return fallback

    def require(self, name: str, flag: str) -> Any:
        value = self.get(name)
        if value is None:
            raise ConfigurationError(f"missing required value: pass {flag} or set {name!r} in the config file")
        return value


def _metric_config(s: Settings) -> MetricConfig:
    return MetricConfig(
        t_near=float(s.get("t_near", 0.3)),
        t_pos=float(s.get("t_pos", 0.5)),
        epsilon=float(s.get("epsilon", 1e-6)),
        use_near_positive=not s.get("no_near_positive", False),
        use_multi_positive=not s.get("no_multi_positive", False),
    )


def _eval_config(s: Settings) -> EvalConfig:
    name = str(s.get("interpolation", "all"))
    try:
        interpolation = Interpolation(name)
    except ValueError:
        raise ConfigurationError(f"interpolation must be 'all' or 'eleven', got {name!r}") from None
    return EvalConfig(iou_threshold=float(s.get("iou_threshold", 0.5)), interpolation=interpolation)


def _cost_model(s: Settings) -> CostModel:
    spec = s.get("cost_model")
    if spec is None:
        return CostModel()
    values = {}
    for part in str(spec).split(","):
        key, sep, raw = part.partition("=")
        key = key.strip()
        if not sep or key not in ("siod", "vod", "score"):
            raise ConfigurationError(f"cost model must look like 'siod=..,vod=..,score=..', got {spec!r}")
        try:
            values[key] = float(raw)
        except ValueError:
            raise ConfigurationError(f"cost model value for {key!r} is not a number: {raw!r}") from None
    defaults = CostModel()
    return CostModel(
        siod_cost=values.get("siod", defaults.siod_cost),
        vod_cost=values.get("vod", defaults.vod_cost),
        score_cost=values.get("score", defaults.score_cost),
    )


def _thresholds(s: Settings) -> list[float]:
    spec = s.get("thresholds")
    if spec is None:
        return list(THRESHOLD_GRID)
    if isinstance(spec, (list, tuple)):
        return [float(v) for v in spec]
    try:
        return [float(part) for part in str(spec).split(",") if part.strip()]
    except ValueError:
        raise ConfigurationError(f"thresholds must be comma-separated numbers, got {spec!r}") from None


def _score_source(spec: str, metric_cfg: MetricConfig, opened: list) -> ScoreSource:
    kind, sep, rest = spec.partition(":")
    if kind == "file" and sep:
        return FileScoreSource(files.read_scores(rest), name=f"file:{rest}")
    if kind == "oracle" and sep:
        return OracleScoreSource(files.read_dump(rest), metric_cfg, name=f"oracle:{rest}")
    if kind == "exec" and sep:
        backend = SubprocessBackend(rest)
        opened.append(backend)
        return BackendScoreSource(backend)
    if sep and kind in ("replay",):
        raise ConfigurationError(f"score source {spec!r} is not supported; use file:, oracle: or exec:")
    # A bare path means a predicted-score file.
    return FileScoreSource(files.read_scores(spec), name=f"file:{spec}")


def _print_table(headers: list[str], rows: list[list[str]]) -> None:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(headers)]
    print("  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)))
    for row in rows:
        print("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))


# -- subcommand handlers -------------------------------------------------------


def _cmd_validate(s: Settings) -> int:
    ds = files.read_dataset(s.require("dataset", "--dataset"), validate=False)
    violations = validate_dataset(ds)
    for dump_path in s.get("dump", []) or []:
        dump = files.read_dump(dump_path)
        known = {frame.key for frame in ds.iter_frames()}
        for key in dump:
            if key not in known:
                print(f"{dump_path}: frame {key.video_id}[{key.index}] not present in the dataset")
                return EXIT_VALIDATION
    if violations:
        for violation in violations:
            print(str(violation))
        print(f"{len(violations)} violation(s) found")
        return EXIT_VALIDATION
    print(f"ok: {ds.n_frames} frames in {len(ds.videos)} videos")
    return EXIT_OK


def _cmd_label(s: Settings) -> int:
    ds = files.read_dataset(s.require("dataset", "--dataset"))
    dump = files.read_dump(s.require("dump", "--dump"))
    scores = label_dataset(ds, dump, _metric_config(s))
    out = s.require("out", "--out")
    files.write_scores(out, scores)
    print(f"wrote {len(scores)} scores to {out}")
    return EXIT_OK


def _cmd_eval(s: Settings) -> int:
    ds = files.read_dataset(s.require("dataset", "--dataset"))
    dump = files.read_dump(s.require("dump", "--dump"))
    report = evaluate(ds, dump, _eval_config(s))
    rows = [[label, f"{ap:.4f}"] for label, ap in report.per_label_ap.items()]
    _print_table(["label", "AP"], rows)
    print(f"mean AP: {report.mean_ap:.4f}")
    out = s.get("out")
    if out:
        files.write_json(
            out,
            {
                "per_label_ap": report.per_label_ap,
                "mean_ap": report.mean_ap,
                "frame_counts": [
                    {"video_id": key.video_id, "index": key.index, "tp": c.tp, "fp": c.fp, "fn": c.fn}
                    for key, c in report.frame_counts.items()
                ],
            },
        )
    return EXIT_OK


def _open_backends(s: Settings) -> tuple:
    siod = open_backend(BackendDescriptor.parse(s.require("siod", "--siod")))
    vod = open_backend(BackendDescriptor.parse(s.require("vod", "--vod")))
    return siod, vod


def _cmd_schedule(s: Settings) -> int:
    ds = files.read_dataset(s.require("dataset", "--dataset"))
    metric_cfg = _metric_config(s)
    opened: list = []
    try:
        source = _score_source(s.require("scores", "--scores"), metric_cfg, opened)
        siod, vod = _open_backends(s)
        opened.extend([siod, vod])
        k = s.get("ogrfs_k")
        cfg = SchedulerConfig(
            score_source=source,
            siod=siod,
            vod=vod,
            odd_threshold=float(s.get("threshold", 0.2)),
            ogrfs=PoolConfig(int(k)) if k is not None else None,
            cost_model=_cost_model(s),
        )
        timing = TimingRecorder() if s.get("measure_latency", False) else None
        report = run(ds, cfg, timing)
    finally:
        for handle in opened:
            handle.close()
    print(f"routed {report.n_siod} frame(s) to the fast path, {report.n_vod} to the slow path")
    print(f"proportion fast: {format_percent(report.proportion_siod)}")
    print(f"modeled: total cost {report.modeled_total_cost:.2f}, fps {report.modeled_fps:.4f}")
    if timing is not None and timing.measured_fps is not None:
        print(f"measured: total {timing.total_seconds:.3f}s, fps {timing.measured_fps:.2f}")
    out = s.get("out")
    if out:
        files.write_json(out, report_payload(report))
    merged_out = s.get("merged_out")
    if merged_out:
        files.write_dump(merged_out, report.merged)
    return EXIT_OK


def _cmd_sweep(s: Settings) -> int:
    ds = files.read_dataset(s.require("dataset", "--dataset"))
    metric_cfg = _metric_config(s)
    parallel = int(s.get("parallel", 1))
    opened: list = []
    try:
        source = _score_source(s.require("scores", "--scores"), metric_cfg, opened)
        siod_desc = BackendDescriptor.parse(s.require("siod", "--siod"))
        vod_desc = BackendDescriptor.parse(s.require("vod", "--vod"))
        if parallel > 1:
            if siod_desc.kind is not BackendKind.REPLAY or vod_desc.kind is not BackendKind.REPLAY:
                raise ConfigurationError("--parallel requires replay backends on both paths")
            if opened:
                raise ConfigurationError("--parallel requires a file: or oracle: score source")

        def factory(desc: BackendDescriptor):
            if desc.kind is BackendKind.REPLAY:
                dump = files.read_dump(desc.locator)
                return lambda: ReplayBackend(dump, name=f"replay:{desc.locator}")
            return lambda: SubprocessBackend(desc.locator)

        k = s.get("ogrfs_k")
        report = sweep(
            ds,
            source,
            factory(siod_desc),
            factory(vod_desc),
            thresholds=_thresholds(s),
            cost_model=_cost_model(s),
            eval_cfg=_eval_config(s),
            ogrfs=PoolConfig(int(k)) if k is not None else None,
            parallel=parallel,
            measure_latency=bool(s.get("measure_latency", False)),
        )
    finally:
        for handle in opened:
            handle.close()

    def render(kind: str, row) -> list[str]:
        return [
            kind,
            f"{row.threshold:g}",
            f"{row.mean_ap:.4f}",
            str(row.n_siod),
            str(row.n_vod),
            format_percent(row.proportion_siod),
            f"{row.modeled_fps:.4f}",
            "-" if row.measured_fps is None else f"{row.measured_fps:.2f}",
            "yes" if row.lossless else "no",
        ]

    table = [render("baseline", report.baseline)]
    table += [render("grid", row) for row in report.rows]
    table.append(render("pure-fast", report.pure_siod))
    _print_table(
        ["kind", "threshold", "mean_ap", "n_fast", "n_slow", "fast%", "modeled_fps", "measured_fps", "lossless"],
        table,
    )
    if report.lossless_acceleration_rate is None:
        print("lossless acceleration rate: none (no lossless row)")
    else:
        print(f"lossless acceleration rate: {format_percent(report.lossless_acceleration_rate, already_percent=True)}")
    csv_out = s.get("csv")
    if csv_out:
        write_sweep_csv(csv_out, report)
        print(f"wrote {csv_out}")
    return EXIT_OK


def _cmd_select_global(s: Settings) -> int:
    import random

    scores = files.read_scores(s.require("scores", "--scores"))
    cfg = PoolConfig(int(s.get("k", 10)))
    seed = s.get("random_baseline")
    rng = random.Random(int(seed)) if seed is not None else None
    by_video: dict[str, list[FrameKey]] = {}
    for key in scores:
        by_video.setdefault(key.video_id, []).append(key)
    pools = []
    for video_id, keys in by_video.items():
        ordered = sorted(keys, key=lambda key: key.index)
        if rng is not None:
            pool = random_pool(ordered, scores, cfg, rng)
        else:
            pool = select_pool(ordered, scores, cfg)
        pools.append((video_id, [key.index for key in pool.frames]))
    out = s.get("out")
    payload = {"pools": [{"video_id": vid, "frames": frames} for vid, frames in pools]}
    if out:
        files.write_json(out, payload)
        print(f"wrote {len(pools)} pool(s) to {out}")
    else:
        print(json.dumps(payload, separators=(",", ":")))
    return EXIT_OK


def _cmd_lossless(s: Settings) -> int:
    sweep_csv = s.get("csv")
    if sweep_csv:
        report = read_sweep_csv(sweep_csv)
        rate = report.lossless_acceleration_rate
    else:
        rows_path = s.require("rows", "--rows")
        rows = []
        import csv as _csv

        try:
            with open(rows_path, newline="", encoding="utf-8") as fh:
                for record in _csv.DictReader(fh):
                    rows.append(
                        (float(record["threshold"]), float(record["mean_ap"]), float(record["fps"]))
                    )
        except OSError as exc:
            raise InputError(f"cannot read {rows_path}: {exc}") from exc
        except (KeyError, ValueError) as exc:
            raise InputError(f"{rows_path} needs columns threshold,mean_ap,fps: {exc}") from exc
        baseline = (float(s.require("baseline_map", "--baseline-map")), float(s.require("baseline_fps", "--baseline-fps")))
        rate = lossless_rate(rows, baseline)
    if rate is None:
        print("no lossless row")
    else:
        print(format_percent(rate, already_percent=True))
    return EXIT_OK


def _cmd_proportion(s: Settings) -> int:
    scores = files.read_scores(s.require("scores", "--scores"))
    table = proportion_table(scores, _thresholds(s))
    _print_table(
        ["threshold", "fast-path"],
        [[f"{t:g}", format_percent(fraction)] for t, fraction in table],
    )
    csv_out = s.get("csv")
    if csv_out:
        try:
            with open(csv_out, "w", encoding="utf-8") as fh:
                fh.write("threshold,proportion\n")
                for t, fraction in table:
                    fh.write(f"{t!r},{fraction!r}\n")
        except OSError as exc:
            raise InputError(f"cannot write {csv_out}: {exc}") from exc
    return EXIT_OK


def _cmd_ablation(s: Settings) -> int:
    ds = files.read_dataset(s.require("dataset", "--dataset"))
    dump = files.read_dump(s.require("dump", "--dump"))
    rows = ablation_run(ds, dump)
    _print_table(
        ["variant", "mean", "min", "q25", "median", "q75", "max"],
        [
            [r.variant, f"{r.mean:.4f}", f"{r.minimum:.4f}", f"{r.q25:.4f}", f"{r.median:.4f}", f"{r.q75:.4f}", f"{r.maximum:.4f}"]
            for r in rows
        ],
    )
    csv_out = s.get("csv")
    if csv_out:
        try:
            with open(csv_out, "w", encoding="utf-8") as fh:
                fh.write("variant,mean,min,q25,median,q75,max\n")
                for r in rows:
                    fh.write(f"{r.variant},{r.mean!r},{r.minimum!r},{r.q25!r},{r.median!r},{r.q75!r},{r.maximum!r}\n")
        except OSError as exc:
            raise InputError(f"cannot write {csv_out}: {exc}") from exc
    return EXIT_OK


def _cmd_fixtures(s: Settings) -> int:
    out_dir = Path(s.require("out", "--out"))
    spec = FixtureSpec(
        n_videos=int(s.get("videos", FixtureSpec.n_videos)),
        frames_per_video=int(s.get("frames", FixtureSpec.frames_per_video)),
    )
    bundle = make_fixtures(int(s.get("seed", 0)), spec)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create {out_dir}: {exc}") from exc
    files.write_dataset(out_dir / "dataset.json", bundle.dataset)
    files.write_dump(out_dir / "siod.json", bundle.siod_dump)
    files.write_dump(out_dir / "vod.json", bundle.vod_dump)
    files.write_scores(out_dir / "scores.json", bundle.scores)
    print(f"wrote dataset.json, siod.json, vod.json, scores.json to {out_dir}")
    return EXIT_OK


def _cmd_backend_check(s: Settings) -> int:
    command = s.require("command", "<command>")
    probe = None
    if s.get("video") is not None and s.get("index") is not None:
        probe = FrameKey(str(s.get("video")), int(s.get("index")))
    report = backend_check(command, probe, s.get("image_path"))
    for result in report.results:
        status = "ok  " if result.passed else "FAIL"
        print(f"{status} {result.name}" + (f": {result.detail}" if result.detail else ""))
    if report.passed:
        print("conformance: pass")
        return EXIT_OK
    print("conformance: FAIL")
    return EXIT_PROTOCOL


# -- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="odd", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--config", help="JSON file supplying default flag values")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add(name: str, handler, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(handler=handler)
        return p

    p = add("validate", _cmd_validate, "check dataset (and optional dump) invariants")
    p.add_argument("--dataset")
    p.add_argument("--dump", action="append")

    for name, handler in (("label", _cmd_label), ("ablation", _cmd_ablation)):
        p = add(name, handler, "compute per-frame difficulty scores" if name == "label" else "score distributions per metric variant")
        p.add_argument("--dataset")
        p.add_argument("--dump")
        if name == "label":
            p.add_argument("--out")
        else:
            p.add_argument("--csv")
        p.add_argument("--t-near", type=float, dest="t_near")
        p.add_argument("--t-pos", type=float, dest="t_pos")
        p.add_argument("--epsilon", type=float)
        p.add_argument("--no-near-positive", action="store_true", default=None)
        p.add_argument("--no-multi-positive", action="store_true", default=None)

    p = add("eval", _cmd_eval, "VOC-style mAP of a dump against the dataset")
    p.add_argument("--dataset")
    p.add_argument("--dump")
    p.add_argument("--iou-threshold", type=float, dest="iou_threshold")
    p.add_argument("--interpolation", choices=["all", "eleven"])
    p.add_argument("--out")

    for name, handler in (("schedule", _cmd_schedule), ("sweep", _cmd_sweep)):
        p = add(name, handler, "one hybrid run" if name == "schedule" else "hybrid runs across a threshold grid")
        p.add_argument("--dataset")
        p.add_argument("--scores", help="score source: <path>, file:<path>, oracle:<dump>, exec:<command>")
        p.add_argument("--siod", help="fast backend: replay:<path> or exec:<command>")
        p.add_argument("--vod", help="slow backend: replay:<path> or exec:<command>")
        p.add_argument("--cost-model", dest="cost_model", help="siod=..,vod=..,score=..")
        p.add_argument("--ogrfs-k", type=int, dest="ogrfs_k", help="announce per-video reference pools of this size")
        p.add_argument("--measure-latency", action="store_true", default=None, dest="measure_latency")
        p.add_argument("--t-near", type=float, dest="t_near")
        p.add_argument("--t-pos", type=float, dest="t_pos")
        p.add_argument("--epsilon", type=float)
        if name == "schedule":
            p.add_argument("--threshold", type=float)
            p.add_argument("--out")
            p.add_argument("--merged-out", dest="merged_out")
        else:
            p.add_argument("--thresholds", help="comma-separated grid (default: the standard sweep grid)")
            p.add_argument("--iou-threshold", type=float, dest="iou_threshold")
            p.add_argument("--interpolation", choices=["all", "eleven"])
            p.add_argument("--csv")
            p.add_argument("--parallel", type=int)

    p = add("select-global", _cmd_select_global, "per-video lowest-score reference pools")
    p.add_argument("--scores")
    p.add_argument("--k", type=int)
    p.add_argument("--random-baseline", type=int, dest="random_baseline",
                   help="pick k frames at random with this seed instead (comparison baseline)")
    p.add_argument("--out")

    p = add("lossless", _cmd_lossless, "lossless acceleration rate from sweep rows")
    p.add_argument("--csv", help="a sweep CSV emitted by 'odd sweep'")
    p.add_argument("--rows", help="CSV with columns threshold,mean_ap,fps")
    p.add_argument("--baseline-map", type=float, dest="baseline_map")
    p.add_argument("--baseline-fps", type=float, dest="baseline_fps")

    p = add("proportion", _cmd_proportion, "fraction of frames below each threshold")
    p.add_argument("--scores")
    p.add_argument("--thresholds")
    p.add_argument("--csv")

    p = add("fixtures", _cmd_fixtures, "generate a synthetic dataset bundle")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--videos", type=int)
    p.add_argument("--frames", type=int)

    p = add("backend-check", _cmd_backend_check, "wire-protocol conformance suite")
    p.add_argument("command", nargs="?")
    p.add_argument("--video")
    p.add_argument("--index", type=int)
    p.add_argument("--image-path", dest="image_path")

    return parser


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    config: dict[str, Any] = {}
    if args.config:
        raw = files.read_json(args.config)
        if not isinstance(raw, dict):
            print(f"error: config file {args.config} must hold a JSON object", file=sys.stderr)
            return EXIT_VALIDATION
        config = raw
    try:
        return args.handler(Settings(args, config))
    except OddError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
