"""``odd-adapter``: serve detections/scores over the wire protocol.

Replay mode answers from dump files; model mode (optional install extra)
runs a detection model on each frame's image path. ``--selftest`` runs the
protocol conformance suite locally and exits nonzero on any failure.
"""

from __future__ import annotations

import argparse
import sys

from .protocol import ProtocolSession, serve
from .selftest import conformance_selftest
from .stores import ModelStore, ReplayStore


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="odd-adapter", description=__doc__)
    parser.add_argument("--mode", choices=["replay", "model"], default="replay")
    parser.add_argument("--detections", help="detection dump file (replay mode)")
    parser.add_argument("--scores", help="score file (replay mode)")
    parser.add_argument("--name", default="odd-adapter")
    parser.add_argument("--model-name", default="fasterrcnn_resnet50_fpn")
    parser.add_argument("--model-weights", default="none", help="'none', 'default', or a torchvision weights id")
    parser.add_argument("--score-threshold", type=float, default=0.05)
    parser.add_argument("--label-map", help="JSON object mapping class id to label (model mode)")
    parser.add_argument("--selftest", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.selftest:
        results = conformance_selftest()
        for result in results:
            status = "ok  " if result.passed else "FAIL"
            print(f"{status} {result.name}" + (f": {result.detail}" if result.detail else ""))
        failed = [r for r in results if not r.passed]
        print("selftest: " + ("pass" if not failed else f"FAIL ({len(failed)} case(s))"))
        return 0 if not failed else 1

    try:
        if args.mode == "replay":
            store = ReplayStore(args.detections, args.scores)
        else:
            weights = None if args.model_weights == "none" else (
                "DEFAULT" if args.model_weights == "default" else args.model_weights
            )
            store = ModelStore(args.model_name, weights, args.score_threshold, args.label_map)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"odd-adapter: {exc}", file=sys.stderr)
        return 1
    return serve(ProtocolSession(store, name=args.name))


if __name__ == "__main__":
    sys.exit(main())
