"""Conformance self-test: the host-side checks, replayed locally.

Drives a replay-mode session through the same cases a host conformance
checker uses (handshake shape, id echo, schema ranges, unknown types,
malformed lines, shutdown) and additionally proves the checks would catch
a misbehaving backend by injecting deliberate faults.
"""

from __future__ import annotations

import json
import tempfile
from dataclasses import dataclass
from pathlib import Path

from .protocol import Faults, ProtocolSession, ShutdownRequested
from .stores import ReplayStore

SAMPLE_DETECTIONS = {
    "detections": [
        {"video_id": "sample", "index": 0,
         "boxes": [{"label": "cat", "bbox": [1.0, 2.0, 30.0, 40.0], "score": 0.9}]},
        {"video_id": "sample", "index": 1, "boxes": []},
    ]
}
SAMPLE_SCORES = {
    "scores": [
        {"video_id": "sample", "index": 0, "score": 0.8},
        {"video_id": "sample", "index": 1, "score": 0.1},
    ]
}


@dataclass(frozen=True)
class CaseResult:
    name: str
    passed: bool
    detail: str = ""


def _ask(session: ProtocolSession, request: dict) -> dict | None:
    return session.handle_line(json.dumps(request))


def _check_id_echo(response: dict | None, request_id: int) -> str | None:
    """The host-side id rule; returns a complaint or None."""
    if not isinstance(response, dict):
        return "no response object"
    if response.get("id") != request_id:
        return f"id {response.get('id')!r} does not echo {request_id}"
    return None


def _check_score_range(response: dict | None) -> str | None:
    if not isinstance(response, dict) or response.get("type") != "score_value":
        return f"expected score_value, got {response!r}"
    value = response.get("value")
    if not isinstance(value, (int, float)) or not 0.0 <= float(value) <= 1.0:
        return f"score {value!r} outside [0, 1]"
    return None


def _replay_session(faults: Faults | None = None, tmp: Path | None = None) -> ProtocolSession:
    base = tmp or Path(tempfile.mkdtemp(prefix="odd-adapter-selftest-"))
    det_path = base / "detections.json"
    score_path = base / "scores.json"
    det_path.write_text(json.dumps(SAMPLE_DETECTIONS))
    score_path.write_text(json.dumps(SAMPLE_SCORES))
    store = ReplayStore(str(det_path), str(score_path))
    return ProtocolSession(store, faults=faults)


def conformance_selftest(primary_faults: Faults | None = None) -> list[CaseResult]:
    """Run every conformance case; ``primary_faults`` breaks the session
    under test so callers can verify that the suite flags a bad backend."""
    results: list[CaseResult] = []

    def case(name: str, passed: bool, detail: str = "") -> None:
        results.append(CaseResult(name, passed, detail))

    session = _replay_session(primary_faults)

    hello = session.hello()
    shape_ok = (
        hello.get("type") == "hello"
        and isinstance(hello.get("name"), str)
        and isinstance(hello.get("capabilities"), list)
        and all(isinstance(c, str) for c in hello["capabilities"])
    )
    case("hello-shape", shape_ok, json.dumps(hello))

    response = _ask(session, {"id": 1, "type": "detect", "video_id": "sample", "index": 0, "image_path": None})
    complaint = _check_id_echo(response, 1)
    boxes_ok = (
        complaint is None
        and response.get("type") == "detections"
        and response.get("boxes") == SAMPLE_DETECTIONS["detections"][0]["boxes"]
    )
    case("detect-known-frame", boxes_ok, complaint or "boxes identical to file")

    response = _ask(session, {"id": 2, "type": "detect", "video_id": "ghost", "index": 7, "image_path": None})
    case(
        "detect-unknown-frame",
        _check_id_echo(response, 2) is None and response.get("type") == "error",
        str(response),
    )

    response = _ask(session, {"id": 3, "type": "score", "video_id": "sample", "index": 0, "image_path": None})
    complaint = _check_id_echo(response, 3) or _check_score_range(response)
    case("score-in-range", complaint is None, complaint or "")

    response = _ask(session, {"id": 4, "type": "mystery"})
    alive = _ask(session, {"id": 5, "type": "detect", "video_id": "sample", "index": 1, "image_path": None})
    case(
        "unknown-type-error-and-alive",
        response is not None and response.get("type") == "error"
        and _check_id_echo(response, 4) is None
        and alive is not None and alive.get("type") == "detections",
        str(response),
    )

    response = session.handle_line("this is not json\n")
    case(
        "malformed-line-error-with-null-id",
        response is not None and response.get("type") == "error" and response.get("id") is None,
        str(response),
    )

    first = _ask(session, {"id": 6, "type": "set_global_pool", "video_id": "sample", "frames": [0, 1], "stage": "inference"})
    second = _ask(session, {"id": 7, "type": "set_global_pool", "video_id": "sample", "frames": [0, 1], "stage": "inference"})
    case(
        "pool-ack-idempotent",
        first is not None and first.get("type") == "ack" and second is not None
        and second.get("type") == "ack" and session.pools == {"sample": [0, 1]},
        str(first),
    )

    try:
        _ask(session, {"id": 8, "type": "shutdown"})
        case("shutdown-exits", False, "shutdown did not stop the session")
    except ShutdownRequested:
        case("shutdown-exits", True)

    # Fault injections: the checks above must catch a broken backend.
    broken = _replay_session(Faults(break_id_echo=True))
    response = _ask(broken, {"id": 10, "type": "detect", "video_id": "sample", "index": 0, "image_path": None})
    case(
        "detects-broken-id-echo",
        _check_id_echo(response, 10) is not None,
        "id check caught the fault" if _check_id_echo(response, 10) else "fault went unnoticed",
    )

    oversized = _replay_session(Faults(score_offset=0.4))
    response = _ask(oversized, {"id": 11, "type": "score", "video_id": "sample", "index": 0, "image_path": None})
    case(
        "detects-out-of-range-score",
        _check_score_range(response) is not None,
        "range check caught the fault" if _check_score_range(response) else "fault went unnoticed",
    )

    return results
