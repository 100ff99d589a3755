"""Protocol session: one JSON object per line, one response per request.

The session writes its hello first, silently consumes the host's hello,
echoes every request id, answers unknown message types and unparseable
lines with in-protocol errors (staying alive), and exits cleanly on
``shutdown``. Fault switches exist purely so the conformance self-test can
prove that a checker catches a misbehaving backend.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass
from typing import Any, TextIO


@dataclass
class Faults:
    """Deliberate misbehavior for self-test purposes; all off by default."""

    break_id_echo: bool = False
    score_offset: float = 0.0


class ShutdownRequested(Exception):
    pass


class ProtocolSession:
    def __init__(self, store, name: str = "odd-adapter", faults: Faults | None = None) -> None:
        self.store = store
        self.name = name
        self.faults = faults or Faults()
        self.pools: dict[str, list[int]] = {}

    def hello(self) -> dict[str, Any]:
        return {"type": "hello", "name": self.name, "capabilities": list(self.store.capabilities)}

    def _echo(self, request_id: Any) -> Any:
        if self.faults.break_id_echo and isinstance(request_id, int):
            return request_id + 1
        return request_id

    def handle_line(self, line: str) -> dict[str, Any] | None:
        """Response for one input line; None when no response is due."""
        line = line.strip()
        if not line:
            return None
        try:
            message = json.loads(line)
            if not isinstance(message, dict):
                raise ValueError
        except ValueError:
            return {"id": None, "type": "error", "message": "unparseable line"}
        if message.get("type") == "hello":
            return None
        request_id = self._echo(message.get("id"))
        mtype = message.get("type")
        if mtype == "shutdown":
            raise ShutdownRequested
        if mtype == "detect":
            return self._detect(request_id, message)
        if mtype == "score":
            return self._score(request_id, message)
        if mtype == "set_global_pool":
            video_id = message.get("video_id")
            self.pools[video_id] = list(message.get("frames", []))
            return {"id": request_id, "type": "ack"}
        return {"id": request_id, "type": "error", "message": f"unknown message type {mtype!r}"}

    def _frame(self, message: dict[str, Any]) -> tuple[str, int, str | None]:
        return message.get("video_id"), message.get("index"), message.get("image_path")

    def _detect(self, request_id: Any, message: dict[str, Any]) -> dict[str, Any]:
        if "detect" not in self.store.capabilities:
            return {"id": request_id, "type": "error", "message": "detect capability not configured"}
        video_id, index, image_path = self._frame(message)
        try:
            boxes = self.store.detect(video_id, index, image_path)
        except KeyError as exc:
            return {"id": request_id, "type": "error", "message": f"unknown frame: {exc}"}
        return {"id": request_id, "type": "detections", "boxes": boxes}

    def _score(self, request_id: Any, message: dict[str, Any]) -> dict[str, Any]:
        if "score" not in self.store.capabilities:
            return {"id": request_id, "type": "error", "message": "score capability not configured"}
        video_id, index, image_path = self._frame(message)
        try:
            value = self.store.score(video_id, index, image_path)
        except KeyError as exc:
            return {"id": request_id, "type": "error", "message": f"unknown frame: {exc}"}
        return {"id": request_id, "type": "score_value", "value": value + self.faults.score_offset}


def serve(session: ProtocolSession, stdin: TextIO | None = None, stdout: TextIO | None = None) -> int:
    """Run the single-threaded request loop until shutdown or EOF."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout

    def emit(payload: dict[str, Any]) -> None:
        stdout.write(json.dumps(payload, separators=(",", ":")) + "\n")
        stdout.flush()

    emit(session.hello())
    for line in stdin:
        try:
            response = session.handle_line(line)
        except ShutdownRequested:
            return 0
        if response is not None:
            emit(response)
    return 0
