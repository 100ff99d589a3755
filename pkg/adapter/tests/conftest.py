"""Wire-level test client and canned files; no imports from the host package."""

from __future__ import annotations

import json
import subprocess
import sys

import pytest

DETECTIONS = {
    "detections": [
        {"video_id": "v", "index": 0,
         "boxes": [{"label": "cat", "bbox": [1.0, 2.0, 30.5, 40.25], "score": 0.875}]},
        {"video_id": "v", "index": 1,
         "boxes": [{"label": "dog", "bbox": [0.0, 0.0, 5.0, 5.0], "score": 0.25},
                    {"label": "cat", "bbox": [2.0, 2.0, 9.0, 9.0], "score": 1.0}]},
        {"video_id": "w", "index": 0, "boxes": []},
    ]
}
SCORES = {
    "scores": [
        {"video_id": "v", "index": 0, "score": 0.125},
        {"video_id": "v", "index": 1, "score": 0.5},
        {"video_id": "w", "index": 0, "score": 0.9375},
    ]
}


@pytest.fixture
def replay_files(tmp_path):
    det = tmp_path / "detections.json"
    det.write_text(json.dumps(DETECTIONS))
    scores = tmp_path / "scores.json"
    scores.write_text(json.dumps(SCORES))
    return det, scores


def adapter_argv(*flags: str) -> list[str]:
    return [sys.executable, "-m", "odd_adapter", *flags]


class WireClient:
    """Minimal protocol host for driving the adapter in tests."""

    def __init__(self, argv: list[str]):
        self.proc = subprocess.Popen(
            argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True
        )
        self.hello = json.loads(self._read())
        self._write({"type": "hello", "name": "test-host", "capabilities": []})
        self._next_id = 1

    def _read(self) -> str:
        line = self.proc.stdout.readline()
        if not line:
            raise AssertionError("adapter closed its output")
        return line

    def _write(self, payload) -> None:
        self.proc.stdin.write(json.dumps(payload, separators=(",", ":")) + "\n")
        self.proc.stdin.flush()

    def write_raw(self, text: str) -> None:
        self.proc.stdin.write(text)
        self.proc.stdin.flush()

    def read_response(self) -> dict:
        return json.loads(self._read())

    def request(self, payload: dict) -> dict:
        request_id = self._next_id
        self._next_id += 1
        self._write({"id": request_id, **payload})
        response = self.read_response()
        assert response.get("id") == request_id, response
        return response

    def shutdown(self, timeout: float = 5.0) -> int:
        self._write({"id": self._next_id, "type": "shutdown"})
        return self.proc.wait(timeout=timeout)

    def kill(self) -> None:
        if self.proc.poll() is None:
            self.proc.kill()
            self.proc.wait()


@pytest.fixture
def client(replay_files):
    det, scores = replay_files
    wire = WireClient(adapter_argv("--mode", "replay", "--detections", str(det), "--scores", str(scores)))
    yield wire
    wire.kill()
