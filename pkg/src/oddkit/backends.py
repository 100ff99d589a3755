"""Detector backends and per-frame score sources.

A backend serves detections (and optionally difficulty scores and
reference-pool announcements) for frames named by key. Two kinds exist:

* replay — answers from a detection dump file, deterministically;
* subprocess — an external program speaking a line-delimited JSON protocol
  over its standard streams.

Wire protocol: one JSON object per line, UTF-8, no pretty-printing. The
backend writes a ``hello`` line first, the host answers with its own
``hello``, then every host request carries a monotonically increasing
``id`` that the response must echo. Either side may send
``{"id":int|null,"type":"error","message":str}``. A ``shutdown`` request is
answered by process exit 0 within five seconds, not by a response line.
"""

from __future__ import annotations

import collections
import enum
import json
import logging
import queue
import shlex
import subprocess
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Mapping

from . import files
from .errors import ConfigurationError, InputError, JoinMismatchError, ProtocolError, ValidationError
from .metric import MetricConfig, odd_score
from .model import Detection, DetectionDump, FrameKey, FrameRecord

logger = logging.getLogger("oddkit.backends")

HANDSHAKE_TIMEOUT = 10.0
REQUEST_TIMEOUT = 30.0
SHUTDOWN_TIMEOUT = 5.0
TRANSCRIPT_LINES = 5
HOST_HELLO = {"type": "hello", "name": "odd-host", "capabilities": []}


class BackendKind(enum.Enum):
    REPLAY = "replay"
    SUBPROCESS = "exec"


@dataclass(frozen=True)
class BackendDescriptor:
    """How to obtain a backend: a dump path to replay or a command to spawn."""

    kind: BackendKind
    locator: str
    scores_path: str | None = None

    @classmethod
    def parse(cls, spec: str) -> "BackendDescriptor":
        """Parse ``replay:<path>`` or ``exec:<command>``."""
        kind, sep, rest = spec.partition(":")
        if not sep or kind not in ("replay", "exec") or not rest:
            raise ConfigurationError(
                f"backend spec must look like 'replay:<path>' or 'exec:<command>', got {spec!r}"
            )
        return cls(BackendKind(kind), rest)


class DetectorBackend:
    """Interface shared by all backends; one request in flight at a time."""

    name: str = "backend"
    capabilities: frozenset[str] = frozenset()

    def detect(self, key: FrameKey, image_path: str | None = None) -> list[Detection]:
        raise NotImplementedError

    def score(self, key: FrameKey, image_path: str | None = None) -> float:
        raise NotImplementedError

    def set_global_pool(self, video_id: str, frames: list[int]) -> None:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self) -> "DetectorBackend":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class ReplayBackend(DetectorBackend):
    """Serves stored detections (and optionally stored scores) verbatim."""

    def __init__(self, dump: DetectionDump, scores: Mapping[FrameKey, float] | None = None, name: str = "replay") -> None:
        self.name = name
        self._dump = dump
        self._scores = scores
        caps = {"detect"}
        if scores is not None:
            caps.add("score")
        self.capabilities = frozenset(caps)

    def detect(self, key: FrameKey, image_path: str | None = None) -> list[Detection]:
        try:
            return list(self._dump[key])
        except KeyError:
            raise JoinMismatchError(f"replay backend {self.name!r} has no frame {key.video_id}[{key.index}]") from None

    def score(self, key: FrameKey, image_path: str | None = None) -> float:
        if self._scores is None:
            raise ConfigurationError(f"replay backend {self.name!r} was opened without a score file")
        try:
            return self._scores[key]
        except KeyError:
            raise JoinMismatchError(f"replay backend {self.name!r} has no score for {key.video_id}[{key.index}]") from None

    def set_global_pool(self, video_id: str, frames: list[int]) -> None:
        raise ConfigurationError(f"replay backend {self.name!r} does not support global reference pools")


class SubprocessBackend(DetectorBackend):
    """Host side of the line-delimited JSON protocol."""

    def __init__(
        self,
        command: str,
        handshake_timeout: float = HANDSHAKE_TIMEOUT,
        request_timeout: float = REQUEST_TIMEOUT,
    ) -> None:
        self._request_timeout = request_timeout
        self._transcript: collections.deque[str] = collections.deque(maxlen=TRANSCRIPT_LINES)
        self._lines: queue.Queue[bytes | None] = queue.Queue()
        self._next_id = 1
        self._lock = threading.Lock()
        self.last_request_seconds = 0.0
        argv = shlex.split(command)
        if not argv:
            raise ConfigurationError("backend command is empty")
        try:
            self._proc = subprocess.Popen(
                argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, stderr=None
            )
        except OSError as exc:
            raise ConfigurationError(f"cannot spawn backend {command!r}: {exc}") from exc
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

        hello = self._read_message(handshake_timeout, during="handshake")
        if hello.get("type") != "hello":
            raise self._fail(f"first backend message must be 'hello', got type {hello.get('type')!r}")
        name = hello.get("name")
        caps = hello.get("capabilities")
        if not isinstance(name, str) or not isinstance(caps, list) or not all(isinstance(c, str) for c in caps):
            raise self._fail("hello must carry a string 'name' and a list of string 'capabilities'")
        self.name = name
        self.capabilities = frozenset(caps)
        self._write_message(HOST_HELLO)

    # -- low-level plumbing ------------------------------------------------

    def _read_loop(self) -> None:
        stdout = self._proc.stdout
        assert stdout is not None
        for raw in stdout:
            self._lines.put(raw)
        self._lines.put(None)

    def _note(self, direction: str, text: str) -> None:
        if len(text) > 400:
            text = text[:400] + "...(truncated)"
        self._transcript.append(direction + " " + text)

    def _fail(self, message: str) -> ProtocolError:
        return ProtocolError(f"backend {getattr(self, 'name', '?')!r}: {message}", tuple(self._transcript))

    def _write_message(self, payload: dict[str, Any]) -> None:
        line = json.dumps(payload, separators=(",", ":"))
        self._note(">>", line)
        stdin = self._proc.stdin
        assert stdin is not None
        try:
            stdin.write(line.encode("utf-8") + b"\n")
            stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise self._fail(f"backend closed its input: {exc}") from exc

    def _read_message(self, timeout: float, during: str) -> dict[str, Any]:
        try:
            raw = self._lines.get(timeout=timeout)
        except queue.Empty:
            raise self._fail(f"timed out after {timeout:g}s waiting for a response ({during})") from None
        if raw is None:
            code = self._proc.poll()
            raise self._fail(f"backend exited (code {code}) during {during}")
        try:
            text = raw.decode("utf-8").rstrip("\r\n")
        except UnicodeDecodeError:
            self._note("<<", repr(raw))
            raise self._fail(f"backend wrote non-UTF-8 bytes during {during}") from None
        self._note("<<", text)
        try:
            message = json.loads(text)
        except json.JSONDecodeError:
            raise self._fail(f"backend wrote a non-JSON line during {during}: {text!r}") from None
        if not isinstance(message, dict):
            raise self._fail(f"backend wrote a non-object JSON line during {during}")
        return message

    def request(self, payload: dict[str, Any], expect_type: str) -> dict[str, Any]:
        """Send one id-stamped request and return its validated response."""
        with self._lock:
            request_id = self._next_id
            self._next_id += 1
            payload = {"id": request_id, **payload}
            started = time.perf_counter()
            self._write_message(payload)
            response = self._read_message(self._request_timeout, during=f"{payload['type']} id={request_id}")
            self.last_request_seconds = time.perf_counter() - started
        if response.get("id") != request_id:
            raise self._fail(f"response id {response.get('id')!r} does not echo request id {request_id}")
        if response.get("type") == "error":
            raise self._fail(f"backend reported an error: {response.get('message')!r}")
        if response.get("type") != expect_type:
            raise self._fail(f"expected a {expect_type!r} response, got {response.get('type')!r}")
        return response

    # -- protocol operations -----------------------------------------------

    def detect(self, key: FrameKey, image_path: str | None = None) -> list[Detection]:
        response = self.request(
            {"type": "detect", "video_id": key.video_id, "index": key.index, "image_path": image_path},
            expect_type="detections",
        )
        try:
            return files.parse_boxes(response.get("boxes"), key, f"backend {self.name!r}")
        except (ValidationError, InputError) as exc:
            raise self._fail(f"detections failed schema validation: {exc}") from exc

    def score(self, key: FrameKey, image_path: str | None = None) -> float:
        response = self.request(
            {"type": "score", "video_id": key.video_id, "index": key.index, "image_path": image_path},
            expect_type="score_value",
        )
        value = response.get("value")
        if not isinstance(value, (int, float)) or not 0.0 <= float(value) <= 1.0:
            raise self._fail(f"score field 'value' must be a number in [0, 1], got {value!r}")
        return float(value)

    def set_global_pool(self, video_id: str, frames: list[int]) -> None:
        self.request(
            {"type": "set_global_pool", "video_id": video_id, "frames": list(frames), "stage": "inference"},
            expect_type="ack",
        )

    def close(self) -> None:
        if self._proc.poll() is not None:
            return
        try:
            with self._lock:
                self._write_message({"id": self._next_id, "type": "shutdown"})
                self._next_id += 1
        except ProtocolError:
            pass
        try:
            self._proc.wait(timeout=SHUTDOWN_TIMEOUT)
        except subprocess.TimeoutExpired:
            logger.warning("backend %r ignored shutdown; killing it", self.name)
            self._proc.kill()
            self._proc.wait()

    @property
    def exit_code(self) -> int | None:
        return self._proc.poll()


def open_backend(
    desc: BackendDescriptor,
    handshake_timeout: float = HANDSHAKE_TIMEOUT,
    request_timeout: float = REQUEST_TIMEOUT,
) -> DetectorBackend:
    """Open a backend from its descriptor (parse a dump, or spawn and handshake)."""
    if desc.kind is BackendKind.REPLAY:
        dump = files.read_dump(desc.locator)
        scores = files.read_scores(desc.scores_path) if desc.scores_path else None
        return ReplayBackend(dump, scores, name=f"replay:{desc.locator}")
    return SubprocessBackend(desc.locator, handshake_timeout, request_timeout)


# -- score sources ----------------------------------------------------------


class ScoreSource:
    """Provider of per-frame difficulty scores for the scheduler."""

    name: str = "scores"

    def score_for(self, frame: FrameRecord) -> float:
        raise NotImplementedError


class FileScoreSource(ScoreSource):
    """Scores read from a predicted-score file."""

    def __init__(self, scores: Mapping[FrameKey, float], name: str = "score-file") -> None:
        self.name = name
        self._scores = scores

    def score_for(self, frame: FrameRecord) -> float:
        try:
            return self._scores[frame.key]
        except KeyError:
            key = frame.key
            raise ValidationError(f"no score for frame {key.video_id}[{key.index}]") from None


class OracleScoreSource(ScoreSource):
    """Ground-truth difficulty computed on the fly from a detection dump.

    Useful for upper-bound studies where the predictor is assumed perfect.
    """

    def __init__(self, dump: DetectionDump, cfg: MetricConfig = MetricConfig(), name: str = "oracle") -> None:
        self.name = name
        self._dump = dump
        self._cfg = cfg
        self._cache: dict[FrameKey, float] = {}

    def score_for(self, frame: FrameRecord) -> float:
        value = self._cache.get(frame.key)
        if value is None:
            boxes = self._dump.get(frame.key, [])
            value = odd_score(boxes, frame.ground_truth, self._cfg).value
            self._cache[frame.key] = value
        return value


class BackendScoreSource(ScoreSource):
    """Scores requested from a backend advertising the ``score`` capability."""

    def __init__(self, backend: DetectorBackend) -> None:
        if "score" not in backend.capabilities:
            raise ConfigurationError(f"backend {backend.name!r} does not advertise the 'score' capability")
        self.name = f"backend:{backend.name}"
        self._backend = backend

    def score_for(self, frame: FrameRecord) -> float:
        return self._backend.score(frame.key, frame.image_path)


# -- conformance checking ----------------------------------------------------


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ConformanceReport:
    results: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def add(self, name: str, passed: bool, detail: str = "") -> None:
        self.results.append(CheckResult(name, passed, detail))


def backend_check(
    command: str,
    probe: FrameKey | None = None,
    image_path: str | None = None,
    handshake_timeout: float = HANDSHAKE_TIMEOUT,
    request_timeout: float = REQUEST_TIMEOUT,
) -> ConformanceReport:
    """Run the wire-protocol conformance suite against an external command.

    Covers the handshake, id echoing, schema validation of detections and
    scores, error behavior for unknown message types and malformed lines,
    liveness after errors, and clean shutdown.
    """
    report = ConformanceReport()
    probe = probe or FrameKey("conformance-probe", 0)
    try:
        backend = SubprocessBackend(command, handshake_timeout, request_timeout)
    except (ProtocolError, ConfigurationError) as exc:
        report.add("handshake", False, str(exc))
        return report
    report.add("handshake", True, f"name={backend.name!r} capabilities={sorted(backend.capabilities)}")

    def run_case(name: str, fn) -> None:
        try:
            detail = fn()
            report.add(name, True, detail or "")
        except (ProtocolError, ValidationError) as exc:
            report.add(name, False, str(exc).splitlines()[0])

    if "detect" in backend.capabilities:
        def check_detect() -> str:
            try:
                boxes = backend.detect(probe, image_path)
                return f"{len(boxes)} box(es)"
            except ProtocolError as exc:
                # A well-formed error response for an unknown frame is conformant.
                if "reported an error" in str(exc):
                    return "error response (unknown probe frame) accepted"
                raise
        run_case("detect", check_detect)

    if "score" in backend.capabilities:
        def check_score() -> str:
            try:
                value = backend.score(probe, image_path)
                return f"value={value!r}"
            except ProtocolError as exc:
                if "reported an error" in str(exc):
                    return "error response (unknown probe frame) accepted"
                raise
        run_case("score", check_score)

    if "global_pool" in backend.capabilities:
        run_case("set_global_pool", lambda: backend.set_global_pool(probe.video_id, [probe.index]) or "ack")

    def check_unknown_type() -> str:
        try:
            backend.request({"type": "odd-conformance-unknown"}, expect_type="never")
        except ProtocolError as exc:
            if "reported an error" not in str(exc):
                raise
        else:
            raise ProtocolError("backend answered an unknown message type without an error")
        if backend.exit_code is not None:
            raise ProtocolError("backend died after an unknown message type")
        return "error response, process alive"
    run_case("unknown-message-type", check_unknown_type)

    def check_malformed_line() -> str:
        # Bypass the JSON writer: feed a garbage line directly.
        backend._note(">>", "this is not json")
        try:
            backend._proc.stdin.write(b"this is not json\n")
            backend._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ProtocolError(f"backend closed its input before the malformed-line probe: {exc}")
        response = backend._read_message(request_timeout, during="malformed-line probe")
        if response.get("type") != "error":
            raise ProtocolError(f"expected an error response to a malformed line, got {response.get('type')!r}")
        if response.get("id") is not None:
            raise ProtocolError(f"error for an unparseable line must carry id null, got {response.get('id')!r}")
        if backend.exit_code is not None:
            raise ProtocolError("backend died after a malformed line")
        return "error response with id null, process alive"
    run_case("malformed-line", check_malformed_line)

    def check_shutdown() -> str:
        backend.close()
        code = backend.exit_code
        if code != 0:
            raise ProtocolError(f"backend exited with code {code!r} after shutdown")
        return "exit 0"
    run_case("shutdown", check_shutdown)
    return report
