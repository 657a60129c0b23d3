"""Newline-delimited JSON client for external plan providers.

One request per line, one response per line, UTF-8. Two transports are
supported: a TCP connection opened per request, and a long-lived child
process spoken to over its standard streams.
"""
from __future__ import annotations

import json
import queue
import shlex
import socket
import subprocess
import threading
import time
from dataclasses import dataclass
from typing import Optional, Sequence

from .worldsim import Frame, FrameError, SensorConfig, frame_from_dict, frame_to_dict, validate_frame
from .imaginer import VisualPlan

PROTOCOL_VERSION = 1


class PlanProviderError(RuntimeError):
    pass


class PlanTimeoutError(PlanProviderError, TimeoutError):
    pass


class ProtocolError(PlanProviderError):
    def __init__(self, message: str, path: str = "$"):
        super().__init__(f"{path}: {message}")
        self.path = path


class PlanValidationError(PlanProviderError, ValueError):
    def __init__(self, message: str, path: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class RemoteError(PlanProviderError):
    """The provider answered with an explicit error message."""


class ProviderUnreachable(PlanProviderError):
    pass


def _dumps(doc: dict) -> bytes:
    return (json.dumps(doc, separators=(",", ":"), ensure_ascii=False) + "\n").encode("utf-8")


def encode_request(frame: Frame, instruction: str, horizon_frames: int) -> bytes:
    return _dumps({"v": PROTOCOL_VERSION, "type": "plan_request", "instruction": instruction,
                   "horizon_frames": int(horizon_frames), "frame": frame_to_dict(frame)})


def encode_response(frames: Sequence[Frame]) -> bytes:
    return _dumps({"v": PROTOCOL_VERSION, "type": "plan_response",
                   "frames": [frame_to_dict(f) for f in frames]})


def encode_error(message: str) -> bytes:
    return _dumps({"v": PROTOCOL_VERSION, "type": "error", "message": message})


def _load_line(line: bytes) -> dict:
    try:
        doc = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"not a JSON document ({exc})") from exc
    if not isinstance(doc, dict):
        raise ProtocolError("expected a JSON object")
    if doc.get("v") != PROTOCOL_VERSION:
        raise ProtocolError(f"unsupported version {doc.get('v')!r}", "v")
    return doc


def parse_request(line: bytes) -> tuple[Frame, str, int]:
    """Server-side helper: decode one request line."""
    doc = _load_line(line)
    if doc.get("type") != "plan_request":
        raise ProtocolError(f"unexpected type {doc.get('type')!r}", "type")
    if not isinstance(doc.get("instruction"), str):
        raise ProtocolError("expected a string", "instruction")
    h = doc.get("horizon_frames")
    if not isinstance(h, int) or isinstance(h, bool) or h < 1:
        raise ProtocolError("expected a positive integer", "horizon_frames")
    try:
        frame = frame_from_dict(doc.get("frame"), "frame")
    except FrameError as exc:
        raise ProtocolError(str(exc).split(": ", 1)[-1], exc.path) from exc
    return frame, doc["instruction"], h


def decode_response(line: bytes, horizon_frames: int,
                    sensor: Optional[SensorConfig] = None) -> VisualPlan:
    doc = _load_line(line)
    kind = doc.get("type")
    if kind == "error":
        raise RemoteError(str(doc.get("message", "")))
    if kind != "plan_response":
        raise ProtocolError(f"unexpected type {kind!r}", "type")
    raw = doc.get("frames")
    if not isinstance(raw, list):
        raise ProtocolError("expected a list", "frames")
    frames = []
    for k, item in enumerate(raw):
        try:
            frames.append(frame_from_dict(item, f"frames[{k}]"))
        except FrameError as exc:
            raise ProtocolError(str(exc).split(": ", 1)[-1], exc.path) from exc
    if len(frames) != horizon_frames + 1:
        raise PlanValidationError(
            f"{len(frames)} frames returned, expected {horizon_frames + 1}", "frames")
    for k, f in enumerate(frames):
        try:
            validate_frame(f, sensor, path=f"frames[{k}]")
        except FrameError as exc:
            raise PlanValidationError(str(exc).split(": ", 1)[-1], exc.path) from exc
        if k and f.frame_index <= frames[k - 1].frame_index:
            raise PlanValidationError("frame indices not strictly increasing", f"frames[{k}].index")
    return VisualPlan(tuple(frames), horizon_frames)


# --- transports --------------------------------------------------------------

@dataclass(frozen=True)
class TcpEndpoint:
    host: str
    port: int

    def exchange(self, payload: bytes, timeout: float) -> bytes:
        deadline = time.monotonic() + timeout
        try:
            sock = socket.create_connection((self.host, self.port), timeout=timeout)
        except socket.timeout as exc:
            raise PlanTimeoutError(f"connect to {self.host}:{self.port} timed out") from exc
        except OSError as exc:
            raise ProviderUnreachable(f"cannot reach {self.host}:{self.port}: {exc}") from exc
        with sock:
            try:
                sock.sendall(payload)
                buf = bytearray()
                while b"\n" not in buf:
                    left = deadline - time.monotonic()
                    if left <= 0:
                        raise PlanTimeoutError(f"no response within {timeout} s")
                    sock.settimeout(left)
                    chunk = sock.recv(65536)
                    if not chunk:
                        if buf:
                            raise ProtocolError("connection closed mid-message")
                        raise ProtocolError("connection closed before any response")
                    buf.extend(chunk)
            except socket.timeout as exc:
                raise PlanTimeoutError(f"no response within {timeout} s") from exc
            except ConnectionError as exc:
                raise ProtocolError(f"connection lost: {exc}") from exc
        return bytes(buf[:buf.index(b"\n")])

    def close(self):
        pass


class StdioEndpoint:
    """A child process answering one line per request line."""

    def __init__(self, argv: Sequence[str]):
        self.argv = list(argv)
        self._proc: Optional[subprocess.Popen] = None
        self._lines: "queue.Queue[bytes]" = queue.Queue()
        self._lock = threading.Lock()

    def _start(self):
        try:
            self._proc = subprocess.Popen(self.argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                          stderr=subprocess.DEVNULL)
        except OSError as exc:
            raise ProviderUnreachable(f"cannot start {self.argv!r}: {exc}") from exc
        threading.Thread(target=self._pump, args=(self._proc.stdout,), daemon=True).start()

    def _pump(self, stream):
        for line in iter(stream.readline, b""):
            self._lines.put(line)
        self._lines.put(b"")

    def exchange(self, payload: bytes, timeout: float) -> bytes:
        with self._lock:
            if self._proc is None:
                self._start()
            try:
                self._proc.stdin.write(payload)
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise ProtocolError(f"provider closed its input: {exc}") from exc
            try:
                line = self._lines.get(timeout=timeout)
            except queue.Empty as exc:
                raise PlanTimeoutError(f"no response within {timeout} s") from exc
            if not line:
                raise ProtocolError("provider exited before any response")
            if not line.endswith(b"\n"):
                raise ProtocolError("provider exited mid-message")
            return line[:-1]

    def close(self):
        if self._proc is not None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                self._proc.kill()
            self._proc = None


def parse_endpoint(text: str):
    """``tcp://host:port``, ``host:port`` or ``stdio:<command line>``."""
    if text.startswith("stdio:"):
        argv = shlex.split(text[len("stdio:"):])
        if not argv:
            raise ValueError("empty stdio command")
        return StdioEndpoint(argv)
    addr = text[len("tcp://"):] if text.startswith("tcp://") else text
    host, sep, port = addr.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"bad endpoint {text!r}; expected host:port or stdio:<cmd>")
    return TcpEndpoint(host or "127.0.0.1", int(port))


def request_external_plan(endpoint, current: Frame, instruction: str, horizon_frames: int,
                          timeout: float = 10.0, sensor: Optional[SensorConfig] = None) -> VisualPlan:
    if isinstance(endpoint, str):
        endpoint = parse_endpoint(endpoint)
    line = endpoint.exchange(encode_request(current, instruction, horizon_frames), timeout)
    return decode_response(line, horizon_frames, sensor)
