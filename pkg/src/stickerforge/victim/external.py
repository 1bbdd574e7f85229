"""Newline-delimited JSON wire protocol for black-box classifier backends.

Request:  {"id": <int>, "width": W, "height": H,
           "pixels": "<base64 of row-major RGB bytes>"}
Response: {"id": <int>, "label_id": <int>, "label_name": "<str>",
           "probs": [<real> ...]}

One response per request; responses may arrive out of order and are matched
by id. The client validates every verdict invariant locally. Transports:
a child process's standard streams, or a local TCP socket.
"""

from __future__ import annotations

import base64
import json
import os
import selectors
import shlex
import socket
import subprocess
import sys
import time
from dataclasses import dataclass

import numpy as np

from ..errors import BackendUnavailableError, InvalidInputError, ProtocolError
from ..imaging import PixelImage
from .cnn import ClassifierVerdict, verdict_from_probs

DEFAULT_TIMEOUT = 30.0


class _PipeTransport:
    def __init__(self, cmd):
        argv = shlex.split(cmd) if isinstance(cmd, str) else list(cmd)
        self.proc = subprocess.Popen(
            argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, bufsize=0
        )
        self.read_fd = self.proc.stdout.fileno()

    def send(self, data: bytes) -> None:
        try:
            self.proc.stdin.write(data)
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise BackendUnavailableError(f"backend process is gone: {exc}") from exc

    def close(self) -> None:
        for stream in (self.proc.stdin, self.proc.stdout):
            try:
                stream.close()
            except OSError:
                pass
        self.proc.terminate()
        try:
            self.proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self.proc.kill()
            self.proc.wait()


class _SocketTransport:
    def __init__(self, host: str, port: int, timeout: float):
        try:
            self.sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise BackendUnavailableError(f"cannot connect to {host}:{port}: {exc}") from exc
        self.sock.setblocking(False)
        self.read_fd = self.sock.fileno()

    def send(self, data: bytes) -> None:
        try:
            self.sock.setblocking(True)
            self.sock.sendall(data)
            self.sock.setblocking(False)
        except OSError as exc:
            raise BackendUnavailableError(f"socket send failed: {exc}") from exc

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


class ExternalClassifier:
    """Client for one external classifier connection.

    Not shareable across processes: concurrent workers must each hold their
    own connection (spawn one per worker via ExternalSpec).
    """

    input_size = None
    class_names = None

    def __init__(self, transport, timeout: float = DEFAULT_TIMEOUT):
        self._transport = transport
        self._timeout = timeout
        self._next_id = 0
        self._buffer = b""
        self._responses: dict[int, dict] = {}
        self._pending: set[int] = set()
        self._selector = selectors.DefaultSelector()
        self._selector.register(transport.read_fd, selectors.EVENT_READ)

    @classmethod
    def spawn(cls, cmd, timeout: float = DEFAULT_TIMEOUT) -> "ExternalClassifier":
        """Start a backend subprocess and speak the protocol over its stdio."""
        return cls(_PipeTransport(cmd), timeout=timeout)

    @classmethod
    def over_tcp(cls, host: str, port: int,
                 timeout: float = DEFAULT_TIMEOUT) -> "ExternalClassifier":
        return cls(_SocketTransport(host, port, timeout), timeout=timeout)

    def predict(self, img: PixelImage) -> ClassifierVerdict:
        request_id = self._next_id
        self._next_id += 1
        request = {
            "id": request_id,
            "width": img.width,
            "height": img.height,
            "pixels": base64.b64encode(img.pixels.tobytes()).decode("ascii"),
        }
        self._pending.add(request_id)
        self._transport.send(json.dumps(request).encode("utf-8") + b"\n")
        response = self._await_response(request_id)
        self._pending.discard(request_id)
        return self._validate(response)

    def _await_response(self, want_id: int) -> dict:
        deadline = time.monotonic() + self._timeout
        while True:
            if want_id in self._responses:
                return self._responses.pop(want_id)
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise BackendUnavailableError(
                    f"no response for request {want_id} within {self._timeout:.1f}s"
                )
            if not self._selector.select(timeout=remaining):
                continue
            chunk = os.read(self._transport.read_fd, 65536)
            if not chunk:
                raise BackendUnavailableError("backend closed the connection")
            self._buffer += chunk
            while b"\n" in self._buffer:
                line, self._buffer = self._buffer.split(b"\n", 1)
                if not line.strip():
                    continue
                self._ingest_line(line)

    def _ingest_line(self, line: bytes) -> None:
        try:
            msg = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ProtocolError(f"malformed response line: {exc}") from exc
        if not isinstance(msg, dict) or not isinstance(msg.get("id"), int):
            raise ProtocolError(f"response lacks an integer id: {line[:200]!r}")
        if msg["id"] not in self._pending:
            raise ProtocolError(f"response id {msg['id']} matches no pending request")
        self._responses[msg["id"]] = msg

    def _validate(self, msg: dict) -> ClassifierVerdict:
        try:
            label_id = msg["label_id"]
            label_name = msg["label_name"]
            probs = msg["probs"]
        except KeyError as exc:
            raise ProtocolError(f"response missing field {exc}") from exc
        if not isinstance(label_id, int) or not isinstance(label_name, str):
            raise ProtocolError("label_id must be int and label_name str")
        if not isinstance(probs, list) or not probs:
            raise ProtocolError("probs must be a non-empty list")
        try:
            vec = np.asarray([float(p) for p in probs], dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise ProtocolError(f"probs are not numeric: {exc}") from exc
        names = [label_name if i == int(np.argmax(vec)) else str(i)
                 for i in range(len(vec))]
        try:
            verdict = verdict_from_probs(vec, names)
        except InvalidInputError as exc:
            raise ProtocolError(f"probs violate verdict invariants: {exc}") from exc
        if verdict.label_id != label_id:
            raise ProtocolError(
                f"label_id {label_id} is not the argmax of probs ({verdict.label_id})"
            )
        return verdict

    def close(self) -> None:
        try:
            self._selector.close()
        finally:
            self._transport.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def serve_stdio(handler, stdin=None, stdout=None) -> None:
    """Reference server loop: answer requests on stdio until EOF.

    ``handler(pixels)`` receives the decoded (h, w, 3) uint8 array and returns
    ``(probs, class_names)``; label fields are derived from the argmax.
    """
    stdin = stdin if stdin is not None else sys.stdin.buffer
    stdout = stdout if stdout is not None else sys.stdout.buffer
    for line in stdin:
        if not line.strip():
            continue
        msg = json.loads(line.decode("utf-8"))
        raw = base64.b64decode(msg["pixels"])
        pixels = np.frombuffer(raw, dtype=np.uint8).reshape(
            int(msg["height"]), int(msg["width"]), 3
        )
        probs, class_names = handler(pixels)
        probs = [float(p) for p in probs]
        label_id = int(np.argmax(probs))
        response = {
            "id": msg["id"],
            "label_id": label_id,
            "label_name": str(class_names[label_id]),
            "probs": probs,
        }
        stdout.write(json.dumps(response).encode("utf-8") + b"\n")
        stdout.flush()


@dataclass(frozen=True)
class ExternalSpec:
    """Picklable recipe for opening one connection per worker."""

    cmd: str
    timeout: float = DEFAULT_TIMEOUT

    def create(self) -> ExternalClassifier:
        return ExternalClassifier.spawn(self.cmd, timeout=self.timeout)
