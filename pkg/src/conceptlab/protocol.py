"""Newline-delimited JSON wire protocol for remote epsilon oracles.

Frames are UTF-8 JSON objects terminated by "\\n". On connect the server
sends a hello frame {"op":"hello","version":1,"m":...,"T":...}; afterwards
each request {"id","op":"score","prompt","t","y":[...]} gets exactly one
response {"id","eps":[...]} or {"id","error":{"code","msg"}}.
"""

from __future__ import annotations

import json
import socket
import socketserver
import threading
from pathlib import Path

import numpy as np

from conceptlab.concepts import PromptLookupError
from conceptlab.oracle import ScoreOracle

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT = 30.0


class TransportError(ConnectionError):
    """Connection failed, closed mid-request, or timed out at the byte level."""


class OracleTimeoutError(TransportError):
    """No response within the client timeout."""


class ProtocolError(RuntimeError):
    """Peer sent a frame that does not conform to the protocol."""


class VersionMismatchError(ProtocolError):
    """Peer negotiated an unsupported protocol version."""


class RemoteEvaluationError(RuntimeError):
    """Server answered with an error frame."""

    def __init__(self, code: str, msg: str):
        super().__init__(f"{code}: {msg}")
        self.code = code
        self.msg = msg


def encode_frame(obj: dict) -> bytes:
    return (json.dumps(obj, separators=(",", ":"), ensure_ascii=False) + "\n").encode()


def decode_frame(line: bytes) -> dict:
    try:
        obj = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ProtocolError(f"malformed frame: {e}") from None
    if not isinstance(obj, dict):
        raise ProtocolError("frame is not a JSON object")
    return obj


class _LineSocket:
    def __init__(self, sock: socket.socket):
        self.sock = sock
        self.buf = b""

    def send(self, data: bytes) -> None:
        try:
            self.sock.sendall(data)
        except OSError as e:
            raise TransportError(f"send failed: {e}") from None

    def recv_line(self) -> bytes:
        while b"\n" not in self.buf:
            try:
                chunk = self.sock.recv(65536)
            except socket.timeout:
                raise OracleTimeoutError("timed out waiting for response") from None
            except OSError as e:
                raise TransportError(f"recv failed: {e}") from None
            if not chunk:
                raise TransportError("connection closed by peer")
            self.buf += chunk
        line, self.buf = self.buf.split(b"\n", 1)
        return line


class RemoteOracle(ScoreOracle):
    """Client for a protocol-speaking epsilon server. One request in flight
    per connection; open multiple clients for parallelism."""

    def __init__(self, host: str, port: int, timeout: float = DEFAULT_TIMEOUT):
        try:
            sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as e:
            raise TransportError(f"connect failed: {e}") from None
        sock.settimeout(timeout)
        self._line = _LineSocket(sock)
        hello = decode_frame(self._line.recv_line())
        if hello.get("op") != "hello":
            raise ProtocolError(f"expected hello frame, got {hello!r}")
        if hello.get("version") != PROTOCOL_VERSION:
            raise VersionMismatchError(
                f"server speaks version {hello.get('version')!r}, need {PROTOCOL_VERSION}"
            )
        self.m = int(hello["m"])
        self.T = int(hello["T"])
        self._next_id = 0

    def close(self) -> None:
        self._line.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _roundtrip(self, req: dict) -> dict:
        self._line.send(encode_frame(req))
        resp = decode_frame(self._line.recv_line())
        if resp.get("id") != req["id"]:
            raise ProtocolError(
                f"response id {resp.get('id')!r} does not match request id {req['id']!r}"
            )
        if "error" in resp:
            err = resp["error"]
            raise RemoteEvaluationError(str(err.get("code")), str(err.get("msg")))
        return resp

    def epsilon(self, y, t, prompt):
        y = np.asarray(y, dtype=float)
        if y.ndim == 1:
            return self._epsilon_one(y, t, prompt)
        return np.stack([self._epsilon_one(row, t, prompt) for row in y])

    def _epsilon_one(self, y, t, prompt):
        if y.shape != (self.m,):
            raise ValueError(f"y must have {self.m} coordinates, got shape {y.shape}")
        self._next_id += 1
        req = {
            "id": self._next_id,
            "op": "score",
            "prompt": prompt,
            "t": int(t),
            "y": [float(v) for v in y],
        }
        resp = self._roundtrip(req)
        eps = resp.get("eps")
        if not isinstance(eps, list) or len(eps) != self.m:
            raise ProtocolError(
                f"response eps has length {len(eps) if isinstance(eps, list) else 'n/a'}, expected {self.m}"
            )
        return np.asarray(eps, dtype=float)


def _error_frame(req_id, code: str, msg: str) -> bytes:
    return encode_frame({"id": req_id, "error": {"code": code, "msg": msg}})


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        oracle = self.server.oracle
        self.wfile.write(
            encode_frame(
                {"op": "hello", "version": PROTOCOL_VERSION, "m": oracle.m, "T": oracle.T}
            )
        )
        while True:
            line = self.rfile.readline()
            if not line:
                return
            line = line.rstrip(b"\n")
            try:
                req = decode_frame(line)
            except ProtocolError as e:
                self.wfile.write(_error_frame(None, "bad_json", str(e)))
                continue
            self.wfile.write(self._respond(oracle, req))

    def _respond(self, oracle, req) -> bytes:
        req_id = req.get("id")
        if req.get("op") != "score":
            return _error_frame(req_id, "unknown_op", f"op {req.get('op')!r}")
        y = req.get("y")
        t = req.get("t")
        prompt = req.get("prompt")
        if not isinstance(y, list) or not isinstance(prompt, str) or not isinstance(t, int):
            return _error_frame(req_id, "bad_request", "need prompt:str, t:int, y:[...]")
        if len(y) != oracle.m:
            return _error_frame(req_id, "bad_dimension", f"y has {len(y)} coords, need {oracle.m}")
        try:
            eps = oracle.epsilon(np.asarray(y, dtype=float), t, prompt)
        except PromptLookupError as e:
            return _error_frame(req_id, "unknown_prompt", str(e))
        except ValueError as e:
            return _error_frame(req_id, "bad_request", str(e))
        except Exception as e:  # keep the server alive on any evaluation failure
            return _error_frame(req_id, "internal", str(e))
        return encode_frame({"id": req_id, "eps": [float(v) for v in eps]})


class OracleServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, oracle: ScoreOracle, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), _Handler)
        self.oracle = oracle

    @property
    def address(self) -> tuple[str, int]:
        return self.server_address[:2]

    def serve_in_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


def protocol_check(
    host: str,
    port: int,
    reference: ScoreOracle | None = None,
    probes: int = 10,
    seed: int = 0,
    tol: float = 1e-6,
    timeout: float = DEFAULT_TIMEOUT,
) -> dict:
    """Handshake + well-formedness check against a live server; optionally
    compares epsilon values to a local reference oracle."""
    report = {"ok": True, "checks": [], "errors": []}

    def record(name, ok, detail=""):
        report["checks"].append({"name": name, "ok": bool(ok), "detail": detail})
        if not ok:
            report["ok"] = False
            report["errors"].append(f"{name}: {detail}")

    try:
        client = RemoteOracle(host, port, timeout=timeout)
    except (TransportError, ProtocolError) as e:
        record("handshake", False, str(e))
        return report
    record("handshake", True, f"m={client.m} T={client.T}")
    rng = np.random.default_rng(seed)
    with client:
        if reference is not None:
            if (client.m, client.T) != (reference.m, reference.T):
                record(
                    "dimensions",
                    False,
                    f"server (m={client.m}, T={client.T}) vs reference "
                    f"(m={reference.m}, T={reference.T})",
                )
                return report
            record("dimensions", True)
        prompts = [""]
        table = getattr(reference, "table", None)
        if table is not None:
            prompts = table.names()
        worst = 0.0
        for i in range(probes):
            y = rng.standard_normal(client.m)
            t = int(rng.integers(1, client.T + 1))
            prompt = prompts[i % len(prompts)]
            try:
                eps = client.epsilon(y, t, prompt)
            except (TransportError, ProtocolError, RemoteEvaluationError) as e:
                record(f"probe[{i}]", False, str(e))
                return report
            if reference is not None:
                ref = reference.epsilon(y, t, prompt)
                worst = max(worst, float(np.max(np.abs(eps - ref))))
        record("probes", True, f"{probes} requests answered")
        if reference is not None:
            record("agreement", worst <= tol, f"max abs deviation {worst:.3e} (tol {tol:g})")
    return report


def run_transcript(host: str, port: int, transcript_path: str | Path) -> dict:
    """Replay a recorded golden transcript and compare response bytes exactly."""
    lines = Path(transcript_path).read_text().splitlines()
    entries = [json.loads(line) for line in lines if line.strip()]
    report = {"ok": True, "mismatches": [], "steps": 0}
    try:
        sock = socket.create_connection((host, port), timeout=DEFAULT_TIMEOUT)
    except OSError as e:
        report["ok"] = False
        report["mismatches"].append({"step": "connect", "error": str(e)})
        return report
    sock.settimeout(DEFAULT_TIMEOUT)
    line_sock = _LineSocket(sock)
    try:
        for i, entry in enumerate(entries):
            if "hello" in entry:
                got = line_sock.recv_line().decode("utf-8")
                expect = entry["hello"]
            else:
                line_sock.send((entry["send"] + "\n").encode())
                got = line_sock.recv_line().decode("utf-8")
                expect = entry["recv"]
            report["steps"] += 1
            if got != expect:
                report["ok"] = False
                report["mismatches"].append({"step": i, "expected": expect, "got": got})
    except TransportError as e:
        report["ok"] = False
        report["mismatches"].append({"step": report["steps"], "error": str(e)})
    finally:
        sock.close()
    return report
