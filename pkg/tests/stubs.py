"""Scriptable loopback stubs: model runner, OpenAI endpoint, hub, egress tap.

Each stub is a real HTTP server on an ephemeral 127.0.0.1 port so clients
exercise genuine sockets and streaming. Behaviors are scripted per test via
plain dicts; every request is recorded (raw body bytes included) so tests
can assert byte-level request equality.
"""
from __future__ import annotations

import json
import socket
import threading
from collections import defaultdict, deque
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any
from urllib.parse import parse_qs, urlparse

LOOPBACK_HOSTS = {"127.0.0.1", "::1", "localhost"}


class RecordedRequest:
    def __init__(self, method: str, path: str, query: dict[str, list[str]],
                 headers: dict[str, str], body: bytes):
        self.method = method
        self.path = path
        self.query = query
        self.headers = headers
        self.body = body

    @property
    def json(self) -> Any:
        return json.loads(self.body.decode("utf-8")) if self.body else None


class _StubBase:
    """Common lifecycle for the loopback stub servers."""

    def __init__(self):
        handler = self._make_handler()
        self.server = ThreadingHTTPServer(("127.0.0.1", 0), handler)
        self.server.daemon_threads = True
        self.port = self.server.server_address[1]
        self.base_url = f"http://127.0.0.1:{self.port}"
        self.requests: list[RecordedRequest] = []
        self._thread = threading.Thread(target=self.server.serve_forever,
                                        daemon=True)

    def start(self):
        self._thread.start()
        return self

    def stop(self) -> None:
        self.server.shutdown()
        self.server.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    def _record(self, handler: BaseHTTPRequestHandler) -> RecordedRequest:
        parsed = urlparse(handler.path)
        if "chunked" in (handler.headers.get("transfer-encoding") or "").lower():
            pieces = []
            while True:
                size = int(handler.rfile.readline().split(b";")[0], 16)
                if size == 0:
                    handler.rfile.readline()
                    break
                pieces.append(handler.rfile.read(size))
                handler.rfile.readline()
            body = b"".join(pieces)
        else:
            length = int(handler.headers.get("content-length") or 0)
            body = handler.rfile.read(length) if length else b""
        req = RecordedRequest(handler.command, parsed.path,
                              parse_qs(parsed.query),
                              dict(handler.headers.items()), body)
        self.requests.append(req)
        return req

    def _make_handler(self):
        raise NotImplementedError


def _send_json(handler: BaseHTTPRequestHandler, obj: Any, status: int = 200) -> None:
    data = json.dumps(obj).encode("utf-8")
    handler.send_response(status)
    handler.send_header("content-type", "application/json")
    handler.send_header("content-length", str(len(data)))
    handler.end_headers()
    handler.wfile.write(data)


class StubRunner(_StubBase):
    """Local-runner daemon double speaking the NDJSON chat protocol.

    Scripting:
      - ``scripts[model]`` is a deque of turn dicts consumed one per chat
        call: {"chunks": [...]}, {"tool_calls": [{"name", "arguments"}],
        "chunks": optional}, {"status": int} for an HTTP error, or
        {"drop": True} to cut the stream before the terminal chunk.
      - ``pull_events[name]`` overrides pull progress; unknown names get a
        terminal error event (HTTP 200 either way).
      - ``fail_tags`` > 0 makes that many /api/tags calls return HTTP 500.
    """

    def __init__(self, models=("alpha", "beta")):
        super().__init__()
        self.models = list(models)
        self.scripts: dict[str, deque] = defaultdict(deque)
        self.default_chunks = ["Hello", " world"]
        self.pull_events: dict[str, list[dict[str, Any]]] = {}
        self.fail_tags = 0
        self.lock = threading.Lock()

    def script_chat(self, model: str, *turns: dict[str, Any]) -> None:
        with self.lock:
            self.scripts[model].extend(turns)

    def _make_handler(self):
        stub = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, *args):
                pass

            def do_GET(self):
                stub._record(self)
                if urlparse(self.path).path == "/api/tags":
                    with stub.lock:
                        if stub.fail_tags > 0:
                            stub.fail_tags -= 1
                            _send_json(self, {"error": "scripted outage"}, 500)
                            return
                        models = list(stub.models)
                    _send_json(self, {"models": [{"name": m} for m in models]})
                else:
                    _send_json(self, {"error": "not found"}, 404)

            def do_DELETE(self):
                req = stub._record(self)
                if urlparse(self.path).path != "/api/delete":
                    _send_json(self, {"error": "not found"}, 404)
                    return
                name = (req.json or {}).get("name")
                with stub.lock:
                    if name in stub.models:
                        stub.models.remove(name)
                        _send_json(self, {"deleted": True})
                    else:
                        _send_json(self, {"error": "unknown model"}, 404)

            def do_POST(self):
                req = stub._record(self)
                path = urlparse(self.path).path
                if path == "/api/pull":
                    self._pull(req)
                elif path == "/api/blobs":
                    name = (req.query.get("name") or ["blob.gguf"])[0]
                    with stub.lock:
                        if name not in stub.models:
                            stub.models.append(name)
                    _send_json(self, {"stored": len(req.body)})
                elif path == "/api/chat":
                    self._chat(req)
                else:
                    _send_json(self, {"error": "not found"}, 404)

            def _stream_start(self):
                self.send_response(200)
                self.send_header("content-type", "application/x-ndjson")
                self.send_header("transfer-encoding", "chunked")
                self.end_headers()

            def _line(self, obj) -> None:
                data = json.dumps(obj).encode("utf-8") + b"\n"
                self.wfile.write(f"{len(data):x}\r\n".encode())
                self.wfile.write(data + b"\r\n")
                self.wfile.flush()

            def _stream_end(self) -> None:
                self.wfile.write(b"0\r\n\r\n")
                self.wfile.flush()

            def _pull(self, req: RecordedRequest):
                name = (req.json or {}).get("name", "")
                self._stream_start()
                events = stub.pull_events.get(name)
                if events is None:
                    if name in stub.models or name.endswith(":latest"):
                        events = [
                            {"status": "pulling manifest"},
                            {"status": "downloading", "completed": 512,
                             "total": 1024},
                            {"status": "downloading", "completed": 1024,
                             "total": 1024},
                            {"status": "success"},
                        ]
                    else:
                        events = [{"status": "error",
                                   "detail": f"model {name!r} not found"}]
                for event in events:
                    self._line(event)
                if any(e.get("status") == "success" for e in events):
                    with stub.lock:
                        if name not in stub.models:
                            stub.models.append(name)
                self._stream_end()

            def _chat(self, req: RecordedRequest):
                body = req.json or {}
                model = body.get("model", "")
                with stub.lock:
                    turn = (stub.scripts[model].popleft()
                            if stub.scripts.get(model) else
                            {"chunks": list(stub.default_chunks)})
                if "status" in turn:
                    _send_json(self, {"error": "scripted failure"},
                               turn["status"])
                    return
                self._stream_start()
                for piece in turn.get("chunks") or []:
                    self._line({"message": {"content": piece}, "done": False})
                if turn.get("drop"):
                    # cut the connection without the terminal chunk
                    self.wfile.flush()
                    self.close_connection = True
                    self.connection.close()
                    return
                for call in turn.get("tool_calls") or []:
                    self._line({"message": {"tool_calls": [
                        {"function": {"name": call["name"],
                                      "arguments": call.get("arguments", {})}}
                    ]}, "done": False})
                self._line({"done": True})
                self._stream_end()

        return Handler


class StubOpenAI(_StubBase):
    """OpenAI-compatible endpoint double (SSE streaming)."""

    def __init__(self, models=("gpt-stub",)):
        super().__init__()
        self.models = list(models)
        self.scripts: dict[str, deque] = defaultdict(deque)
        self.default_chunks = ["remote", " reply"]
        self.lock = threading.Lock()

    def script_chat(self, model: str, *turns: dict[str, Any]) -> None:
        with self.lock:
            self.scripts[model].extend(turns)

    def _make_handler(self):
        stub = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, *args):
                pass

            def do_GET(self):
                stub._record(self)
                if urlparse(self.path).path == "/v1/models":
                    _send_json(self, {"object": "list", "data": [
                        {"id": m, "object": "model"} for m in stub.models]})
                else:
                    _send_json(self, {"error": "not found"}, 404)

            def do_POST(self):
                req = stub._record(self)
                if urlparse(self.path).path != "/v1/chat/completions":
                    _send_json(self, {"error": "not found"}, 404)
                    return
                body = req.json or {}
                model = body.get("model", "")
                with stub.lock:
                    turn = (stub.scripts[model].popleft()
                            if stub.scripts.get(model) else
                            {"chunks": list(stub.default_chunks)})
                if "status" in turn:
                    _send_json(self, {"error": "scripted failure"},
                               turn["status"])
                    return
                self.send_response(200)
                self.send_header("content-type", "text/event-stream")
                self.send_header("transfer-encoding", "chunked")
                self.end_headers()

                def sse(obj):
                    data = f"data: {json.dumps(obj)}\n\n".encode("utf-8")
                    self.wfile.write(f"{len(data):x}\r\n".encode())
                    self.wfile.write(data + b"\r\n")
                    self.wfile.flush()

                for piece in turn.get("chunks") or []:
                    sse({"choices": [{"index": 0,
                                      "delta": {"content": piece}}]})
                for i, call in enumerate(turn.get("tool_calls") or []):
                    sse({"choices": [{"index": 0, "delta": {"tool_calls": [
                        {"index": i,
                         "function": {"name": call["name"],
                                      "arguments": json.dumps(
                                          call.get("arguments", {}))}}
                    ]}}]})
                done = b"data: [DONE]\n\n"
                self.wfile.write(f"{len(done):x}\r\n".encode())
                self.wfile.write(done + b"\r\n")
                self.wfile.write(b"0\r\n\r\n")
                self.wfile.flush()

        return Handler


class StubHub(_StubBase):
    """Community hub double: /index browsing and /share uploads."""

    def __init__(self, entries: list[dict[str, Any]] | None = None):
        super().__init__()
        self.entries = entries or []
        self.shared: list[dict[str, Any]] = []
        self.server_side_filtering = True

    def _make_handler(self):
        stub = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, *args):
                pass

            def do_GET(self):
                req = stub._record(self)
                if urlparse(self.path).path != "/index":
                    _send_json(self, {"error": "not found"}, 404)
                    return
                entries = list(stub.entries)
                if stub.server_side_filtering:
                    category = (req.query.get("category") or [None])[0]
                    q = (req.query.get("q") or [None])[0]
                    if category:
                        entries = [e for e in entries
                                   if e.get("category") == category]
                    if q:
                        entries = [e for e in entries
                                   if q.lower() in (e.get("name", "")
                                                    + e.get("description", "")
                                                    ).lower()]
                _send_json(self, entries)

            def do_POST(self):
                req = stub._record(self)
                if urlparse(self.path).path != "/share":
                    _send_json(self, {"error": "not found"}, 404)
                    return
                stub.shared.append(req.json)
                _send_json(self, {"ok": True})

        return Handler


class EgressRecorder:
    """Records every TCP connect while active and classifies loopback."""

    def __init__(self):
        self.connections: list[tuple[str, int]] = []
        self._original = None
        self._lock = threading.Lock()

    def __enter__(self):
        recorder = self
        self._original = socket.socket.connect

        def tracing_connect(sock, address, _orig=self._original):
            if isinstance(address, tuple) and len(address) >= 2:
                with recorder._lock:
                    recorder.connections.append((str(address[0]),
                                                 int(address[1])))
            return _orig(sock, address)

        socket.socket.connect = tracing_connect
        return self

    def __exit__(self, *exc):
        socket.socket.connect = self._original

    @property
    def non_loopback(self) -> list[tuple[str, int]]:
        return [(host, port) for host, port in self.connections
                if host not in LOOPBACK_HOSTS
                and not host.startswith("127.")]
