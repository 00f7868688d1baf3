"""Wire-protocol host for one plugin process.

The protocol is newline-delimited UTF-8 JSON over the process's standard
streams, one object per line. Host to plugin:

    {"op": "describe", "call_id": s}
    {"op": "invoke", "call_id": s, "hook": h, "callable": optional, "payload": ...}

Plugin to host:

    {"op": "manifest", "call_id": s, "manifest": {...}}
    {"op": "chunk", "call_id": s, "content": s}      (pipes, streaming)
    {"op": "result", "call_id": s, "value": ...}
    {"op": "error", "call_id": s, "message": s}

call_id echoes verbatim; any unknown op or call_id mismatch is a protocol
violation and the host recycles the process.
"""
from __future__ import annotations

import collections
import json
import os
import queue
import signal
import subprocess
import threading
import time
import uuid
from typing import Any, Callable

_EOF = object()
_GRACE_S = 0.5


class ProcessDied(Exception):
    """Plugin process exited or closed its pipe mid-request."""


class ProcessTimeout(Exception):
    """Plugin did not answer within the invocation timeout."""


class ProtocolViolation(Exception):
    """Plugin emitted something outside the wire protocol."""


class PluginErrorReply(Exception):
    """Plugin answered with an explicit error op."""


class PluginProcess:
    """One plugin subprocess; requests are serialized by the caller."""

    def __init__(self, entry_command: list[str], cwd: str | None = None,
                 env: dict[str, str] | None = None):
        self.entry_command = list(entry_command)
        self.cwd = cwd
        self.env = env
        self._proc: subprocess.Popen | None = None
        self._lines: queue.Queue = queue.Queue()
        self._stderr_tail: collections.deque[str] = collections.deque(maxlen=50)
        self._write_lock = threading.Lock()

    # -- lifecycle -----------------------------------------------------------

    def start(self) -> None:
        env = dict(os.environ)
        env["PYTHONUNBUFFERED"] = "1"
        if self.env:
            env.update(self.env)
        try:
            self._proc = subprocess.Popen(
                self.entry_command,
                cwd=self.cwd,
                env=env,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
                start_new_session=True,  # so stop() can clean up child trees
            )
        except OSError as exc:
            raise ProcessDied(f"could not spawn {self.entry_command!r}: {exc}") from exc
        self._lines = queue.Queue()
        threading.Thread(target=self._read_stdout, args=(self._proc,),
                         daemon=True).start()
        threading.Thread(target=self._read_stderr, args=(self._proc,),
                         daemon=True).start()

    def _read_stdout(self, proc: subprocess.Popen) -> None:
        sink = self._lines
        try:
            for line in proc.stdout:
                sink.put(line)
        except (ValueError, OSError):
            pass
        sink.put(_EOF)

    def _read_stderr(self, proc: subprocess.Popen) -> None:
        try:
            for line in proc.stderr:
                self._stderr_tail.append(line.rstrip("\n"))
        except (ValueError, OSError):
            pass

    def alive(self) -> bool:
        return self._proc is not None and self._proc.poll() is None

    @property
    def pid(self) -> int | None:
        return self._proc.pid if self._proc is not None else None

    @property
    def stderr_tail(self) -> str:
        return "\n".join(self._stderr_tail)

    def stop(self) -> None:
        proc = self._proc
        self._proc = None
        if proc is None:
            return
        if proc.poll() is None:
            try:
                os.killpg(proc.pid, signal.SIGTERM)
            except (ProcessLookupError, PermissionError):
                pass
            try:
                proc.wait(timeout=_GRACE_S)
            except subprocess.TimeoutExpired:
                try:
                    os.killpg(proc.pid, signal.SIGKILL)
                except (ProcessLookupError, PermissionError):
                    pass
                try:
                    proc.wait(timeout=_GRACE_S)
                except subprocess.TimeoutExpired:
                    pass
        for pipe in (proc.stdin, proc.stdout, proc.stderr):
            try:
                if pipe:
                    pipe.close()
            except OSError:
                pass

    # -- requests -------------------------------------------------------------

    def _send(self, obj: dict[str, Any]) -> None:
        proc = self._proc
        if proc is None or proc.poll() is not None or proc.stdin is None:
            raise ProcessDied("plugin process is not running")
        line = json.dumps(obj, ensure_ascii=False) + "\n"
        with self._write_lock:
            try:
                proc.stdin.write(line)
                proc.stdin.flush()
            except (BrokenPipeError, OSError, ValueError) as exc:
                raise ProcessDied(f"plugin stdin closed: {exc}") from exc

    def request(self, obj: dict[str, Any], timeout: float,
                on_chunk: Callable[[str], None] | None = None) -> Any:
        """Send one request and read replies until result/error.

        Returns the result value. Raises PluginErrorReply for an error op,
        ProcessDied / ProcessTimeout / ProtocolViolation otherwise. On any
        raise the process should be recycled by the caller; replies from a
        stale request would otherwise poison the next one.
        """
        call_id = obj["call_id"]
        self._send(obj)
        deadline = time.monotonic() + timeout
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise ProcessTimeout(f"no reply within {timeout}s")
            try:
                line = self._lines.get(timeout=remaining)
            except queue.Empty:
                raise ProcessTimeout(f"no reply within {timeout}s") from None
            if line is _EOF:
                raise ProcessDied("plugin closed stdout mid-request")
            line = line.strip()
            if not line:
                continue
            try:
                reply = json.loads(line)
            except ValueError:
                raise ProtocolViolation(f"non-JSON line from plugin: {line[:120]!r}")
            if not isinstance(reply, dict):
                raise ProtocolViolation("plugin reply is not an object")
            if reply.get("call_id") != call_id:
                raise ProtocolViolation(
                    f"call_id mismatch: sent {call_id!r}, got {reply.get('call_id')!r}")
            op = reply.get("op")
            if op == "chunk":
                if on_chunk is None:
                    raise ProtocolViolation("unexpected chunk op for non-streaming hook")
                content = reply.get("content")
                if not isinstance(content, str):
                    raise ProtocolViolation("chunk content must be a string")
                on_chunk(content)
            elif op == "result":
                return reply.get("value")
            elif op == "manifest":
                return reply.get("manifest")
            elif op == "error":
                raise PluginErrorReply(str(reply.get("message", "plugin error")))
            else:
                raise ProtocolViolation(f"unknown op from plugin: {op!r}")

    def describe(self, timeout: float) -> Any:
        return self.request({"op": "describe", "call_id": uuid.uuid4().hex}, timeout)

    def invoke(self, hook: str, payload: Any, callable_name: str | None = None,
               timeout: float = 30.0,
               on_chunk: Callable[[str], None] | None = None) -> Any:
        obj: dict[str, Any] = {
            "op": "invoke",
            "call_id": uuid.uuid4().hex,
            "hook": hook,
            "payload": payload,
        }
        if callable_name is not None:
            obj["callable"] = callable_name
        return self.request(obj, timeout, on_chunk=on_chunk)
