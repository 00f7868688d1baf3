"""Hosts installed plugins and implements the four extension hooks.

Processes start lazily on first use, stay warm until idle, and restart with
exponential backoff after crashes; a plugin that keeps dying is parked in a
failed state instead of being retried forever. Plugins run with the
server's privileges; operators who need isolation should wrap
entry_command in their jail of choice.
"""
from __future__ import annotations

import json
import logging
import shutil
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from ..errors import (
    ActionFailed,
    ConfigInvalid,
    DuplicatePlugin,
    FilterAborted,
    FilterTimeout,
    HandshakeFailed,
    InvocationFailed,
    ManifestInvalid,
    PipeCrashed,
    PipeTimeout,
    PluginDisabled,
    PluginFailedState,
    ResultTypeMismatch,
    ToolTimeout,
    UnknownPlugin,
)
from .manifest import (
    RESULT_KINDS,
    PluginManifest,
    check_config_values,
    validate_manifest,
)
from .process import (
    PluginErrorReply,
    PluginProcess,
    ProcessDied,
    ProcessTimeout,
    ProtocolViolation,
)

log = logging.getLogger(__name__)

HANDSHAKE_TIMEOUT_S = 10.0
DEFAULT_INVOKE_TIMEOUT_S = 30.0
IDLE_TTL_S = 300.0
RESTART_CAP = 3
RESTART_BACKOFF_BASE_S = 0.25
RESTART_BACKOFF_MAX_S = 2.0


@dataclass
class PluginRecord:
    manifest: PluginManifest
    directory: Path
    enabled: bool = True
    admin_only: bool = False
    model_allowlist: list[str] | None = None
    config: dict[str, Any] = field(default_factory=dict)
    installed_at: str = ""


@dataclass
class PluginProcessState:
    plugin_id: str
    state: str  # stopped | running | failed
    restarts: int
    last_error: str | None = None


@dataclass
class ToolLoopResult:
    content: str
    trace: list[dict[str, Any]]
    truncated: bool


def _validate_bundle(bundle: Any) -> tuple[list[str], dict[str, str]]:
    if not isinstance(bundle, dict):
        raise ManifestInvalid("bundle must be an object", field="")
    entry = bundle.get("entry_command")
    if (not isinstance(entry, list) or not entry
            or not all(isinstance(p, str) and p for p in entry)):
        raise ManifestInvalid("entry_command must be a nonempty argv list",
                              field="entry_command")
    files = bundle.get("files")
    if not isinstance(files, dict) or not files:
        raise ManifestInvalid("files must be a nonempty {path: text} map", field="files")
    for path, content in files.items():
        if not isinstance(path, str) or not isinstance(content, str):
            raise ManifestInvalid("files entries must map string paths to text",
                                  field="files")
        parts = Path(path).parts
        if not parts or path.startswith("/") or ".." in parts:
            raise ManifestInvalid(f"unsafe bundle path: {path!r}", field="files")
    return entry, files


def user_payload(user: Any) -> dict[str, Any] | None:
    """Normalize a user record into the wire shape {id, name, role}."""
    if user is None:
        return None
    if isinstance(user, dict):
        return {"id": user.get("id"), "name": user.get("name"),
                "role": user.get("role")}
    return {"id": getattr(user, "id", None), "name": getattr(user, "name", None),
            "role": getattr(user, "role", None)}


class PluginEngine:
    def __init__(self, store, plugins_dir: str | Path, registry=None,
                 invoke_timeout: float = DEFAULT_INVOKE_TIMEOUT_S,
                 idle_ttl: float = IDLE_TTL_S,
                 restart_cap: int = RESTART_CAP,
                 restart_backoff_base: float = RESTART_BACKOFF_BASE_S):
        self._store = store
        self._root = Path(plugins_dir)
        self._root.mkdir(parents=True, exist_ok=True)
        self._registry = registry
        self._timeout = invoke_timeout
        self._idle_ttl = idle_ttl
        self._restart_cap = restart_cap
        self._backoff_base = restart_backoff_base
        self._records: dict[str, PluginRecord] = {}
        self._procs: dict[str, PluginProcess] = {}
        self._meta: dict[str, dict[str, Any]] = {}
        self._plugin_locks: dict[str, threading.RLock] = {}
        self._lock = threading.RLock()
        self._chat = None
        self._stop_reaper = threading.Event()
        self._reaper = threading.Thread(target=self._reap_idle, daemon=True)
        self._reaper.start()

    def set_chat(self, chat) -> None:
        """Late-bind the conversation service used by action results."""
        self._chat = chat

    # -- install / lifecycle ---------------------------------------------------

    def install_plugin(self, bundle: dict[str, Any]) -> PluginManifest:
        entry_command, files = _validate_bundle(bundle)
        staging = self._root / f".install-{uuid.uuid4().hex}"
        try:
            for rel, content in files.items():
                target = staging / rel
                target.parent.mkdir(parents=True, exist_ok=True)
                target.write_text(content, encoding="utf-8")
            raw = self._handshake(entry_command, staging)
            manifest = validate_manifest(raw, entry_command)
            with self._lock:
                existing = self._records.get(manifest.id)
                if existing is not None:
                    if manifest.version_tuple() <= existing.manifest.version_tuple():
                        raise DuplicatePlugin(
                            f"plugin {manifest.id!r} v{existing.manifest.version} "
                            f"already installed; bump the version to replace it")
                    self._stop_proc(manifest.id)
                final = self._root / manifest.id
                if final.exists():
                    shutil.rmtree(final)
                staging.rename(final)
                record = PluginRecord(
                    manifest=manifest,
                    directory=final,
                    installed_at=_now_iso(),
                )
                self._records[manifest.id] = record
                self._meta[manifest.id] = {"crashes": 0, "last_error": None,
                                           "last_used": 0.0}
                self._persist(record)
                self._sync_pipe_catalog(record)
            return manifest
        finally:
            if staging.exists():
                shutil.rmtree(staging, ignore_errors=True)

    def _handshake(self, entry_command: list[str], cwd: Path) -> Any:
        proc = PluginProcess(entry_command, cwd=str(cwd))
        try:
            proc.start()
            return proc.describe(HANDSHAKE_TIMEOUT_S)
        except (ProcessDied, ProcessTimeout, ProtocolViolation, PluginErrorReply) as exc:
            detail = proc.stderr_tail
            suffix = f"; stderr: {detail[-400:]}" if detail else ""
            raise HandshakeFailed(f"{exc}{suffix}") from exc
        finally:
            proc.stop()

    def uninstall_plugin(self, plugin_id: str) -> None:
        with self._lock:
            record = self._records.pop(plugin_id, None)
            if record is None:
                raise UnknownPlugin(f"no plugin installed as {plugin_id!r}")
            self._stop_proc(plugin_id)
            self._meta.pop(plugin_id, None)
            self._store.delete("plugins", plugin_id)
            if record.manifest.kind == "pipe" and self._registry is not None:
                self._registry.unregister_pipe(plugin_id)
        shutil.rmtree(record.directory, ignore_errors=True)

    def enable_plugin(self, plugin_id: str) -> None:
        self._set_enabled(plugin_id, True)

    def disable_plugin(self, plugin_id: str) -> None:
        self._set_enabled(plugin_id, False)

    def _set_enabled(self, plugin_id: str, enabled: bool) -> None:
        with self._lock:
            record = self._record(plugin_id)
            record.enabled = enabled
            if not enabled:
                self._stop_proc(plugin_id)
            self._persist(record)
            self._sync_pipe_catalog(record)

    def set_config(self, plugin_id: str, values: dict[str, Any]) -> None:
        with self._lock:
            record = self._record(plugin_id)
            bad = check_config_values(record.manifest.config_schema, values)
            if bad is not None:
                raise ConfigInvalid(
                    f"config value {bad!r} unknown or mistyped for plugin "
                    f"{plugin_id!r}", field=bad)
            record.config.update(values)
            self._persist(record)

    def set_access(self, plugin_id: str, admin_only: bool | None = None,
                   model_allowlist: list[str] | None | str = "unset") -> None:
        with self._lock:
            record = self._record(plugin_id)
            if admin_only is not None:
                record.admin_only = admin_only
            if model_allowlist != "unset":
                record.model_allowlist = model_allowlist
            self._persist(record)

    def reset_plugin(self, plugin_id: str) -> None:
        """Clear the failed state and crash counter (admin recovery path)."""
        with self._lock:
            self._record(plugin_id)
            self._meta[plugin_id] = {"crashes": 0, "last_error": None,
                                     "last_used": 0.0}

    def load(self) -> None:
        for plugin_id, raw in self._store.items("plugins"):
            directory = self._root / plugin_id
            if not directory.is_dir():
                log.warning("plugin %s has a record but no files; skipping", plugin_id)
                continue
            try:
                manifest = validate_manifest(raw["manifest"],
                                             raw["manifest"]["entry_command"])
            except (KeyError, ManifestInvalid) as exc:
                log.warning("plugin %s record invalid: %s", plugin_id, exc)
                continue
            record = PluginRecord(
                manifest=manifest,
                directory=directory,
                enabled=bool(raw.get("enabled", True)),
                admin_only=bool(raw.get("admin_only", False)),
                model_allowlist=raw.get("model_allowlist"),
                config=dict(raw.get("config") or {}),
                installed_at=raw.get("installed_at", ""),
            )
            with self._lock:
                self._records[plugin_id] = record
                self._meta[plugin_id] = {"crashes": 0, "last_error": None,
                                         "last_used": 0.0}
                self._sync_pipe_catalog(record)

    def _persist(self, record: PluginRecord) -> None:
        self._store.put("plugins", record.manifest.id, {
            "manifest": record.manifest.to_dict(),
            "enabled": record.enabled,
            "admin_only": record.admin_only,
            "model_allowlist": record.model_allowlist,
            "config": record.config,
            "installed_at": record.installed_at,
        })

    def _sync_pipe_catalog(self, record: PluginRecord) -> None:
        if record.manifest.kind != "pipe" or self._registry is None:
            return
        if record.enabled:
            self._registry.register_pipe(record.manifest.id, record.manifest.name)
        else:
            self._registry.unregister_pipe(record.manifest.id)

    # -- listings ----------------------------------------------------------------

    def _record(self, plugin_id: str) -> PluginRecord:
        record = self._records.get(plugin_id)
        if record is None:
            raise UnknownPlugin(f"no plugin installed as {plugin_id!r}")
        return record

    def get_manifest(self, plugin_id: str) -> PluginManifest:
        return self._record(plugin_id).manifest

    def get_record(self, plugin_id: str) -> PluginRecord:
        return self._record(plugin_id)

    def export_bundle(self, plugin_id: str) -> dict[str, Any]:
        record = self._record(plugin_id)
        files = {}
        for path in sorted(record.directory.rglob("*")):
            if path.is_file():
                files[str(path.relative_to(record.directory))] = path.read_text(
                    encoding="utf-8")
        return {"entry_command": list(record.manifest.entry_command), "files": files}

    def list_plugins(self) -> list[PluginRecord]:
        with self._lock:
            return [self._records[k] for k in sorted(self._records)]

    def _permitted(self, record: PluginRecord, user: Any) -> bool:
        if not record.enabled:
            return False
        if record.admin_only:
            payload = user_payload(user)
            return payload is not None and payload.get("role") == "admin"
        return True

    def list_tools(self, user: Any = None, model_id: str | None = None) -> list[dict[str, Any]]:
        out = []
        with self._lock:
            records = [r for r in self._records.values() if r.manifest.kind == "tool"]
        for record in sorted(records, key=lambda r: r.manifest.id):
            if not self._permitted(record, user):
                continue
            if (model_id is not None and record.model_allowlist is not None
                    and model_id not in record.model_allowlist):
                continue
            for spec in record.manifest.tool_specs:
                out.append({
                    "plugin_id": record.manifest.id,
                    "callable_name": spec.callable_name,
                    "description": spec.description,
                    "parameters": [dict(p) for p in spec.parameters],
                })
        return out

    def list_actions(self, user: Any = None) -> list[dict[str, Any]]:
        out = []
        with self._lock:
            records = [r for r in self._records.values() if r.manifest.kind == "action"]
        for record in sorted(records, key=lambda r: r.manifest.id):
            if not self._permitted(record, user):
                continue
            button = record.manifest.action_button or {}
            out.append({
                "id": record.manifest.id,
                "label": button.get("label", record.manifest.name),
                "icon_ref": button.get("icon_ref"),
                "result_kind": record.manifest.result_kind,
            })
        return out

    # -- process management ---------------------------------------------------

    def _lock_for(self, plugin_id: str) -> threading.RLock:
        with self._lock:
            lock = self._plugin_locks.get(plugin_id)
            if lock is None:
                lock = self._plugin_locks[plugin_id] = threading.RLock()
            return lock

    def _stop_proc(self, plugin_id: str) -> None:
        proc = self._procs.pop(plugin_id, None)
        if proc is not None:
            proc.stop()

    def _note_crash(self, plugin_id: str, error: str) -> None:
        self._stop_proc(plugin_id)
        meta = self._meta.setdefault(plugin_id, {"crashes": 0, "last_error": None,
                                                 "last_used": 0.0})
        meta["crashes"] += 1
        meta["last_error"] = error

    def _ensure_running(self, record: PluginRecord) -> PluginProcess:
        plugin_id = record.manifest.id
        meta = self._meta.setdefault(plugin_id, {"crashes": 0, "last_error": None,
                                                 "last_used": 0.0})
        if meta["crashes"] > self._restart_cap:
            raise PluginFailedState(
                f"plugin {plugin_id!r} exceeded its restart budget: {meta['last_error']}")
        proc = self._procs.get(plugin_id)
        if proc is not None and proc.alive():
            return proc
        if meta["crashes"] > 0:
            delay = min(self._backoff_base * (2 ** (meta["crashes"] - 1)),
                        RESTART_BACKOFF_MAX_S)
            time.sleep(delay)
        proc = PluginProcess(list(record.manifest.entry_command),
                             cwd=str(record.directory))
        try:
            proc.start()
        except ProcessDied as exc:
            self._note_crash(plugin_id, str(exc))
            raise InvocationFailed(f"plugin {plugin_id!r} failed to start: {exc}") from exc
        self._procs[plugin_id] = proc
        return proc

    def process_state(self, plugin_id: str) -> PluginProcessState:
        self._record(plugin_id)
        meta = self._meta.get(plugin_id) or {"crashes": 0, "last_error": None}
        proc = self._procs.get(plugin_id)
        if meta["crashes"] > self._restart_cap:
            state = "failed"
        elif proc is not None and proc.alive():
            state = "running"
        else:
            state = "stopped"
        return PluginProcessState(plugin_id=plugin_id, state=state,
                                  restarts=meta["crashes"],
                                  last_error=meta["last_error"])

    def running_pids(self) -> dict[str, int]:
        """Live plugin process pids (fault-injection harnesses use this)."""
        out = {}
        with self._lock:
            for plugin_id, proc in self._procs.items():
                if proc.alive() and proc.pid is not None:
                    out[plugin_id] = proc.pid
        return out

    def _invoke(self, record: PluginRecord, hook: str, payload: Any,
                callable_name: str | None = None,
                on_chunk: Callable[[str], None] | None = None,
                timeout: float | None = None) -> Any:
        plugin_id = record.manifest.id
        with self._lock_for(plugin_id):
            proc = self._ensure_running(record)
            self._meta[plugin_id]["last_used"] = time.monotonic()
            try:
                return proc.invoke(hook, payload, callable_name=callable_name,
                                   timeout=timeout or self._timeout,
                                   on_chunk=on_chunk)
            except PluginErrorReply:
                raise  # explicit error reply; the process itself is healthy
            except (ProcessDied, ProtocolViolation) as exc:
                self._note_crash(plugin_id, str(exc))
                raise
            except ProcessTimeout as exc:
                self._note_crash(plugin_id, str(exc))
                raise

    def _reap_idle(self) -> None:
        interval = max(min(self._idle_ttl / 4, 15.0), 0.25)
        while not self._stop_reaper.wait(interval):
            now = time.monotonic()
            with self._lock:
                candidates = [
                    pid for pid, proc in self._procs.items()
                    if proc.alive()
                    and now - self._meta.get(pid, {}).get("last_used", 0) > self._idle_ttl
                ]
            for plugin_id in candidates:
                lock = self._lock_for(plugin_id)
                if lock.acquire(blocking=False):
                    try:
                        self._stop_proc(plugin_id)
                    finally:
                        lock.release()

    def shutdown(self) -> None:
        self._stop_reaper.set()
        with self._lock:
            for plugin_id in list(self._procs):
                self._stop_proc(plugin_id)

    # -- hook: filters -----------------------------------------------------------

    def filter_chain(self) -> list[PluginRecord]:
        """Enabled filters in inlet order: ascending priority, ties by id."""
        with self._lock:
            records = [r for r in self._records.values()
                       if r.manifest.kind == "filter" and r.enabled]
        return sorted(records, key=lambda r: (r.manifest.priority, r.manifest.id))

    def has_enabled_filters(self) -> bool:
        return bool(self.filter_chain())

    def resolved_config(self, record: PluginRecord) -> dict[str, Any]:
        config = record.manifest.default_config()
        config.update(record.config)
        return config

    def invoke_filter_chain(self, direction: str, payload: dict[str, Any],
                            timeout: float | None = None) -> dict[str, Any]:
        if direction not in ("inlet", "outlet"):
            raise ValueError(f"direction must be inlet or outlet, not {direction!r}")
        chain = self.filter_chain()
        if direction == "outlet":
            chain = list(reversed(chain))
        # work on a JSON copy so caller payloads are never mutated in place
        current = json.loads(json.dumps(payload))
        original_config = current.get("config", {})
        for record in chain:
            plugin_id = record.manifest.id
            current["config"] = self.resolved_config(record)
            try:
                result = self._invoke(record, direction, current, timeout=timeout)
                if not isinstance(result, dict) or not isinstance(
                        result.get("messages"), list) or not result["messages"]:
                    raise PluginErrorReply("filter returned a malformed payload")
                current = result
            except ProcessTimeout as exc:
                if record.manifest.failure_mode == "closed":
                    raise FilterTimeout(f"filter {plugin_id!r}: {exc}") from exc
                log.warning("fail-open filter %s timed out; skipped: %s",
                            plugin_id, exc)
            except (PluginErrorReply, ProcessDied, ProtocolViolation,
                    PluginFailedState, InvocationFailed) as exc:
                if record.manifest.failure_mode == "closed":
                    raise FilterAborted(f"filter {plugin_id!r}: {exc}") from exc
                log.warning("fail-open filter %s errored; skipped: %s",
                            plugin_id, exc)
        current["config"] = original_config
        return current

    def apply_filter(self, plugin_id: str, payload: dict[str, Any],
                     direction: str = "inlet",
                     timeout: float | None = None) -> dict[str, Any]:
        """Run one named filter regardless of chain order.

        Used for explicitly selected transforms (e.g. redaction before a
        share upload), so failures always abort: silently skipping a filter
        the caller asked for by name would defeat its purpose.
        """
        record = self._record(plugin_id)
        if record.manifest.kind != "filter":
            raise UnknownPlugin(f"plugin {plugin_id!r} is not a filter")
        if not record.enabled:
            raise PluginDisabled(f"filter {plugin_id!r} is disabled")
        current = json.loads(json.dumps(payload))
        current["config"] = self.resolved_config(record)
        try:
            result = self._invoke(record, direction, current, timeout=timeout)
        except ProcessTimeout as exc:
            raise FilterTimeout(f"filter {plugin_id!r}: {exc}") from exc
        except (PluginErrorReply, ProcessDied, ProtocolViolation,
                PluginFailedState, InvocationFailed) as exc:
            raise FilterAborted(f"filter {plugin_id!r}: {exc}") from exc
        if not isinstance(result, dict) or not isinstance(
                result.get("messages"), list) or not result["messages"]:
            raise FilterAborted(f"filter {plugin_id!r} returned a malformed payload")
        result["config"] = payload.get("config", {})
        return result

    # -- hook: pipes ----------------------------------------------------------------

    def run_pipe(self, pipe_id: str, request: dict[str, Any], user: Any = None,
                 on_chunk: Callable[[str], None] | None = None,
                 timeout: float | None = None) -> str:
        record = self._record(pipe_id)
        if record.manifest.kind != "pipe":
            raise UnknownPlugin(f"plugin {pipe_id!r} is not a pipe")
        if not record.enabled:
            raise PluginDisabled(f"pipe {pipe_id!r} is disabled")
        parts: list[str] = []

        def collect(content: str) -> None:
            parts.append(content)
            if on_chunk is not None:
                on_chunk(content)

        payload = {
            "messages": request.get("messages", []),
            "params": request.get("params", {}),
            "user": user_payload(user),
            "config": self.resolved_config(record),
            "model_id": f"pipe/{pipe_id}",
        }
        try:
            value = self._invoke(record, "pipe", payload, on_chunk=collect,
                                 timeout=timeout)
        except ProcessTimeout as exc:
            err = PipeTimeout(f"pipe {pipe_id!r}: {exc}")
            err.partial = "".join(parts)
            raise err from exc
        except (ProcessDied, ProtocolViolation) as exc:
            err = PipeCrashed(f"pipe {pipe_id!r} died mid-stream: {exc}")
            err.partial = "".join(parts)
            raise err from exc
        except PluginErrorReply as exc:
            raise InvocationFailed(f"pipe {pipe_id!r}: {exc}") from exc
        if not parts and isinstance(value, str):
            return value
        return "".join(parts)

    # -- hook: tools --------------------------------------------------------------

    def run_tool_loop(self, chat_fn, messages: list[dict[str, Any]], params,
                      specs: list[dict[str, Any]], user: Any = None,
                      model_id: str | None = None, max_rounds: int = 5,
                      on_chunk: Callable[[str], None] | None = None) -> ToolLoopResult:
        """Drive backend<->tool rounds until a plain reply or the round cap.

        ``chat_fn(messages, params, tools, on_chunk) -> ChatTurn``. Performs
        at most 1 + max_rounds backend queries.
        """
        by_name = {spec["callable_name"]: spec for spec in specs}
        working = [dict(m) for m in messages]
        trace: list[dict[str, Any]] = []
        for round_index in range(max_rounds + 1):
            turn = chat_fn(working, params, specs, on_chunk)
            if not turn.tool_calls:
                return ToolLoopResult(turn.content, trace, truncated=False)
            if round_index == max_rounds:
                return ToolLoopResult(turn.content, trace, truncated=True)
            working.append({
                "role": "assistant",
                "content": turn.content,
                "tool_calls": [{"function": {"name": c.name, "arguments": c.arguments}}
                               for c in turn.tool_calls],
            })
            for call in turn.tool_calls:
                entry: dict[str, Any] = {"callable": call.name,
                                         "arguments": call.arguments}
                spec = by_name.get(call.name)
                if spec is None:
                    entry["error"] = f"unknown tool {call.name!r}"
                    result_text = f"error: unknown tool {call.name!r}"
                else:
                    result_text = self._run_one_tool(spec, call, user, model_id, entry)
                trace.append(entry)
                working.append({"role": "tool", "name": call.name,
                                "content": result_text})
        raise AssertionError("unreachable: loop returns within the round budget")

    def _run_one_tool(self, spec: dict[str, Any], call, user: Any,
                      model_id: str | None, entry: dict[str, Any]) -> str:
        record = self._record(spec["plugin_id"])
        payload = {
            "arguments": call.arguments,
            "user": user_payload(user),
            "config": self.resolved_config(record),
            "model_id": model_id,
        }
        try:
            value = self._invoke(record, "tool", payload, callable_name=call.name)
        except ProcessTimeout as exc:
            raise ToolTimeout(f"tool {call.name!r}: {exc}") from exc
        except PluginErrorReply as exc:
            entry["error"] = str(exc)
            return f"error: {exc}"
        except (ProcessDied, ProtocolViolation, PluginFailedState,
                InvocationFailed) as exc:
            entry["error"] = str(exc)
            return f"error: tool {call.name!r} unavailable"
        result_text = value if isinstance(value, str) else json.dumps(value)
        entry["result"] = result_text
        return result_text

    # -- hook: actions ---------------------------------------------------------------

    def invoke_action(self, action_id: str, conversation_id: str, node_id: str,
                      user: Any = None) -> dict[str, Any]:
        record = self._record(action_id)
        if record.manifest.kind != "action":
            raise UnknownPlugin(f"plugin {action_id!r} is not an action")
        if not record.enabled:
            raise PluginDisabled(f"action {action_id!r} is disabled")
        if self._chat is None:
            raise ActionFailed("no conversation service attached")
        node = self._chat.get_node(conversation_id, node_id)
        payload = {
            "node": node.to_dict(),
            "conversation_id": conversation_id,
            "user": user_payload(user),
            "config": self.resolved_config(record),
            "model_id": node.model_id,
        }
        try:
            value = self._invoke(record, "action", payload)
        except PluginErrorReply as exc:
            raise ActionFailed(str(exc)) from exc  # surfaced verbatim
        except ProcessTimeout as exc:
            raise ActionFailed(f"action {action_id!r} timed out: {exc}") from exc
        except (ProcessDied, ProtocolViolation, PluginFailedState,
                InvocationFailed) as exc:
            raise ActionFailed(f"action {action_id!r} failed: {exc}") from exc
        if not isinstance(value, dict) or value.get("type") not in RESULT_KINDS:
            raise ActionFailed(
                f"action {action_id!r} returned a malformed result")
        if value["type"] != record.manifest.result_kind:
            raise ResultTypeMismatch(
                f"action {action_id!r} declared {record.manifest.result_kind!r} "
                f"but returned {value['type']!r}")
        applied = self._chat.apply_action_result(conversation_id, node_id, value)
        return {"type": value["type"], "node": applied.to_dict()}


def _now_iso() -> str:
    from datetime import datetime, timezone
    return datetime.now(timezone.utc).isoformat().replace("+00:00", "Z")
