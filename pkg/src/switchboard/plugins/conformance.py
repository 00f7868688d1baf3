"""Black-box conformance checks for plugin executables.

Runs a candidate entry_command through the wire protocol without installing
it: handshake validity, handshake idempotence, call_id echo discipline,
unknown-op handling, and a kind-appropriate invoke smoke test. Used by the
test suite and available to plugin authors.
"""
from __future__ import annotations

import uuid
from dataclasses import dataclass, field
from typing import Any

from ..errors import ManifestInvalid
from .manifest import PluginManifest, validate_manifest
from .process import (
    PluginErrorReply,
    PluginProcess,
    ProcessDied,
    ProcessTimeout,
    ProtocolViolation,
)

CHECK_TIMEOUT_S = 10.0


@dataclass
class ConformanceReport:
    passed: bool
    checks: list[dict[str, Any]] = field(default_factory=list)
    manifest: PluginManifest | None = None

    def _add(self, name: str, ok: bool, detail: str = "") -> None:
        self.checks.append({"name": name, "ok": ok, "detail": detail})
        if not ok:
            self.passed = False

    def failures(self) -> list[str]:
        return [f"{c['name']}: {c['detail']}" for c in self.checks if not c["ok"]]


def _smoke_payload(manifest: PluginManifest) -> tuple[str, str | None, dict[str, Any]]:
    messages = [{"role": "user", "content": "conformance probe"}]
    base = {"user": None, "config": manifest.default_config(), "model_id": None}
    if manifest.kind == "filter":
        return "inlet", None, {"messages": messages, "params": {}, **base}
    if manifest.kind == "pipe":
        return "pipe", None, {"messages": messages, "params": {}, **base}
    if manifest.kind == "tool":
        spec = manifest.tool_specs[0]
        args = {p["name"]: "1" for p in (dict(q) for q in spec.parameters)}
        return "tool", spec.callable_name, {"arguments": args, **base}
    node = {"id": "probe-node", "role": "assistant", "content": "probe content",
            "model_id": "probe/model", "status": "complete"}
    return "action", None, {"node": node, "conversation_id": "probe-conv", **base}


def run_conformance(entry_command: list[str], cwd: str | None = None) -> ConformanceReport:
    report = ConformanceReport(passed=True)
    proc = PluginProcess(list(entry_command), cwd=cwd)
    try:
        proc.start()
    except ProcessDied as exc:
        report._add("spawn", False, str(exc))
        return report
    report._add("spawn", True)
    try:
        _run_checks(proc, report)
    finally:
        proc.stop()
    return report


def _run_checks(proc: PluginProcess, report: ConformanceReport) -> None:
    # handshake: describe must yield a valid manifest
    try:
        raw = proc.describe(CHECK_TIMEOUT_S)
        manifest = validate_manifest(raw, ["probe"])
        report.manifest = manifest
        report._add("handshake", True)
    except (ProcessDied, ProcessTimeout, ProtocolViolation,
            PluginErrorReply, ManifestInvalid) as exc:
        report._add("handshake", False, str(exc))
        return

    # idempotence: a second describe returns the identical manifest
    try:
        again = proc.describe(CHECK_TIMEOUT_S)
        same = validate_manifest(again, ["probe"]) == manifest
        report._add("describe_idempotent", same,
                    "" if same else "second describe differed")
    except (ProcessDied, ProcessTimeout, ProtocolViolation,
            PluginErrorReply, ManifestInvalid) as exc:
        report._add("describe_idempotent", False, str(exc))
        return

    # call_id echo: PluginProcess already hard-fails on mismatched ids, so a
    # clean round trip with a random id proves verbatim echo
    try:
        probe_id = f"conf-{uuid.uuid4().hex}"
        proc.request({"op": "describe", "call_id": probe_id}, CHECK_TIMEOUT_S)
        report._add("call_id_echo", True)
    except (ProcessDied, ProcessTimeout, ProtocolViolation, PluginErrorReply) as exc:
        report._add("call_id_echo", False, str(exc))
        return

    # unknown op: must answer with an error reply, not die or misbehave
    try:
        proc.request({"op": "no-such-op", "call_id": "conf-unknown"}, CHECK_TIMEOUT_S)
        report._add("unknown_op", False, "plugin accepted an unknown op")
    except PluginErrorReply:
        report._add("unknown_op", True)
    except (ProcessDied, ProcessTimeout, ProtocolViolation) as exc:
        report._add("unknown_op", False, str(exc))
        return

    # kind smoke test: one representative invoke must complete the protocol
    hook, callable_name, payload = _smoke_payload(manifest)
    chunks: list[str] = []
    try:
        value = proc.invoke(hook, payload, callable_name=callable_name,
                            timeout=CHECK_TIMEOUT_S, on_chunk=chunks.append)
    except PluginErrorReply as exc:
        # an explicit error reply is protocol-clean; only filters must accept
        # the minimal payload
        ok = manifest.kind != "filter"
        report._add("invoke_smoke", ok, "" if ok else f"filter rejected probe: {exc}")
        return
    except (ProcessDied, ProcessTimeout, ProtocolViolation) as exc:
        report._add("invoke_smoke", False, str(exc))
        return
    if manifest.kind == "filter":
        ok = (isinstance(value, dict) and isinstance(value.get("messages"), list)
              and bool(value["messages"]))
        report._add("invoke_smoke", ok,
                    "" if ok else "filter result lacks a nonempty messages list")
    elif manifest.kind == "pipe":
        ok = bool(chunks) or isinstance(value, str)
        report._add("invoke_smoke", ok,
                    "" if ok else "pipe produced neither chunks nor text")
    elif manifest.kind == "action":
        ok = isinstance(value, dict) and value.get("type") == manifest.result_kind
        report._add("invoke_smoke", ok,
                    "" if ok else f"action result type != {manifest.result_kind!r}")
    else:
        report._add("invoke_smoke", True)
