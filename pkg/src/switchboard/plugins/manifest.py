"""Plugin manifest model and validation.

A manifest arrives as the JSON value of a describe handshake reply. Kind
determines which extra fields must be present, and they may be present only
for that kind:

    filter -> priority (default 0), failure_mode ("open"|"closed", default open)
    tool   -> tool_specs (nonempty)
    action -> result_kind ("append"|"attach"|"mutate"), optional action_button
    pipe   -> no extras
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any

from ..errors import ManifestInvalid

KINDS = ("tool", "filter", "pipe", "action")
CONFIG_TYPES = {"string": str, "int": int, "float": (int, float), "bool": bool}
RESULT_KINDS = ("append", "attach", "mutate")
FAILURE_MODES = ("open", "closed")

_ID_RE = re.compile(r"^[a-z0-9][a-z0-9_-]*$")
_SEMVER_RE = re.compile(r"^\d+\.\d+\.\d+$")
_NAME_RE = re.compile(r"^[a-z0-9_]+$")


@dataclass(frozen=True)
class ToolSpec:
    callable_name: str
    description: str
    parameters: tuple[dict[str, Any], ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "callable_name": self.callable_name,
            "description": self.description,
            "parameters": [dict(p) for p in self.parameters],
        }


@dataclass(frozen=True)
class PluginManifest:
    id: str
    kind: str
    name: str
    version: str
    description: str
    author: str
    entry_command: tuple[str, ...]
    config_schema: tuple[dict[str, Any], ...] = ()
    priority: int = 0
    failure_mode: str = "open"
    tool_specs: tuple[ToolSpec, ...] = ()
    action_button: dict[str, Any] | None = None
    result_kind: str | None = None

    def version_tuple(self) -> tuple[int, ...]:
        return tuple(int(p) for p in self.version.split("."))

    def default_config(self) -> dict[str, Any]:
        return {entry["key"]: entry.get("default") for entry in self.config_schema}

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "id": self.id,
            "kind": self.kind,
            "name": self.name,
            "version": self.version,
            "description": self.description,
            "author": self.author,
            "entry_command": list(self.entry_command),
            "config_schema": [dict(e) for e in self.config_schema],
        }
        if self.kind == "filter":
            out["priority"] = self.priority
            out["failure_mode"] = self.failure_mode
        if self.kind == "tool":
            out["tool_specs"] = [t.to_dict() for t in self.tool_specs]
        if self.kind == "action":
            out["result_kind"] = self.result_kind
            if self.action_button is not None:
                out["action_button"] = dict(self.action_button)
        return out


def _require(raw: dict[str, Any], key: str, kind: type | tuple) -> Any:
    if key not in raw:
        raise ManifestInvalid(f"missing required field {key!r}", field=key)
    value = raw[key]
    if not isinstance(value, kind):
        raise ManifestInvalid(f"field {key!r} has wrong type", field=key)
    return value


def _validate_config_schema(raw: Any) -> tuple[dict[str, Any], ...]:
    if raw is None:
        return ()
    if not isinstance(raw, list):
        raise ManifestInvalid("config_schema must be a list", field="config_schema")
    out = []
    seen = set()
    for i, entry in enumerate(raw):
        path = f"config_schema[{i}]"
        if not isinstance(entry, dict):
            raise ManifestInvalid(f"{path} must be an object", field=path)
        key = entry.get("key")
        if not isinstance(key, str) or not _NAME_RE.match(key):
            raise ManifestInvalid(f"{path}.key must match [a-z0-9_]+", field=f"{path}.key")
        if key in seen:
            raise ManifestInvalid(f"duplicate config key {key!r}", field=f"{path}.key")
        seen.add(key)
        ctype = entry.get("type")
        if ctype not in CONFIG_TYPES:
            raise ManifestInvalid(f"{path}.type must be one of {sorted(CONFIG_TYPES)}",
                                  field=f"{path}.type")
        default = entry.get("default")
        if default is not None and not _config_value_ok(ctype, default):
            raise ManifestInvalid(f"{path}.default does not match type {ctype}",
                                  field=f"{path}.default")
        out.append({
            "key": key,
            "type": ctype,
            "default": default,
            "description": str(entry.get("description", "")),
        })
    return tuple(out)


def _config_value_ok(ctype: str, value: Any) -> bool:
    if ctype == "bool":
        return isinstance(value, bool)
    if ctype == "int":
        return isinstance(value, int) and not isinstance(value, bool)
    if ctype == "float":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    return isinstance(value, str)


def check_config_values(schema: tuple[dict[str, Any], ...],
                        values: dict[str, Any]) -> str | None:
    """Return the first offending key, or None when all values typecheck."""
    by_key = {entry["key"]: entry["type"] for entry in schema}
    for key, value in values.items():
        if key not in by_key:
            return key
        if not _config_value_ok(by_key[key], value):
            return key
    return None


def _validate_tool_specs(raw: Any) -> tuple[ToolSpec, ...]:
    if not isinstance(raw, list) or not raw:
        raise ManifestInvalid("tool manifests require a nonempty tool_specs list",
                              field="tool_specs")
    out = []
    seen = set()
    for i, entry in enumerate(raw):
        path = f"tool_specs[{i}]"
        if not isinstance(entry, dict):
            raise ManifestInvalid(f"{path} must be an object", field=path)
        name = entry.get("callable_name")
        if not isinstance(name, str) or not _NAME_RE.match(name):
            raise ManifestInvalid(f"{path}.callable_name must match [a-z0-9_]+",
                                  field=f"{path}.callable_name")
        if name in seen:
            raise ManifestInvalid(f"duplicate callable {name!r}",
                                  field=f"{path}.callable_name")
        seen.add(name)
        description = entry.get("description")
        if not isinstance(description, str) or not description.strip():
            # the description is what the model sees; it cannot be empty
            raise ManifestInvalid(f"{path}.description must be nonempty",
                                  field=f"{path}.description")
        params_raw = entry.get("parameters") or []
        if not isinstance(params_raw, list):
            raise ManifestInvalid(f"{path}.parameters must be a list",
                                  field=f"{path}.parameters")
        params = []
        for j, p in enumerate(params_raw):
            ppath = f"{path}.parameters[{j}]"
            if not isinstance(p, dict) or not isinstance(p.get("name"), str):
                raise ManifestInvalid(f"{ppath}.name required", field=f"{ppath}.name")
            if p.get("type") not in CONFIG_TYPES:
                raise ManifestInvalid(f"{ppath}.type must be one of {sorted(CONFIG_TYPES)}",
                                      field=f"{ppath}.type")
            params.append({
                "name": p["name"],
                "type": p["type"],
                "required": bool(p.get("required", False)),
                "description": str(p.get("description", "")),
            })
        out.append(ToolSpec(name, description, tuple(params)))
    return tuple(out)


_KIND_FIELDS = {
    "filter": {"priority", "failure_mode"},
    "tool": {"tool_specs"},
    "action": {"action_button", "result_kind"},
    "pipe": set(),
}


def validate_manifest(raw: Any, entry_command: list[str]) -> PluginManifest:
    """Validate a describe reply; raises ManifestInvalid with a field path."""
    if not isinstance(raw, dict):
        raise ManifestInvalid("manifest must be an object", field="")
    plugin_id = _require(raw, "id", str)
    if not _ID_RE.match(plugin_id):
        raise ManifestInvalid(f"id must match [a-z0-9_-]+: {plugin_id!r}", field="id")
    kind = _require(raw, "kind", str)
    if kind not in KINDS:
        raise ManifestInvalid(f"kind must be one of {KINDS}", field="kind")
    name = _require(raw, "name", str)
    if not name.strip():
        raise ManifestInvalid("name must be nonempty", field="name")
    version = _require(raw, "version", str)
    if not _SEMVER_RE.match(version):
        raise ManifestInvalid(f"version must be semver MAJOR.MINOR.PATCH: {version!r}",
                              field="version")
    description = str(raw.get("description", ""))
    author = str(raw.get("author", ""))
    config_schema = _validate_config_schema(raw.get("config_schema"))

    # kind-specific fields must appear exactly when the kind matches
    allowed = _KIND_FIELDS[kind]
    for other_kind, fields_ in _KIND_FIELDS.items():
        if other_kind == kind:
            continue
        for fname in fields_ - allowed:
            if fname in raw:
                raise ManifestInvalid(
                    f"field {fname!r} is only valid for kind={other_kind}", field=fname)

    priority = 0
    failure_mode = "open"
    tool_specs: tuple[ToolSpec, ...] = ()
    action_button = None
    result_kind = None

    if kind == "filter":
        priority_raw = raw.get("priority", 0)
        if not isinstance(priority_raw, int) or isinstance(priority_raw, bool):
            raise ManifestInvalid("priority must be an integer", field="priority")
        priority = priority_raw
        failure_mode = raw.get("failure_mode", "open")
        if failure_mode not in FAILURE_MODES:
            raise ManifestInvalid(f"failure_mode must be one of {FAILURE_MODES}",
                                  field="failure_mode")
    elif kind == "tool":
        tool_specs = _validate_tool_specs(raw.get("tool_specs"))
    elif kind == "action":
        result_kind = raw.get("result_kind")
        if result_kind not in RESULT_KINDS:
            raise ManifestInvalid(f"result_kind must be one of {RESULT_KINDS}",
                                  field="result_kind")
        button = raw.get("action_button")
        if button is not None:
            if not isinstance(button, dict) or not isinstance(button.get("label"), str):
                raise ManifestInvalid("action_button.label required",
                                      field="action_button.label")
            action_button = {"label": button["label"],
                             "icon_ref": button.get("icon_ref")}

    return PluginManifest(
        id=plugin_id,
        kind=kind,
        name=name,
        version=version,
        description=description,
        author=author,
        entry_command=tuple(entry_command),
        config_schema=config_schema,
        priority=priority,
        failure_mode=failure_mode,
        tool_specs=tool_specs,
        action_button=action_button,
        result_kind=result_kind,
    )
