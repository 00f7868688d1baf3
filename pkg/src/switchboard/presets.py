"""Prompt presets (slash-command templates) and model presets.

Template grammar: a variable is ``[name]`` where name is nonempty and
contains no ``[``, ``]``, or newline. Anything else (unclosed brackets,
empty ``[]``, brackets spanning newlines) is literal text. There is no
escape sequence; substitution is single-pass and never re-scans values.

Variable spans are code-point offsets with an exclusive end, so
``body[start:end] == "[" + name + "]"``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any, Mapping

from .errors import (
    DuplicateCommand,
    InvalidPreset,
    RouteNotFound,
    UnknownCommand,
)
from .params import EMPTY_PARAMS, GenerationParams
from .registry import ModelDescriptor, ModelProfile, ModelRegistry

_VARIABLE_RE = re.compile(r"\[([^\[\]\n]+)\]")
_COMMAND_RE = re.compile(r"^/[a-z0-9-]+$")
_PRESET_ID_RE = re.compile(r"^[a-z0-9][a-z0-9_-]*$")


@dataclass(frozen=True)
class TemplateVariable:
    name: str
    start: int  # offset of '['
    end: int    # offset just past ']'
    order: int

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "start": self.start, "end": self.end,
                "order": self.order}


def parse_template(body: str) -> list[TemplateVariable]:
    """Total function: returns the document-ordered variable instances."""
    out = []
    for order, match in enumerate(_VARIABLE_RE.finditer(body)):
        out.append(TemplateVariable(
            name=match.group(1),
            start=match.start(),
            end=match.end(),
            order=order,
        ))
    return out


def substitute(body: str, assignments: Mapping[str, str]) -> str:
    """Replace assigned variable instances; leave the rest bracketed.

    Single-pass: replacement values are spliced in verbatim and never
    re-scanned, so a value containing brackets stays literal in the output.
    """
    pieces = []
    cursor = 0
    for var in parse_template(body):
        if var.name in assignments:
            pieces.append(body[cursor:var.start])
            pieces.append(str(assignments[var.name]))
            cursor = var.end
    pieces.append(body[cursor:])
    return "".join(pieces)


@dataclass(frozen=True)
class PromptPreset:
    command: str  # "/name", lowercase
    title: str
    body: str

    def to_dict(self) -> dict[str, Any]:
        return {"command": self.command, "title": self.title, "body": self.body}


@dataclass(frozen=True)
class ModelPreset:
    id: str
    base_model_id: str
    system_prompt: str | None = None
    param_overrides: GenerationParams = EMPTY_PARAMS
    image_ref: str | None = None
    conversation_starters: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "base_model_id": self.base_model_id,
            "system_prompt": self.system_prompt,
            "param_overrides": self.param_overrides.to_dict(),
            "image_ref": self.image_ref,
            "conversation_starters": list(self.conversation_starters),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ModelPreset":
        return cls(
            id=data["id"],
            base_model_id=data["base_model_id"],
            system_prompt=data.get("system_prompt"),
            param_overrides=GenerationParams.from_dict(data.get("param_overrides") or {}),
            image_ref=data.get("image_ref"),
            conversation_starters=tuple(data.get("conversation_starters") or ()),
        )


def _validate_command(command: str) -> str:
    command = command.strip().lower()
    if not _COMMAND_RE.match(command):
        raise InvalidPreset(
            f"command must be '/' followed by [a-z0-9-]+: {command!r}", field="command")
    return command


class PresetEngine:
    """Registry for prompt and model presets, persisted in the store."""

    def __init__(self, store, registry: ModelRegistry):
        self._store = store
        self._registry = registry
        self._prompts: dict[str, PromptPreset] = {}
        self._models: dict[str, ModelPreset] = {}

    def load(self) -> None:
        """Re-register persisted presets; skips base-model validation since
        backends may not be reachable at boot."""
        for _, record in self._store.items("presets", prefix="prompt:"):
            preset = PromptPreset(record["command"], record["title"], record["body"])
            self._prompts[preset.command] = preset
        for _, record in self._store.items("presets", prefix="model:"):
            preset = ModelPreset.from_dict(record)
            self._models[preset.id] = preset
            self._register_with_catalog(preset)

    # -- prompt presets ----------------------------------------------------

    def register_prompt(self, command: str, title: str, body: str) -> PromptPreset:
        command = _validate_command(command)
        if not body:
            raise InvalidPreset("preset body must be nonempty", field="body")
        if command in self._prompts:
            raise DuplicateCommand(f"command {command!r} already registered")
        preset = PromptPreset(command=command, title=title or command.lstrip("/"),
                              body=body)
        self._store.put("presets", f"prompt:{command}", preset.to_dict())
        self._prompts[command] = preset
        return preset

    def remove_prompt(self, command: str) -> None:
        if command not in self._prompts:
            raise UnknownCommand(f"no preset registered as {command!r}")
        del self._prompts[command]
        self._store.delete("presets", f"prompt:{command}")

    def list_prompts(self) -> list[PromptPreset]:
        return [self._prompts[c] for c in sorted(self._prompts)]

    def get_prompt(self, command: str) -> PromptPreset:
        preset = self._prompts.get(command)
        if preset is None:
            raise UnknownCommand(f"no preset registered as {command!r}")
        return preset

    def resolve_command(self, line: str) -> PromptPreset:
        """Exact-match lookup on the line's first token (case-sensitive)."""
        token = line.strip().split()[0] if line.strip() else ""
        if not token.startswith("/"):
            raise UnknownCommand(f"not a command: {line!r}")
        return self.get_prompt(token)

    def prefix_search(self, prefix: str) -> list[PromptPreset]:
        return [self._prompts[c] for c in sorted(self._prompts)
                if c.startswith(prefix)]

    # -- model presets -------------------------------------------------------

    def create_model_preset(self, preset: ModelPreset) -> ModelDescriptor:
        if not _PRESET_ID_RE.match(preset.id):
            raise InvalidPreset(f"preset id must match [a-z0-9_-]+: {preset.id!r}",
                                field="id")
        if preset.id in self._models:
            raise InvalidPreset(f"model preset {preset.id!r} already exists", field="id")
        # base must resolve now; lazily it may stop resolving (delete), which
        # surfaces as RouteNotFound at generation time
        self._registry.resolve_route(preset.base_model_id)
        self._store.put("presets", f"model:{preset.id}", preset.to_dict())
        self._models[preset.id] = preset
        return self._register_with_catalog(preset)

    def _register_with_catalog(self, preset: ModelPreset) -> ModelDescriptor:
        profile = ModelProfile(image_ref=preset.image_ref,
                               starters=preset.conversation_starters)
        self._registry.register_model_preset(
            preset.id, preset.base_model_id, preset.system_prompt,
            preset.param_overrides, profile,
        )
        return ModelDescriptor(
            id=f"preset/{preset.id}",
            display_name=preset.id,
            source="model-preset",
            native_name=preset.id,
            default_params=preset.param_overrides,
            profile=profile,
        )

    def remove_model_preset(self, preset_id: str) -> None:
        if preset_id not in self._models:
            raise RouteNotFound(f"no model preset {preset_id!r}")
        del self._models[preset_id]
        self._store.delete("presets", f"model:{preset_id}")
        self._registry.unregister_model_preset(preset_id)

    def list_model_presets(self) -> list[ModelPreset]:
        return [self._models[k] for k in sorted(self._models)]

    def get_model_preset(self, preset_id: str) -> ModelPreset:
        preset = self._models.get(preset_id)
        if preset is None:
            raise RouteNotFound(f"no model preset {preset_id!r}")
        return preset
