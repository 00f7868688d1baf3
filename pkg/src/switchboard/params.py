"""Generation parameters shared by the chat pipeline, registry, and presets.

All fields are optional; ``None`` means "not set here", letting the backend
default apply. Merging follows user > preset > backend default.
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Any

from .errors import InvalidParams


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


@dataclass(frozen=True)
class GenerationParams:
    temperature: float | None = None
    top_p: float | None = None
    max_tokens: int | None = None
    seed: int | None = None
    system_prompt: str | None = None

    def __post_init__(self):
        if self.temperature is not None and (
                not _is_number(self.temperature) or not 0.0 <= self.temperature <= 2.0):
            raise InvalidParams("temperature must be a number within [0, 2]",
                                field="temperature")
        if self.top_p is not None and (
                not _is_number(self.top_p) or not 0.0 < self.top_p <= 1.0):
            raise InvalidParams("top_p must be a number within (0, 1]", field="top_p")
        if self.max_tokens is not None and (
                not _is_int(self.max_tokens) or self.max_tokens <= 0):
            raise InvalidParams("max_tokens must be a positive integer",
                                field="max_tokens")
        if self.seed is not None and not _is_int(self.seed):
            raise InvalidParams("seed must be an integer", field="seed")
        if self.system_prompt is not None and not isinstance(self.system_prompt, str):
            raise InvalidParams("system_prompt must be a string", field="system_prompt")

    def to_dict(self, include_none: bool = False) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if value is not None or include_none:
                out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "GenerationParams":
        if not isinstance(data, dict):
            raise InvalidParams("params must be an object")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidParams(f"unknown parameter: {sorted(unknown)[0]}",
                                field=sorted(unknown)[0])
        try:
            return cls(**{k: v for k, v in data.items() if v is not None})
        except TypeError as exc:
            raise InvalidParams(str(exc)) from exc

    def overlay_on(self, base: "GenerationParams") -> "GenerationParams":
        """Fields set here win; unset fields fall through to ``base``."""
        merged = base.to_dict()
        merged.update(self.to_dict())
        return GenerationParams(**merged)


EMPTY_PARAMS = GenerationParams()
