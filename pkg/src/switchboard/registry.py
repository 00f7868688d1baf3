"""Unified model catalog across backends, pipe plugins, and model presets.

Model ids are derived, never stored by the backends themselves:
    <backend_id>/<native_name>   models served by a configured backend
    pipe/<plugin_id>             pipe plugins presented as models
    preset/<preset_id>           model presets layered over a base model

Backend ids may not contain "/" and may not shadow the reserved prefixes,
so ids never collide by construction.
"""
from __future__ import annotations

import logging
import os
import threading
import time
import urllib.parse
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator

from .backends import ChatTurn, LocalRunnerClient, OnChunk, OpenAICompatClient
from .errors import (
    BackendUnreachable,
    CyclicPreset,
    DuplicateBackend,
    InvalidUrl,
    RouteNotFound,
    UnknownModel,
    UnsupportedFormat,
)
from .params import EMPTY_PARAMS, GenerationParams

log = logging.getLogger(__name__)

BACKEND_KINDS = ("local-runner", "openai-compatible-remote")
RESERVED_PREFIXES = ("pipe", "preset")
CATALOG_TTL_S = 10.0
PRESET_DEPTH_LIMIT = 8
GGUF_MAGIC = b"GGUF"

_SOURCE_ORDER = {"local-runner": 0, "remote-endpoint": 1, "pipe-plugin": 2, "model-preset": 3}


@dataclass(frozen=True)
class ModelProfile:
    image_ref: str | None = None
    description: str | None = None
    starters: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "image_ref": self.image_ref,
            "description": self.description,
            "starters": list(self.starters),
        }


@dataclass(frozen=True)
class ModelDescriptor:
    id: str
    display_name: str
    source: str  # local-runner | remote-endpoint | pipe-plugin | model-preset
    backend_id: str | None = None
    native_name: str = ""
    default_params: GenerationParams = EMPTY_PARAMS
    profile: ModelProfile = ModelProfile()

    @property
    def remote(self) -> bool:
        return self.source == "remote-endpoint"

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "display_name": self.display_name,
            "source": self.source,
            "backend_id": self.backend_id,
            "native_name": self.native_name,
            "default_params": self.default_params.to_dict(),
            "profile": self.profile.to_dict(),
            "remote": self.remote,
        }


@dataclass(frozen=True)
class BackendConfig:
    id: str
    kind: str  # local-runner | openai-compatible-remote
    base_url: str
    credential_ref: str | None = None
    enabled: bool = True

    def to_dict(self) -> dict[str, Any]:
        # credential_ref is a handle (an env var name), never the secret itself
        return {
            "id": self.id,
            "kind": self.kind,
            "base_url": self.base_url,
            "credential_ref": self.credential_ref,
            "enabled": self.enabled,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "BackendConfig":
        return cls(
            id=data["id"],
            kind=data["kind"],
            base_url=data["base_url"],
            credential_ref=data.get("credential_ref"),
            enabled=bool(data.get("enabled", True)),
        )


@dataclass
class PullProgress:
    model_name: str
    status: str  # pulling | verifying | done | error
    completed_bytes: int = 0
    total_bytes: int | None = None
    detail: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "model_name": self.model_name,
            "status": self.status,
            "completed_bytes": self.completed_bytes,
            "total_bytes": self.total_bytes,
            "detail": self.detail,
        }


@dataclass(frozen=True)
class PresetOverlay:
    """Parameter/system-prompt layer a model preset adds to its base route."""
    preset_id: str
    system_prompt: str | None
    params: GenerationParams


@dataclass(frozen=True)
class RoutingTarget:
    kind: str  # "backend" | "pipe"
    backend_id: str | None = None
    native_name: str | None = None
    pipe_id: str | None = None
    overlays: tuple[PresetOverlay, ...] = ()  # outermost (selected) preset first

    def with_overlay(self, overlay: PresetOverlay) -> "RoutingTarget":
        return RoutingTarget(
            kind=self.kind,
            backend_id=self.backend_id,
            native_name=self.native_name,
            pipe_id=self.pipe_id,
            overlays=(overlay, *self.overlays),
        )


@dataclass
class _PipeEntry:
    plugin_id: str
    display_name: str
    profile: ModelProfile = ModelProfile()


@dataclass
class _PresetEntry:
    preset_id: str
    base_model_id: str
    system_prompt: str | None
    params: GenerationParams
    profile: ModelProfile = ModelProfile()


def _validate_backend_config(config: BackendConfig) -> None:
    if not config.id or "/" in config.id:
        raise InvalidUrl(f"backend id must be nonempty and contain no '/': {config.id!r}",
                         field="id")
    if config.id in RESERVED_PREFIXES:
        raise InvalidUrl(f"backend id {config.id!r} is reserved", field="id")
    if config.kind not in BACKEND_KINDS:
        raise InvalidUrl(f"unknown backend kind: {config.kind!r}", field="kind")
    parsed = urllib.parse.urlparse(config.base_url)
    if parsed.scheme not in ("http", "https") or not parsed.netloc:
        raise InvalidUrl(f"base_url must be an absolute http(s) URL: {config.base_url!r}",
                         field="base_url")


class ModelRegistry:
    """Read-mostly catalog; mutations serialized, pulls stream concurrently."""

    def __init__(self, store=None, catalog_ttl: float = CATALOG_TTL_S):
        self._store = store
        self._ttl = catalog_ttl
        self._lock = threading.RLock()
        self._backends: dict[str, BackendConfig] = {}
        self._clients: dict[str, Any] = {}
        self._pipes: dict[str, _PipeEntry] = {}
        self._presets: dict[str, _PresetEntry] = {}
        # backend_id -> (fetched_at, names); survives fetch failures as last-good
        self._cache: dict[str, tuple[float, list[str]]] = {}
        self.warnings: dict[str, str] = {}

    # -- backend lifecycle ----------------------------------------------

    def register_backend(self, config: BackendConfig, replace: bool = False) -> str:
        _validate_backend_config(config)
        with self._lock:
            if config.id in self._backends and not replace:
                raise DuplicateBackend(f"backend {config.id!r} already registered")
            self._backends[config.id] = config
            self._clients.pop(config.id, None)
            self._cache.pop(config.id, None)
            if self._store is not None:
                self._store.put("config", f"backend:{config.id}", config.to_dict())
        return config.id

    def load_persisted_backends(self) -> None:
        if self._store is None:
            return
        for key, record in self._store.items("config", prefix="backend:"):
            config = BackendConfig.from_dict(record)
            with self._lock:
                self._backends.setdefault(config.id, config)

    def backends(self) -> list[BackendConfig]:
        with self._lock:
            return sorted(self._backends.values(), key=lambda b: b.id)

    def backend(self, backend_id: str) -> BackendConfig:
        with self._lock:
            config = self._backends.get(backend_id)
        if config is None:
            raise UnknownModel(f"no backend registered as {backend_id!r}")
        return config

    def client_for(self, backend_id: str):
        config = self.backend(backend_id)
        with self._lock:
            client = self._clients.get(backend_id)
            if client is None:
                if config.kind == "local-runner":
                    client = LocalRunnerClient(config.base_url)
                else:
                    credential = None
                    if config.credential_ref:
                        credential = os.environ.get(config.credential_ref)
                    client = OpenAICompatClient(config.base_url, credential)
                self._clients[backend_id] = client
            return client

    # -- pipe / preset registration (called by their engines) ------------

    def register_pipe(self, plugin_id: str, display_name: str,
                      profile: ModelProfile | None = None) -> None:
        with self._lock:
            self._pipes[plugin_id] = _PipeEntry(plugin_id, display_name,
                                                profile or ModelProfile())

    def unregister_pipe(self, plugin_id: str) -> None:
        with self._lock:
            self._pipes.pop(plugin_id, None)

    def register_model_preset(self, preset_id: str, base_model_id: str,
                              system_prompt: str | None,
                              params: GenerationParams,
                              profile: ModelProfile | None = None) -> None:
        with self._lock:
            self._presets[preset_id] = _PresetEntry(
                preset_id, base_model_id, system_prompt, params,
                profile or ModelProfile(),
            )

    def unregister_model_preset(self, preset_id: str) -> None:
        with self._lock:
            self._presets.pop(preset_id, None)

    # -- catalog ----------------------------------------------------------

    def _backend_names(self, backend_id: str, refresh: bool = False) -> list[str] | None:
        """Current native names for one backend, None if unavailable."""
        now = time.monotonic()
        with self._lock:
            cached = self._cache.get(backend_id)
        if cached is not None and not refresh and now - cached[0] < self._ttl:
            return cached[1]
        try:
            names = self.client_for(backend_id).list_models()
        except Exception as exc:
            with self._lock:
                self.warnings[backend_id] = str(exc)
            log.warning("catalog fetch failed for backend %s: %s", backend_id, exc)
            return cached[1] if cached is not None else None
        with self._lock:
            self._cache[backend_id] = (now, names)
            self.warnings.pop(backend_id, None)
        return names

    def invalidate_catalog(self, backend_id: str) -> None:
        with self._lock:
            self._cache.pop(backend_id, None)

    def list_models(self) -> list[ModelDescriptor]:
        descriptors: list[ModelDescriptor] = []
        with self._lock:
            backends = [b for b in self._backends.values() if b.enabled]
            pipes = list(self._pipes.values())
            presets = list(self._presets.values())
        for backend_config in backends:
            names = self._backend_names(backend_config.id)
            source = ("local-runner" if backend_config.kind == "local-runner"
                      else "remote-endpoint")
            for name in names or []:
                descriptors.append(ModelDescriptor(
                    id=f"{backend_config.id}/{name}",
                    display_name=name,
                    source=source,
                    backend_id=backend_config.id,
                    native_name=name,
                ))
        for pipe in pipes:
            descriptors.append(ModelDescriptor(
                id=f"pipe/{pipe.plugin_id}",
                display_name=pipe.display_name,
                source="pipe-plugin",
                native_name=pipe.plugin_id,
                profile=pipe.profile,
            ))
        for preset in presets:
            descriptors.append(ModelDescriptor(
                id=f"preset/{preset.preset_id}",
                display_name=preset.preset_id,
                source="model-preset",
                native_name=preset.preset_id,
                default_params=preset.params,
                profile=preset.profile,
            ))
        descriptors.sort(key=lambda d: (_SOURCE_ORDER[d.source], d.display_name, d.id))
        return descriptors

    # -- routing ----------------------------------------------------------

    def resolve_route(self, model_id: str) -> RoutingTarget:
        return self._resolve(model_id, depth=0)

    def _resolve(self, model_id: str, depth: int) -> RoutingTarget:
        if model_id.startswith("pipe/"):
            plugin_id = model_id[len("pipe/"):]
            with self._lock:
                if plugin_id not in self._pipes:
                    raise RouteNotFound(f"no pipe model {model_id!r}")
            return RoutingTarget(kind="pipe", pipe_id=plugin_id)

        if model_id.startswith("preset/"):
            preset_id = model_id[len("preset/"):]
            if depth >= PRESET_DEPTH_LIMIT:
                raise CyclicPreset(
                    f"preset chain exceeds depth {PRESET_DEPTH_LIMIT} at {model_id!r}")
            with self._lock:
                entry = self._presets.get(preset_id)
            if entry is None:
                raise RouteNotFound(f"no model preset {model_id!r}")
            base = self._resolve(entry.base_model_id, depth + 1)
            return base.with_overlay(PresetOverlay(
                preset_id=preset_id,
                system_prompt=entry.system_prompt,
                params=entry.params,
            ))

        backend_id, sep, native_name = model_id.partition("/")
        if not sep or not native_name:
            raise RouteNotFound(f"unroutable model id {model_id!r}")
        with self._lock:
            config = self._backends.get(backend_id)
        if config is None or not config.enabled:
            raise RouteNotFound(f"no enabled backend for model id {model_id!r}")
        names = self._backend_names(backend_id)
        # None means the slice is unavailable right now; resolve optimistically
        # and let the chat call surface BackendUnreachable instead.
        if names is not None and native_name not in names:
            raise RouteNotFound(f"backend {backend_id!r} has no model {native_name!r}")
        return RoutingTarget(kind="backend", backend_id=backend_id,
                             native_name=native_name)

    # -- lifecycle operations against local runners -----------------------

    def pull_model(self, backend_id: str, name: str) -> Iterator[PullProgress]:
        config = self.backend(backend_id)
        if config.kind != "local-runner":
            raise UnknownModel(f"backend {backend_id!r} does not support pull")
        client = self.client_for(backend_id)
        terminal = False
        high_water = 0
        for event in client.pull(name):
            status = str(event.get("status", "pulling"))
            if status == "success":
                status = "done"
            if status not in ("pulling", "verifying", "done", "error"):
                status = "pulling"
            completed = event.get("completed", high_water)
            if not isinstance(completed, int) or completed < high_water:
                completed = high_water
            high_water = completed
            total = event.get("total")
            if not isinstance(total, int):
                total = None
            progress = PullProgress(
                model_name=name,
                status=status,
                completed_bytes=completed,
                total_bytes=total,
                detail=event.get("detail"),
            )
            yield progress
            if status in ("done", "error"):
                terminal = True
                if status == "done":
                    self.invalidate_catalog(backend_id)
                break
        if not terminal:
            yield PullProgress(model_name=name, status="error",
                               completed_bytes=high_water,
                               detail="pull stream ended without a terminal event")

    def delete_model(self, backend_id: str, name: str) -> None:
        config = self.backend(backend_id)
        if config.kind != "local-runner":
            raise UnknownModel(f"backend {backend_id!r} does not support delete")
        self.client_for(backend_id).delete(name)
        self.invalidate_catalog(backend_id)

    def upload_model_blob(self, backend_id: str, chunks: Iterable[bytes],
                          name: str) -> ModelDescriptor:
        config = self.backend(backend_id)
        if config.kind != "local-runner":
            raise UnsupportedFormat(f"backend {backend_id!r} does not accept uploads")
        iterator = iter(chunks)
        head = b""
        while len(head) < len(GGUF_MAGIC):
            try:
                head += next(iterator)
            except StopIteration:
                break
        if not head.startswith(GGUF_MAGIC):
            raise UnsupportedFormat("blob does not start with the GGUF magic bytes")

        def stream() -> Iterator[bytes]:
            yield head
            yield from iterator

        self.client_for(backend_id).upload_blob(name, stream())
        self.invalidate_catalog(backend_id)
        return ModelDescriptor(
            id=f"{backend_id}/{name}",
            display_name=name,
            source="local-runner",
            backend_id=backend_id,
            native_name=name,
        )

    # -- chat dispatch (used by the generation pipeline) -------------------

    def backend_chat(
        self,
        target: RoutingTarget,
        messages: list[dict[str, Any]],
        params: GenerationParams,
        tools: list[dict[str, Any]] | None = None,
        on_chunk: OnChunk | None = None,
    ) -> ChatTurn:
        if target.kind != "backend":
            raise RouteNotFound("target is not a backend route")
        client = self.client_for(target.backend_id)
        return client.chat(target.native_name, messages, params,
                           tools=tools, on_chunk=on_chunk)
