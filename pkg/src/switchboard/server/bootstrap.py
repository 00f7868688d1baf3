"""Single-command startup: lock the data dir, wire services, serve.

Bootstrap performs no network egress: backend catalogs are fetched lazily
on first use and the hub client stays idle until called, so the server
comes up fully offline.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

from ..chat import ChatService
from ..hub import HubClient
from ..pipeline import GenerationPipeline
from ..plugins import PluginEngine
from ..presets import PresetEngine
from ..registry import ModelRegistry
from ..store import DataDirLock, Store
from .auth import AuthService
from .config import ServerConfig

log = logging.getLogger(__name__)


@dataclass
class Services:
    config: ServerConfig
    store: Store
    registry: ModelRegistry
    chat: ChatService
    engine: PluginEngine
    presets: PresetEngine
    pipeline: GenerationPipeline
    auth: AuthService
    hub: HubClient
    lock: DataDirLock

    def close(self) -> None:
        self.engine.shutdown()
        self.lock.release()


def build_services(config: ServerConfig) -> Services:
    data_dir = Path(config.data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    lock = DataDirLock(data_dir)
    lock.acquire()
    try:
        store = Store(data_dir / "store")
        registry = ModelRegistry(store)
        engine = PluginEngine(store, data_dir / "plugins", registry,
                              invoke_timeout=config.limits["plugin_timeout_s"])
        presets = PresetEngine(store, registry)
        chat = ChatService(store,
                           max_parallel=config.limits["max_parallel_generations"])
        pipeline = GenerationPipeline(registry, engine,
                                      max_tool_rounds=config.limits["tool_max_rounds"])
        chat.set_pipeline(pipeline)
        engine.set_chat(chat)
        auth = AuthService(store, signup_enabled=config.signup_enabled)
        hub = HubClient(store, engine, presets, chat, base_url=config.hub_url)

        registry.load_persisted_backends()
        for backend in config.backends:
            registry.register_backend(backend, replace=True)
        engine.load()
        presets.load()
        recovered = chat.recover_interrupted()
        if recovered:
            log.warning("recovered %d interrupted generation(s) as errored",
                        recovered)
    except BaseException:
        lock.release()
        raise
    return Services(config=config, store=store, registry=registry, chat=chat,
                    engine=engine, presets=presets, pipeline=pipeline,
                    auth=auth, hub=hub, lock=lock)


def serve(config: ServerConfig) -> None:
    import uvicorn

    from .app import create_app

    services = build_services(config)
    try:
        app = create_app(services)
        log.info("serving on %s (data dir %s)", config.bind_address,
                 config.data_dir)
        uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
    finally:
        services.close()
