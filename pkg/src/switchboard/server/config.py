"""Server configuration: defaults, JSON file, environment, CLI flags.

Precedence is flag > environment > file > default. Only the settings that
exist as CLI flags have environment mirrors (APP_BIND, APP_DATA_DIR,
APP_CONFIG); backends, the hub URL, and limits come from the config file.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from ..errors import ConfigInvalid, SwitchboardError
from ..registry import BackendConfig

DEFAULT_BIND = "127.0.0.1:8080"
DEFAULT_DATA_DIR = "./switchboard-data"
DEFAULT_LIMITS = {
    "max_parallel_generations": 8,
    "plugin_timeout_s": 30,
    "tool_max_rounds": 5,
}

ENV_BIND = "APP_BIND"
ENV_DATA_DIR = "APP_DATA_DIR"
ENV_CONFIG = "APP_CONFIG"


@dataclass
class ServerConfig:
    bind_address: str = DEFAULT_BIND
    data_dir: str = DEFAULT_DATA_DIR
    backends: list[BackendConfig] = field(default_factory=list)
    hub_url: str | None = None
    signup_enabled: bool = True
    limits: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_LIMITS))

    @property
    def host(self) -> str:
        return split_bind(self.bind_address)[0]

    @property
    def port(self) -> int:
        return split_bind(self.bind_address)[1]


def split_bind(bind: str) -> tuple[str, int]:
    host, sep, port_text = bind.rpartition(":")
    if not sep or not host:
        raise ConfigInvalid(f"bind address {bind!r} must be host:port",
                            field="bind_address")
    try:
        port = int(port_text)
    except ValueError:
        raise ConfigInvalid(f"bind port {port_text!r} is not an integer",
                            field="bind_address") from None
    if not 1 <= port <= 65535:
        raise ConfigInvalid(f"bind port {port} out of range", field="bind_address")
    return host, port


def _read_config_file(path: str) -> dict[str, Any]:
    file_path = Path(path)
    if not file_path.is_file():
        raise ConfigInvalid(f"config file {path!r} does not exist", field="config")
    try:
        raw = json.loads(file_path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ConfigInvalid(f"config file {path!r} unreadable: {exc}",
                            field="config") from exc
    if not isinstance(raw, dict):
        raise ConfigInvalid("config file must hold a JSON object", field="config")
    return raw


def load_config(bind: str | None = None, data_dir: str | None = None,
                config_file: str | None = None,
                env: Mapping[str, str] | None = None) -> ServerConfig:
    env = os.environ if env is None else env
    path = config_file or env.get(ENV_CONFIG) or None
    file_data = _read_config_file(path) if path else {}

    bind_address = (bind or env.get(ENV_BIND)
                    or file_data.get("bind_address") or DEFAULT_BIND)
    split_bind(bind_address)  # validate early
    data_dir_value = (data_dir or env.get(ENV_DATA_DIR)
                      or file_data.get("data_dir") or DEFAULT_DATA_DIR)
    if not isinstance(data_dir_value, str) or not data_dir_value:
        raise ConfigInvalid("data_dir must be a nonempty path", field="data_dir")

    limits = dict(DEFAULT_LIMITS)
    raw_limits = file_data.get("limits", {})
    if not isinstance(raw_limits, dict):
        raise ConfigInvalid("limits must be an object", field="limits")
    for key, value in raw_limits.items():
        if key not in DEFAULT_LIMITS:
            raise ConfigInvalid(f"unknown limit {key!r}", field=f"limits.{key}")
        if not isinstance(value, int) or isinstance(value, bool) or value <= 0:
            raise ConfigInvalid(f"limit {key!r} must be a positive integer",
                                field=f"limits.{key}")
        limits[key] = value

    backends = []
    raw_backends = file_data.get("backends", [])
    if not isinstance(raw_backends, list):
        raise ConfigInvalid("backends must be a list", field="backends")
    for i, raw in enumerate(raw_backends):
        try:
            backends.append(BackendConfig.from_dict(raw))
        except SwitchboardError as exc:
            raise ConfigInvalid(f"backends[{i}]: {exc.message}",
                                field=f"backends[{i}]") from exc
        except (KeyError, TypeError) as exc:
            raise ConfigInvalid(
                f"backends[{i}] must be an object with id, kind, base_url",
                field=f"backends[{i}]") from exc

    hub_url = file_data.get("hub_url")
    if hub_url is not None and (not isinstance(hub_url, str) or not hub_url):
        raise ConfigInvalid("hub_url must be a nonempty string or absent",
                            field="hub_url")

    signup_enabled = file_data.get("signup_enabled", True)
    if not isinstance(signup_enabled, bool):
        raise ConfigInvalid("signup_enabled must be a boolean",
                            field="signup_enabled")

    return ServerConfig(
        bind_address=bind_address,
        data_dir=data_dir_value,
        backends=backends,
        hub_url=hub_url,
        signup_enabled=signup_enabled,
        limits=limits,
    )
