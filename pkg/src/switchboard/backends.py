"""HTTP clients for the two supported backend kinds.

Local runner protocol (NDJSON over HTTP):
    GET    /api/tags                       -> {"models": [{"name": ...}, ...]}
    POST   /api/pull    {"name": n}        -> NDJSON {"status",...,"completed","total"}
    DELETE /api/delete  {"name": n}        -> {}
    POST   /api/blobs?name=n  (raw body)   -> {"name": n}
    POST   /api/chat    {"model","messages","options","stream":true}
                                           -> NDJSON chunks ending {"done": true}

Remote protocol is OpenAI-compatible: GET /v1/models and streaming
POST /v1/chat/completions with a bearer credential.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Iterator

import requests

from .errors import BackendUnreachable, UnknownModel
from .params import GenerationParams

CONNECT_TIMEOUT = 5.0
READ_TIMEOUT = 120.0
_TIMEOUT = (CONNECT_TIMEOUT, READ_TIMEOUT)

OnChunk = Callable[[str], None]


@dataclass
class ToolCall:
    name: str
    arguments: dict[str, Any] = field(default_factory=dict)


@dataclass
class ChatTurn:
    """One backend reply: streamed text and/or requested tool calls."""
    content: str = ""
    tool_calls: list[ToolCall] = field(default_factory=list)


def tool_specs_to_schema(specs: list[dict[str, Any]]) -> list[dict[str, Any]]:
    """Render internal tool specs as OpenAI-style function declarations."""
    out = []
    for spec in specs:
        properties = {}
        required = []
        for p in spec.get("parameters", []):
            properties[p["name"]] = {
                "type": p.get("type", "string"),
                "description": p.get("description", ""),
            }
            if p.get("required"):
                required.append(p["name"])
        out.append({
            "type": "function",
            "function": {
                "name": spec["callable_name"],
                "description": spec.get("description", ""),
                "parameters": {
                    "type": "object",
                    "properties": properties,
                    "required": required,
                },
            },
        })
    return out


def _params_to_options(params: GenerationParams) -> dict[str, Any]:
    opts = params.to_dict()
    opts.pop("system_prompt", None)
    return opts


class LocalRunnerClient:
    """Client for a local model-runner daemon."""

    def __init__(self, base_url: str, session: requests.Session | None = None):
        self.base_url = base_url.rstrip("/")
        self._http = session or requests.Session()

    def list_models(self) -> list[str]:
        try:
            resp = self._http.get(f"{self.base_url}/api/tags", timeout=_TIMEOUT)
        except requests.RequestException as exc:
            raise BackendUnreachable(f"runner at {self.base_url}: {exc}") from exc
        if resp.status_code != 200:
            raise BackendUnreachable(f"runner /api/tags returned {resp.status_code}")
        models = resp.json().get("models")
        if not isinstance(models, list):
            raise BackendUnreachable("runner /api/tags returned malformed body")
        return [m["name"] for m in models if isinstance(m, dict) and isinstance(m.get("name"), str)]

    def pull(self, name: str) -> Iterator[dict[str, Any]]:
        try:
            resp = self._http.post(
                f"{self.base_url}/api/pull", json={"name": name},
                stream=True, timeout=_TIMEOUT,
            )
        except requests.RequestException as exc:
            raise BackendUnreachable(f"runner at {self.base_url}: {exc}") from exc
        if resp.status_code != 200:
            raise BackendUnreachable(f"runner /api/pull returned {resp.status_code}")
        try:
            for line in resp.iter_lines(decode_unicode=True):
                if not line:
                    continue
                try:
                    yield json.loads(line)
                except ValueError:
                    yield {"status": "error", "detail": f"malformed pull event: {line[:80]}"}
                    return
        except requests.RequestException:
            yield {"status": "error", "detail": "connection lost during pull"}

    def delete(self, name: str) -> None:
        try:
            resp = self._http.delete(
                f"{self.base_url}/api/delete", json={"name": name}, timeout=_TIMEOUT,
            )
        except requests.RequestException as exc:
            raise BackendUnreachable(f"runner at {self.base_url}: {exc}") from exc
        if resp.status_code == 404:
            raise UnknownModel(f"runner has no model named {name!r}")
        if resp.status_code != 200:
            raise BackendUnreachable(f"runner /api/delete returned {resp.status_code}")

    def upload_blob(self, name: str, chunks: Iterable[bytes]) -> None:
        try:
            resp = self._http.post(
                f"{self.base_url}/api/blobs",
                params={"name": name},
                data=chunks,
                timeout=(CONNECT_TIMEOUT, READ_TIMEOUT * 4),
            )
        except requests.RequestException as exc:
            raise BackendUnreachable(f"runner at {self.base_url}: {exc}") from exc
        if resp.status_code != 200:
            raise BackendUnreachable(f"runner /api/blobs returned {resp.status_code}")

    def chat(
        self,
        model: str,
        messages: list[dict[str, Any]],
        params: GenerationParams,
        tools: list[dict[str, Any]] | None = None,
        on_chunk: OnChunk | None = None,
    ) -> ChatTurn:
        body: dict[str, Any] = {
            "model": model,
            "messages": messages,
            "options": _params_to_options(params),
            "stream": True,
        }
        if tools:
            body["tools"] = tool_specs_to_schema(tools)
        try:
            resp = self._http.post(
                f"{self.base_url}/api/chat", json=body, stream=True, timeout=_TIMEOUT,
            )
        except requests.RequestException as exc:
            raise BackendUnreachable(f"runner at {self.base_url}: {exc}") from exc
        if resp.status_code == 404:
            raise UnknownModel(f"runner has no model named {model!r}")
        if resp.status_code != 200:
            raise BackendUnreachable(f"runner /api/chat returned {resp.status_code}")

        turn = ChatTurn()
        done = False
        try:
            for line in resp.iter_lines(decode_unicode=True):
                if not line:
                    continue
                chunk = json.loads(line)
                msg = chunk.get("message") or {}
                piece = msg.get("content")
                if piece:
                    turn.content += piece
                    if on_chunk:
                        on_chunk(piece)
                for call in msg.get("tool_calls") or []:
                    fn = call.get("function") or {}
                    args = fn.get("arguments")
                    if isinstance(args, str):
                        args = json.loads(args) if args else {}
                    turn.tool_calls.append(ToolCall(fn.get("name", ""), args or {}))
                if chunk.get("done"):
                    done = True
                    break
        except (requests.RequestException, ValueError) as exc:
            raise BackendUnreachable(f"connection lost mid-stream: {exc}") from exc
        if not done:
            raise BackendUnreachable("connection lost mid-stream: no terminal chunk")
        return turn


class OpenAICompatClient:
    """Client for a remote OpenAI-compatible endpoint."""

    def __init__(self, base_url: str, credential: str | None = None,
                 session: requests.Session | None = None):
        self.base_url = base_url.rstrip("/")
        self.credential = credential
        self._http = session or requests.Session()

    def _headers(self) -> dict[str, str]:
        if self.credential:
            return {"Authorization": f"Bearer {self.credential}"}
        return {}

    def list_models(self) -> list[str]:
        try:
            resp = self._http.get(
                f"{self.base_url}/v1/models", headers=self._headers(), timeout=_TIMEOUT,
            )
        except requests.RequestException as exc:
            raise BackendUnreachable(f"endpoint at {self.base_url}: {exc}") from exc
        if resp.status_code != 200:
            raise BackendUnreachable(f"endpoint /v1/models returned {resp.status_code}")
        data = resp.json().get("data")
        if not isinstance(data, list):
            raise BackendUnreachable("endpoint /v1/models returned malformed body")
        return [m["id"] for m in data if isinstance(m, dict) and isinstance(m.get("id"), str)]

    def chat(
        self,
        model: str,
        messages: list[dict[str, Any]],
        params: GenerationParams,
        tools: list[dict[str, Any]] | None = None,
        on_chunk: OnChunk | None = None,
    ) -> ChatTurn:
        body: dict[str, Any] = {"model": model, "messages": messages, "stream": True}
        body.update(_params_to_options(params))
        if tools:
            body["tools"] = tool_specs_to_schema(tools)
        try:
            resp = self._http.post(
                f"{self.base_url}/v1/chat/completions",
                json=body, headers=self._headers(), stream=True, timeout=_TIMEOUT,
            )
        except requests.RequestException as exc:
            raise BackendUnreachable(f"endpoint at {self.base_url}: {exc}") from exc
        if resp.status_code == 404:
            raise UnknownModel(f"endpoint has no model named {model!r}")
        if resp.status_code != 200:
            raise BackendUnreachable(f"endpoint /v1/chat/completions returned {resp.status_code}")

        turn = ChatTurn()
        calls: dict[int, dict[str, Any]] = {}
        try:
            for line in resp.iter_lines(decode_unicode=True):
                if not line or not line.startswith("data:"):
                    continue
                payload = line[len("data:"):].strip()
                if payload == "[DONE]":
                    break
                chunk = json.loads(payload)
                for choice in chunk.get("choices", []):
                    delta = choice.get("delta") or choice.get("message") or {}
                    piece = delta.get("content")
                    if piece:
                        turn.content += piece
                        if on_chunk:
                            on_chunk(piece)
                    for tc in delta.get("tool_calls") or []:
                        slot = calls.setdefault(tc.get("index", len(calls)),
                                                {"name": "", "arguments": ""})
                        fn = tc.get("function") or {}
                        if fn.get("name"):
                            slot["name"] = fn["name"]
                        args = fn.get("arguments")
                        if isinstance(args, dict):
                            slot["arguments"] = json.dumps(args)
                        elif isinstance(args, str):
                            slot["arguments"] += args
        except (requests.RequestException, ValueError) as exc:
            raise BackendUnreachable(f"connection lost mid-stream: {exc}") from exc
        for idx in sorted(calls):
            raw = calls[idx]["arguments"]
            args = json.loads(raw) if raw else {}
            turn.tool_calls.append(ToolCall(calls[idx]["name"], args))
        return turn
