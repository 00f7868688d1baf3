"""Minimal third-party-style OpenAI API client.

Clean-room on purpose: standard library HTTP only, no imports from the
package under test and no shared helpers. It speaks only the documented
OpenAI wire shapes, so it proves the server's compatibility surface rather
than any internal contract.
"""
from __future__ import annotations

import json
import urllib.request


class OpenAIWireClient:
    def __init__(self, base_url: str, api_key: str):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key

    def _request(self, method: str, path: str, body: dict | None = None):
        data = json.dumps(body).encode("utf-8") if body is not None else None
        req = urllib.request.Request(
            self.base_url + path,
            data=data,
            method=method,
            headers={
                "Authorization": f"Bearer {self.api_key}",
                "Content-Type": "application/json",
            },
        )
        return urllib.request.urlopen(req, timeout=30)

    def list_models(self) -> list[str]:
        with self._request("GET", "/v1/models") as resp:
            doc = json.loads(resp.read().decode("utf-8"))
        assert doc["object"] == "list"
        return [m["id"] for m in doc["data"]]

    def stream_chat(self, model: str, messages: list[dict]) -> dict:
        """Stream one completion; returns {"content", "chunks", "roles",
        "finish_reason", "saw_done"}."""
        body = {"model": model, "messages": messages, "stream": True}
        chunks: list[str] = []
        roles: list[str] = []
        finish_reason = None
        saw_done = False
        with self._request("POST", "/v1/chat/completions", body) as resp:
            ctype = resp.headers.get("content-type", "")
            assert "text/event-stream" in ctype, ctype
            for raw in resp:
                line = raw.decode("utf-8").rstrip("\n")
                if not line.startswith("data:"):
                    continue
                payload = line[len("data:"):].strip()
                if payload == "[DONE]":
                    saw_done = True
                    break
                event = json.loads(payload)
                assert event["object"] == "chat.completion.chunk"
                for choice in event.get("choices", []):
                    delta = choice.get("delta", {})
                    if "role" in delta:
                        roles.append(delta["role"])
                    if delta.get("content"):
                        chunks.append(delta["content"])
                    if choice.get("finish_reason"):
                        finish_reason = choice["finish_reason"]
        return {
            "content": "".join(chunks),
            "chunks": chunks,
            "roles": roles,
            "finish_reason": finish_reason,
            "saw_done": saw_done,
        }

    def chat(self, model: str, messages: list[dict]) -> dict:
        body = {"model": model, "messages": messages, "stream": False}
        with self._request("POST", "/v1/chat/completions", body) as resp:
            doc = json.loads(resp.read().decode("utf-8"))
        assert doc["object"] == "chat.completion"
        return doc
