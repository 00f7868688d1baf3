"""Packaging, import, and hub browsing for shareable resources.

A package is a UTF-8 text file: front-matter of ``key: value`` lines, a
``---`` separator line, then the payload. The header carries a SHA-256
digest of the payload bytes; import verifies it before anything is
installed. Chat-log sharing is strictly opt-in: without consent no byte
leaves the process.
"""
from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any

import requests

from .errors import (
    ConsentRequired,
    HubNotConfigured,
    HubUnreachable,
    IntegrityError,
    InvocationFailed,
    PackageFormatError,
    PermissionDenied,
    SwitchboardError,
    UnknownResource,
    UnsupportedCategory,
)

log = logging.getLogger(__name__)

CATEGORIES = ("tool", "function", "model-preset", "prompt")
HEADER_ORDER = ("category", "name", "version", "author", "description",
                "license", "digest")
INDEX_CACHE_TTL_S = 300.0
HUB_TIMEOUT = (5.0, 30.0)


# -- package file format ------------------------------------------------------------

def payload_digest(payload: bytes) -> str:
    return "sha256:" + hashlib.sha256(payload).hexdigest()


def encode_package(header: dict[str, str], payload: bytes | str) -> str:
    if isinstance(payload, str):
        payload = payload.encode("utf-8")
    category = header.get("category")
    if category not in CATEGORIES:
        raise UnsupportedCategory(f"unknown package category {category!r}")
    fields = dict(header)
    fields["digest"] = payload_digest(payload)
    lines = []
    for key in HEADER_ORDER:
        value = str(fields.get(key, ""))
        if "\n" in value:
            raise PackageFormatError(f"header field {key!r} contains a newline")
        lines.append(f"{key}: {value}")
    return "\n".join(lines) + "\n---\n" + payload.decode("utf-8")


def parse_package(text: str | bytes) -> tuple[dict[str, str], bytes]:
    """Split and verify a package; IntegrityError on digest mismatch."""
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise PackageFormatError(f"package is not UTF-8: {exc}") from exc
    head, sep, payload_text = text.partition("\n---\n")
    if not sep:
        raise PackageFormatError("package has no front-matter separator line")
    header: dict[str, str] = {}
    for line in head.splitlines():
        if not line.strip():
            continue
        key, colon, value = line.partition(":")
        if not colon:
            raise PackageFormatError(f"malformed header line {line!r}")
        header[key.strip()] = value.strip()
    category = header.get("category")
    if not category:
        raise PackageFormatError("header is missing category")
    if category not in CATEGORIES:
        raise UnsupportedCategory(f"unknown package category {category!r}")
    declared = header.get("digest", "")
    if not declared.startswith("sha256:"):
        raise PackageFormatError("header digest must be sha256:<hex>")
    payload = payload_text.encode("utf-8")
    if payload_digest(payload) != declared:
        raise IntegrityError("payload digest does not match the header")
    return header, payload


# -- hub index -----------------------------------------------------------------------

@dataclass(frozen=True)
class HubIndexEntry:
    id: str
    category: str
    name: str
    description: str = ""
    downloads: int = 0
    updated_at: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "category": self.category, "name": self.name,
                "description": self.description, "downloads": self.downloads,
                "updated_at": self.updated_at}


@dataclass
class HubIndexResult:
    entries: list[HubIndexEntry]
    stale: bool = False


@dataclass(frozen=True)
class ShareRecord:
    id: str
    conversation_id: str
    chat_log: dict[str, Any]
    consent: bool
    shared_at: str
    redactions_applied: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "conversation_id": self.conversation_id,
                "chat_log": self.chat_log, "consent": self.consent,
                "shared_at": self.shared_at,
                "redactions_applied": list(self.redactions_applied)}


def _matches(entry: HubIndexEntry, category: str | None, query: str | None) -> bool:
    if category is not None and entry.category != category:
        return False
    if query:
        haystack = f"{entry.name}\n{entry.description}".lower()
        return query.lower() in haystack
    return True


class HubClient:
    def __init__(self, store, engine=None, presets=None, chat=None,
                 base_url: str | None = None,
                 cache_ttl: float = INDEX_CACHE_TTL_S,
                 session: requests.Session | None = None):
        self._store = store
        self._engine = engine
        self._presets = presets
        self._chat = chat
        self.base_url = base_url.rstrip("/") if base_url else None
        self._cache_ttl = cache_ttl
        self._http = session or requests.Session()
        self._cache: dict[tuple[str, str], tuple[float, list[HubIndexEntry]]] = {}
        self._cache_lock = threading.Lock()

    def configure(self, base_url: str | None) -> None:
        self.base_url = base_url.rstrip("/") if base_url else None

    def _require_hub(self) -> str:
        if not self.base_url:
            raise HubNotConfigured(
                "no hub URL configured; sharing features are off by default")
        return self.base_url

    # -- export ---------------------------------------------------------------------

    def export_package(self, category: str, resource_ref: str,
                       requester: Any = None) -> str:
        if category in ("tool", "function"):
            return self._export_plugin(category, resource_ref)
        if category == "prompt":
            return self._export_prompt(resource_ref)
        if category == "model-preset":
            return self._export_model_preset(resource_ref)
        raise UnsupportedCategory(f"unknown package category {category!r}")

    def _export_plugin(self, category: str, plugin_id: str) -> str:
        if self._engine is None:
            raise UnknownResource("no plugin engine attached")
        manifest = self._engine.get_manifest(plugin_id)
        expected = "tool" if manifest.kind == "tool" else "function"
        if category != expected:
            raise UnsupportedCategory(
                f"plugin {plugin_id!r} is kind {manifest.kind!r}; export it "
                f"under category {expected!r}")
        bundle = self._engine.export_bundle(plugin_id)
        return encode_package({
            "category": category,
            "name": manifest.id,
            "version": manifest.version,
            "author": manifest.author,
            "description": manifest.description,
            "license": "unspecified",
        }, json.dumps(bundle, sort_keys=True))

    def _export_prompt(self, command: str) -> str:
        if self._presets is None:
            raise UnknownResource("no preset engine attached")
        preset = self._presets.get_prompt(command)
        payload = json.dumps({"command": preset.command, "title": preset.title,
                              "body": preset.body}, sort_keys=True)
        return encode_package({
            "category": "prompt",
            "name": preset.command,
            "version": "1",
            "author": "",
            "description": preset.title,
            "license": "unspecified",
        }, payload)

    def _export_model_preset(self, preset_id: str) -> str:
        if self._presets is None:
            raise UnknownResource("no preset engine attached")
        preset = self._presets.get_model_preset(preset_id)
        return encode_package({
            "category": "model-preset",
            "name": preset.id,
            "version": "1",
            "author": "",
            "description": preset.system_prompt or "",
            "license": "unspecified",
        }, json.dumps(preset.to_dict(), sort_keys=True))

    # -- import ----------------------------------------------------------------------

    def import_package(self, text: str | bytes) -> dict[str, str]:
        header, payload = parse_package(text)
        category = header["category"]
        name = header.get("name", "?")
        try:
            document = json.loads(payload.decode("utf-8"))
        except (ValueError, UnicodeDecodeError) as exc:
            raise PackageFormatError(
                f"package {name!r} payload is not JSON: {exc}") from exc
        try:
            if category in ("tool", "function"):
                ref = self._import_plugin(category, document)
            elif category == "prompt":
                ref = self._import_prompt(document)
            else:
                ref = self._import_model_preset(document)
        except (PackageFormatError, UnsupportedCategory):
            raise
        except SwitchboardError as exc:
            context = f"package {name!r}: {exc.message}"
            raise exc.__class__(context, field=exc.field) from exc
        return {"category": category, "ref": ref, "name": name}

    def _import_plugin(self, category: str, document: Any) -> str:
        if self._engine is None:
            raise UnknownResource("no plugin engine attached")
        if not isinstance(document, dict) or "entry_command" not in document \
                or "files" not in document:
            raise PackageFormatError(
                "plugin payload must be a bundle with entry_command and files")
        manifest = self._engine.install_plugin(document)
        expected = "tool" if category == "tool" else ("filter", "pipe", "action")
        if manifest.kind not in expected:
            self._engine.uninstall_plugin(manifest.id)
            raise PackageFormatError(
                f"category {category!r} package installed a {manifest.kind!r} plugin")
        return manifest.id

    def _import_prompt(self, document: Any) -> str:
        if self._presets is None:
            raise UnknownResource("no preset engine attached")
        if not isinstance(document, dict) or not document.get("command"):
            raise PackageFormatError("prompt payload must carry a command")
        preset = self._presets.register_prompt(
            document["command"], document.get("title", ""),
            document.get("body", ""))
        return preset.command

    def _import_model_preset(self, document: Any) -> str:
        if self._presets is None:
            raise UnknownResource("no preset engine attached")
        if not isinstance(document, dict) or not document.get("id"):
            raise PackageFormatError("model-preset payload must carry an id")
        from .presets import ModelPreset
        preset = ModelPreset.from_dict(document)
        self._presets.create_model_preset(preset)
        return preset.id

    # -- browsing ---------------------------------------------------------------------

    def browse_index(self, category: str | None = None,
                     query: str | None = None) -> HubIndexResult:
        base = self._require_hub()
        if category is not None and category not in CATEGORIES:
            raise UnsupportedCategory(f"unknown package category {category!r}")
        key = (category or "", query or "")
        try:
            params = {}
            if category:
                params["category"] = category
            if query:
                params["q"] = query
            resp = self._http.get(f"{base}/index", params=params,
                                  timeout=HUB_TIMEOUT)
            resp.raise_for_status()
            raw = resp.json()
            if not isinstance(raw, list):
                raise ValueError("index response is not a JSON array")
        except (requests.RequestException, ValueError) as exc:
            with self._cache_lock:
                cached = self._cache.get(key)
            if cached is not None:
                return HubIndexResult(entries=list(cached[1]), stale=True)
            raise HubUnreachable(f"hub at {base}: {exc}") from exc
        entries = []
        for item in raw:
            if not isinstance(item, dict) or not item.get("id"):
                log.warning("skipping malformed hub index entry: %r", item)
                continue
            entry = HubIndexEntry(
                id=str(item["id"]),
                category=str(item.get("category", "")),
                name=str(item.get("name", "")),
                description=str(item.get("description", "")),
                downloads=max(0, int(item.get("downloads", 0) or 0)),
                updated_at=str(item.get("updated_at", "")),
            )
            # filter locally as well, for hubs that ignore the query params
            if _matches(entry, category, query):
                entries.append(entry)
        with self._cache_lock:
            self._cache[key] = (time.monotonic(), entries)
        return HubIndexResult(entries=list(entries), stale=False)

    def cached_index(self, category: str | None = None,
                     query: str | None = None) -> HubIndexResult | None:
        """Fresh cache hit for the same filter, if any (no network)."""
        key = (category or "", query or "")
        with self._cache_lock:
            cached = self._cache.get(key)
        if cached is None or time.monotonic() - cached[0] > self._cache_ttl:
            return None
        return HubIndexResult(entries=list(cached[1]), stale=False)

    def browse(self, category: str | None = None,
               query: str | None = None) -> HubIndexResult:
        """browse_index behind the 5-minute cache."""
        hit = self.cached_index(category, query)
        if hit is not None:
            return hit
        return self.browse_index(category, query)

    # -- chat-log sharing -------------------------------------------------------------

    def share_chat_log(self, conversation_id: str, consent: bool,
                       redaction_filter_ids: list[str] | tuple[str, ...] = (),
                       requester: Any = None) -> ShareRecord:
        if not consent:
            # checked before any export or network work: without consent
            # nothing is read, serialized, or transmitted
            raise ConsentRequired("chat-log sharing requires explicit consent")
        base = self._require_hub()
        if self._chat is None:
            raise UnknownResource("no conversation service attached")
        if requester is not None:
            conv = self._chat.get_conversation(conversation_id)
            req_id = requester.get("id") if isinstance(requester, dict) \
                else getattr(requester, "id", None)
            if conv.owner_user_id != req_id:
                raise PermissionDenied("only the owner may share a conversation")
        document = self._chat.export_chat_log(conversation_id)
        applied = []
        for filter_id in redaction_filter_ids:
            document = self._redact(filter_id, document)
            applied.append(filter_id)
        try:
            resp = self._http.post(f"{base}/share", json=document,
                                   timeout=HUB_TIMEOUT)
            resp.raise_for_status()
        except requests.RequestException as exc:
            raise HubUnreachable(f"hub at {base}: {exc}") from exc
        record = ShareRecord(
            id=f"s-{uuid.uuid4().hex}",
            conversation_id=conversation_id,
            chat_log=document,
            consent=True,
            shared_at=_now_iso(),
            redactions_applied=tuple(applied),
        )
        self._store.put("shares", record.id, record.to_dict())
        self._chat.set_shared(conversation_id, True)
        return record

    def _redact(self, filter_id: str, document: dict[str, Any]) -> dict[str, Any]:
        if self._engine is None:
            raise UnknownResource("no plugin engine attached")
        nodes = document.get("nodes", [])
        messages = [{"role": n.get("role", "user"), "content": n.get("content", "")}
                    for n in nodes]
        if not messages:
            return document
        result = self._engine.apply_filter(filter_id, {
            "messages": messages, "params": {}, "user": None,
            "model_id": None, "extra": {}})
        redacted = result["messages"]
        if len(redacted) != len(nodes):
            raise InvocationFailed(
                f"redaction filter {filter_id!r} changed the message count")
        out = json.loads(json.dumps(document))
        for node, message in zip(out["nodes"], redacted):
            node["content"] = message.get("content", "")
        return out

    def list_shares(self, conversation_id: str | None = None) -> list[ShareRecord]:
        out = []
        for _, raw in self._store.items("shares"):
            record = ShareRecord(
                id=raw["id"],
                conversation_id=raw["conversation_id"],
                chat_log=raw.get("chat_log") or {},
                consent=bool(raw.get("consent")),
                shared_at=raw.get("shared_at", ""),
                redactions_applied=tuple(raw.get("redactions_applied") or ()),
            )
            if conversation_id is None or record.conversation_id == conversation_id:
                out.append(record)
        out.sort(key=lambda r: (r.shared_at, r.id))
        return out


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat().replace("+00:00", "Z")
