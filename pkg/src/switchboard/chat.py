"""Branching conversation model: message forest, fan-out, selection, export.

Each conversation is a forest of message nodes with an active-leaf cursor.
Multi-model fan-out creates one sibling per model under the prompt node and
marks the batch with a shared group id; selecting a response moves the
cursor and, for batches of two or more, appends an immutable preference
record. Per-conversation mutations are serialized; generations across
conversations share a global slot pool.
"""
from __future__ import annotations

import contextlib
import logging
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Callable

from .errors import (
    ActionFailed,
    BadChatLog,
    ConcurrencyLimitExceeded,
    EmptyContent,
    InvalidParams,
    NotAssistantNode,
    PermissionDenied,
    UnknownConversation,
    UnknownNode,
    UnknownParent,
    UnknownUser,
)
from .params import GenerationParams

log = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant", "tool")
STATUSES = ("streaming", "complete", "error")
DEFAULT_TITLE = "New Chat"
TITLE_PREFIX_LEN = 48
DEFAULT_MAX_PARALLEL = 8
EXPORT_VERSION = 1


def now_iso() -> str:
    return datetime.now(timezone.utc).isoformat().replace("+00:00", "Z")


def _new_id(prefix: str) -> str:
    return f"{prefix}-{uuid.uuid4().hex}"


@dataclass
class MessageNode:
    id: str
    conversation_id: str
    parent_id: str | None
    role: str
    content: str
    attachments: list[Any] = field(default_factory=list)
    model_id: str | None = None
    status: str = "complete"
    error_detail: str | None = None
    group_id: str | None = None
    created_at: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "conversation_id": self.conversation_id,
            "parent_id": self.parent_id,
            "role": self.role,
            "content": self.content,
            "attachments": list(self.attachments),
            "model_id": self.model_id,
            "status": self.status,
            "error_detail": self.error_detail,
            "group_id": self.group_id,
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> MessageNode:
        return cls(
            id=raw["id"],
            conversation_id=raw["conversation_id"],
            parent_id=raw.get("parent_id"),
            role=raw["role"],
            content=raw.get("content", ""),
            attachments=list(raw.get("attachments") or []),
            model_id=raw.get("model_id"),
            status=raw.get("status", "complete"),
            error_detail=raw.get("error_detail"),
            group_id=raw.get("group_id"),
            created_at=raw.get("created_at", ""),
        )


@dataclass
class Conversation:
    id: str
    owner_user_id: str
    title: str = DEFAULT_TITLE
    created_at: str = ""
    updated_at: str = ""
    node_ids: list[str] = field(default_factory=list)
    root_ids: list[str] = field(default_factory=list)
    active_leaf_id: str | None = None
    shared: bool = False
    title_auto: bool = True

    def to_dict(self, internal: bool = False) -> dict[str, Any]:
        out = {
            "id": self.id,
            "owner_user_id": self.owner_user_id,
            "title": self.title,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
            "node_ids": list(self.node_ids),
            "root_ids": list(self.root_ids),
            "active_leaf_id": self.active_leaf_id,
            "shared": self.shared,
        }
        if internal:
            out["title_auto"] = self.title_auto
        return out

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> Conversation:
        return cls(
            id=raw["id"],
            owner_user_id=raw["owner_user_id"],
            title=raw.get("title", DEFAULT_TITLE),
            created_at=raw.get("created_at", ""),
            updated_at=raw.get("updated_at", ""),
            node_ids=list(raw.get("node_ids") or []),
            root_ids=list(raw.get("root_ids") or []),
            active_leaf_id=raw.get("active_leaf_id"),
            shared=bool(raw.get("shared", False)),
            title_auto=bool(raw.get("title_auto", False)),
        )


@dataclass(frozen=True)
class PreferenceRecord:
    id: str
    conversation_id: str
    prompt_node_id: str
    candidate_ids: tuple[str, ...]
    selected_id: str
    selected_at: str
    user_id: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "conversation_id": self.conversation_id,
            "prompt_node_id": self.prompt_node_id,
            "candidate_ids": list(self.candidate_ids),
            "selected_id": self.selected_id,
            "selected_at": self.selected_at,
            "user_id": self.user_id,
        }

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> PreferenceRecord:
        return cls(
            id=raw["id"],
            conversation_id=raw["conversation_id"],
            prompt_node_id=raw["prompt_node_id"],
            candidate_ids=tuple(raw.get("candidate_ids") or ()),
            selected_id=raw["selected_id"],
            selected_at=raw.get("selected_at", ""),
            user_id=raw.get("user_id"),
        )


class _SlotPool:
    """Try-acquire counter: callers either get all requested slots or fail."""

    def __init__(self, limit: int):
        self._available = limit
        self._lock = threading.Lock()

    def acquire(self, count: int) -> None:
        with self._lock:
            if count > self._available:
                raise ConcurrencyLimitExceeded(
                    f"requested {count} generation slots with only "
                    f"{self._available} free")
            self._available -= count

    def release(self, count: int = 1) -> None:
        with self._lock:
            self._available += count


class ChatService:
    def __init__(self, store, pipeline=None, max_parallel: int = DEFAULT_MAX_PARALLEL):
        self._store = store
        self._pipeline = pipeline
        self._slots = _SlotPool(max_parallel)
        self._conv_locks: dict[str, threading.RLock] = {}
        self._locks_guard = threading.Lock()

    def set_pipeline(self, pipeline) -> None:
        self._pipeline = pipeline

    @contextlib.contextmanager
    def generation_slot(self, count: int = 1):
        """Reserve generation slots for work outside fan-out (e.g. the
        stateless completion endpoint), so one global limit applies."""
        self.acquire_slots(count)
        try:
            yield
        finally:
            self.release_slots(count)

    def acquire_slots(self, count: int = 1) -> None:
        self._slots.acquire(count)

    def release_slots(self, count: int = 1) -> None:
        self._slots.release(count)

    def _lock_for(self, conv_id: str) -> threading.RLock:
        with self._locks_guard:
            lock = self._conv_locks.get(conv_id)
            if lock is None:
                lock = self._conv_locks[conv_id] = threading.RLock()
            return lock

    # -- persistence helpers ----------------------------------------------------

    def _load_conv(self, conv_id: str) -> Conversation:
        raw = self._store.get("conversations", conv_id)
        if raw is None:
            raise UnknownConversation(f"no conversation {conv_id!r}")
        return Conversation.from_dict(raw)

    def _save_conv(self, conv: Conversation) -> None:
        conv.updated_at = now_iso()
        self._store.put("conversations", conv.id, conv.to_dict(internal=True))

    def _save_node(self, node: MessageNode) -> None:
        self._store.put("nodes", f"{node.conversation_id}/{node.id}", node.to_dict())

    def _load_node(self, conv_id: str, node_id: str) -> MessageNode:
        raw = self._store.get("nodes", f"{conv_id}/{node_id}")
        if raw is None:
            raise UnknownNode(f"no node {node_id!r} in conversation {conv_id!r}")
        return MessageNode.from_dict(raw)

    # -- conversations -------------------------------------------------------------

    def create_conversation(self, owner_user_id: str, title: str | None = None) -> Conversation:
        if not owner_user_id:
            raise UnknownUser("conversation owner is required")
        conv = Conversation(
            id=_new_id("c"),
            owner_user_id=owner_user_id,
            title=title if title else DEFAULT_TITLE,
            created_at=now_iso(),
            title_auto=title is None or not title,
        )
        self._save_conv(conv)
        return conv

    def get_conversation(self, conv_id: str) -> Conversation:
        return self._load_conv(conv_id)

    def list_conversations(self, owner_user_id: str | None = None) -> list[Conversation]:
        out = []
        for _, raw in self._store.items("conversations"):
            conv = Conversation.from_dict(raw)
            if owner_user_id is None or conv.owner_user_id == owner_user_id:
                out.append(conv)
        out.sort(key=lambda c: (c.updated_at, c.id), reverse=True)
        return out

    def delete_conversation(self, conv_id: str) -> None:
        with self._lock_for(conv_id):
            conv = self._load_conv(conv_id)
            for node_id in conv.node_ids:
                self._store.delete("nodes", f"{conv_id}/{node_id}")
            for key in self._store.keys("preferences", prefix=f"{conv_id}/"):
                self._store.delete("preferences", key)
            self._store.delete("conversations", conv_id)

    def set_shared(self, conv_id: str, shared: bool) -> Conversation:
        with self._lock_for(conv_id):
            conv = self._load_conv(conv_id)
            conv.shared = shared
            self._save_conv(conv)
            return conv

    # -- nodes ------------------------------------------------------------------

    def get_node(self, conv_id: str, node_id: str) -> MessageNode:
        self._load_conv(conv_id)
        return self._load_node(conv_id, node_id)

    def nodes(self, conv_id: str) -> list[MessageNode]:
        conv = self._load_conv(conv_id)
        return [self._load_node(conv_id, node_id) for node_id in conv.node_ids]

    def post_user_message(self, conv_id: str, content: str,
                          parent_id: str | None = None) -> MessageNode:
        if not content or not content.strip():
            raise EmptyContent("message content is empty after trimming")
        with self._lock_for(conv_id):
            conv = self._load_conv(conv_id)
            if parent_id is not None and parent_id not in conv.node_ids:
                raise UnknownParent(f"no parent node {parent_id!r}")
            node = MessageNode(
                id=_new_id("n"),
                conversation_id=conv_id,
                parent_id=parent_id,
                role="user",
                content=content,
                created_at=now_iso(),
            )
            self._save_node(node)
            conv.node_ids.append(node.id)
            if parent_id is None:
                conv.root_ids.append(node.id)
            conv.active_leaf_id = node.id
            if conv.title_auto:
                conv.title = content.strip()[:TITLE_PREFIX_LEN]
                conv.title_auto = False
            self._save_conv(conv)
            return node

    # -- fan-out generation -----------------------------------------------------

    def fan_out_generate(self, conv_id: str, prompt_node_id: str,
                         model_ids: list[str], params: GenerationParams,
                         user: Any = None,
                         on_event: Callable[[dict[str, Any]], None] | None = None,
                         ) -> list[MessageNode]:
        """Generate one sibling assistant node per model, concurrently.

        Always creates exactly len(model_ids) nodes; a model whose route or
        generation fails yields a status=error node without disturbing the
        others. Returns the final nodes in request order.
        """
        if not model_ids:
            raise InvalidParams("model_ids must be nonempty", field="model_ids")
        with self._lock_for(conv_id):
            conv = self._load_conv(conv_id)
            prompt = self._load_node(conv_id, prompt_node_id)
            if prompt.role != "user":
                raise InvalidParams("fan-out prompt must be a user node",
                                    field="prompt_node_id")
            context = self._path_to(conv, prompt.id)
            self._slots.acquire(len(model_ids))
            group_id = _new_id("g")
            nodes = []
            for model_id in model_ids:
                node = MessageNode(
                    id=_new_id("n"),
                    conversation_id=conv_id,
                    parent_id=prompt.id,
                    role="assistant",
                    content="",
                    model_id=model_id,
                    status="streaming",
                    group_id=group_id,
                    created_at=now_iso(),
                )
                self._save_node(node)
                conv.node_ids.append(node.id)
                nodes.append(node)
            self._save_conv(conv)

        def emit(event: dict[str, Any]) -> None:
            if on_event is None:
                return
            try:
                on_event(event)
            except Exception:
                log.exception("fan-out event subscriber raised; ignoring")

        wire_context = [{"role": n.role, "content": n.content} for n in context]

        def generate(node: MessageNode) -> None:
            try:
                if self._pipeline is None:
                    raise InvalidParams("no generation pipeline attached")
                result = self._pipeline.generate(
                    node.model_id, wire_context, params, user=user,
                    on_chunk=lambda text: emit({
                        "type": "chunk", "node_id": node.id,
                        "model_id": node.model_id, "content": text,
                    }))
                node.content = result.content
                node.status = "complete"
                node.error_detail = None
            except Exception as exc:
                node.status = "error"
                node.error_detail = str(exc) or exc.__class__.__name__
            finally:
                self._slots.release()
            self._save_node(node)
            emit({"type": "node_complete" if node.status == "complete"
                  else "node_error", "node": node.to_dict()})

        threads = [threading.Thread(target=generate, args=(node,), daemon=True)
                   for node in nodes]
        for t in threads:
            t.start()
        for t in threads:
            t.join()

        if len(nodes) == 1:
            with self._lock_for(conv_id):
                conv = self._load_conv(conv_id)
                conv.active_leaf_id = nodes[0].id
                self._save_conv(conv)
        return [self._load_node(conv_id, n.id) for n in nodes]

    # -- selection ------------------------------------------------------------------

    def select_response(self, conv_id: str, node_id: str,
                        user: Any = None) -> PreferenceRecord | None:
        with self._lock_for(conv_id):
            conv = self._load_conv(conv_id)
            node = self._load_node(conv_id, node_id)
            if node.role != "assistant":
                raise NotAssistantNode(
                    f"node {node_id!r} has role {node.role!r}, not assistant")
            conv.active_leaf_id = node.id
            self._save_conv(conv)
            if node.group_id is None:
                return None
            siblings = [
                other for other in self.nodes(conv_id)
                if other.group_id == node.group_id
                and other.parent_id == node.parent_id
            ]
            if len(siblings) < 2:
                return None
            user_id = None
            if isinstance(user, dict):
                user_id = user.get("id")
            elif user is not None:
                user_id = getattr(user, "id", None)
            record = PreferenceRecord(
                id=_new_id("p"),
                conversation_id=conv_id,
                prompt_node_id=node.parent_id,
                candidate_ids=tuple(sorted(s.id for s in siblings)),
                selected_id=node.id,
                selected_at=now_iso(),
                user_id=user_id,
            )
            self._store.put("preferences", f"{conv_id}/{record.id}",
                            record.to_dict())
            return record

    def preferences(self, conv_id: str) -> list[PreferenceRecord]:
        out = [PreferenceRecord.from_dict(raw)
               for _, raw in self._store.items("preferences", prefix=f"{conv_id}/")]
        out.sort(key=lambda r: (r.selected_at, r.id))
        return out

    # -- threads ----------------------------------------------------------------------

    def _path_to(self, conv: Conversation, node_id: str) -> list[MessageNode]:
        path = []
        cursor: str | None = node_id
        seen = set()
        while cursor is not None:
            if cursor in seen:
                raise BadChatLog(f"parent cycle at node {cursor!r}")
            seen.add(cursor)
            node = self._load_node(conv.id, cursor)
            path.append(node)
            cursor = node.parent_id
        path.reverse()
        return path

    def active_thread(self, conv_id: str) -> list[MessageNode]:
        conv = self._load_conv(conv_id)
        if conv.active_leaf_id is None:
            return []
        return self._path_to(conv, conv.active_leaf_id)

    def thread_to(self, conv_id: str, node_id: str) -> list[MessageNode]:
        conv = self._load_conv(conv_id)
        self._load_node(conv_id, node_id)
        return self._path_to(conv, node_id)

    # -- export / import ---------------------------------------------------------

    def export_chat_log(self, conv_id: str, requester: Any = None) -> dict[str, Any]:
        conv = self._load_conv(conv_id)
        if requester is not None:
            req_id = requester.get("id") if isinstance(requester, dict) else getattr(requester, "id", None)
            req_role = requester.get("role") if isinstance(requester, dict) else getattr(requester, "role", None)
            if conv.owner_user_id != req_id and req_role != "admin":
                raise PermissionDenied("only the owner or an admin may export")
        return {
            "version": EXPORT_VERSION,
            "conversation": conv.to_dict(),
            "nodes": [self._load_node(conv_id, nid).to_dict()
                      for nid in conv.node_ids],
            "preferences": [r.to_dict() for r in self.preferences(conv_id)],
        }

    def import_chat_log(self, document: Any, owner_user_id: str) -> Conversation:
        """Recreate an exported conversation under fresh ids, same shape."""
        if not owner_user_id:
            raise UnknownUser("import owner is required")
        if not isinstance(document, dict) or document.get("version") != EXPORT_VERSION:
            raise BadChatLog("document must be a version-1 chat log")
        conv_raw = document.get("conversation")
        nodes_raw = document.get("nodes")
        prefs_raw = document.get("preferences", [])
        if not isinstance(conv_raw, dict) or not isinstance(nodes_raw, list) \
                or not isinstance(prefs_raw, list):
            raise BadChatLog("chat log is missing conversation or node sections")

        node_map: dict[str, str] = {}
        group_map: dict[str, str] = {}
        for raw in nodes_raw:
            if not isinstance(raw, dict) or not isinstance(raw.get("id"), str):
                raise BadChatLog("node entries must be objects with string ids")
            if raw["id"] in node_map:
                raise BadChatLog(f"duplicate node id {raw['id']!r}")
            node_map[raw["id"]] = _new_id("n")

        conv = Conversation(
            id=_new_id("c"),
            owner_user_id=owner_user_id,
            title=str(conv_raw.get("title") or DEFAULT_TITLE),
            created_at=now_iso(),
            title_auto=False,
        )
        new_nodes: list[MessageNode] = []
        for raw in nodes_raw:
            role = raw.get("role")
            status = raw.get("status", "complete")
            if role not in ROLES or status not in STATUSES:
                raise BadChatLog(f"node {raw['id']!r} has invalid role or status")
            parent = raw.get("parent_id")
            if parent is not None:
                if parent not in node_map:
                    raise BadChatLog(f"node {raw['id']!r} references missing parent")
                parent = node_map[parent]
            group = raw.get("group_id")
            if group is not None:
                group = group_map.setdefault(group, _new_id("g"))
            new_nodes.append(MessageNode(
                id=node_map[raw["id"]],
                conversation_id=conv.id,
                parent_id=parent,
                role=role,
                content=raw.get("content", ""),
                attachments=list(raw.get("attachments") or []),
                model_id=raw.get("model_id"),
                status=status,
                error_detail=raw.get("error_detail"),
                group_id=group,
                created_at=raw.get("created_at") or now_iso(),
            ))

        by_id = {n.id: n for n in new_nodes}
        for node in new_nodes:
            seen = set()
            cursor: str | None = node.id
            while cursor is not None:
                if cursor in seen:
                    raise BadChatLog("node parents form a cycle")
                seen.add(cursor)
                cursor = by_id[cursor].parent_id

        conv.node_ids = [n.id for n in new_nodes]
        old_roots = conv_raw.get("root_ids") or []
        conv.root_ids = [node_map[r] for r in old_roots if r in node_map]
        for node in new_nodes:
            if node.parent_id is None and node.id not in conv.root_ids:
                conv.root_ids.append(node.id)
        active = conv_raw.get("active_leaf_id")
        if active is not None:
            if active not in node_map:
                raise BadChatLog("active_leaf_id names a missing node")
            conv.active_leaf_id = node_map[active]

        records = []
        for raw in prefs_raw:
            if not isinstance(raw, dict):
                raise BadChatLog("preference entries must be objects")
            try:
                candidates = tuple(sorted(node_map[c] for c in raw["candidate_ids"]))
                selected = node_map[raw["selected_id"]]
                prompt = node_map[raw["prompt_node_id"]]
            except (KeyError, TypeError) as exc:
                raise BadChatLog("preference record references missing nodes") from exc
            if selected not in candidates or len(candidates) < 2:
                raise BadChatLog("preference record selection is unsound")
            records.append(PreferenceRecord(
                id=_new_id("p"),
                conversation_id=conv.id,
                prompt_node_id=prompt,
                candidate_ids=candidates,
                selected_id=selected,
                selected_at=raw.get("selected_at") or now_iso(),
                user_id=raw.get("user_id"),
            ))

        for node in new_nodes:
            self._save_node(node)
        for record in records:
            self._store.put("preferences", f"{conv.id}/{record.id}", record.to_dict())
        self._save_conv(conv)
        return conv

    # -- action results ----------------------------------------------------------

    def apply_action_result(self, conv_id: str, node_id: str,
                            result: dict[str, Any]) -> MessageNode:
        """Apply an action plugin's result atomically; validates before writing."""
        with self._lock_for(conv_id):
            conv = self._load_conv(conv_id)
            node = self._load_node(conv_id, node_id)
            kind = result.get("type")
            if kind == "append":
                content = result.get("content")
                if not isinstance(content, str) or not content:
                    raise ActionFailed("append result carries no content")
                role = result.get("role", "assistant")
                if role not in ROLES:
                    raise ActionFailed(f"append result role {role!r} is invalid")
                new_node = MessageNode(
                    id=_new_id("n"),
                    conversation_id=conv_id,
                    parent_id=node.id,
                    role=role,
                    content=content,
                    model_id=(result.get("model_id") or node.model_id or "action")
                    if role == "assistant" else result.get("model_id"),
                    created_at=now_iso(),
                )
                self._save_node(new_node)
                conv.node_ids.append(new_node.id)
                if conv.active_leaf_id == node.id:
                    conv.active_leaf_id = new_node.id
                self._save_conv(conv)
                return new_node
            if kind == "attach":
                artifact = result.get("artifact")
                if artifact is None or artifact == "":
                    raise ActionFailed("attach result carries no artifact")
                node.attachments.append(artifact)
                self._save_node(node)
                self._save_conv(conv)
                return node
            if kind == "mutate":
                content = result.get("content")
                if not isinstance(content, str):
                    raise ActionFailed("mutate result carries no content")
                node.content = content
                self._save_node(node)
                self._save_conv(conv)
                return node
            raise ActionFailed(f"unsupported action result type {kind!r}")

    # -- crash recovery ----------------------------------------------------------------

    def recover_interrupted(self) -> int:
        """Mark nodes left streaming by an unclean shutdown as errored."""
        recovered = 0
        for key, raw in self._store.items("nodes"):
            if raw.get("status") == "streaming":
                raw["status"] = "error"
                raw["error_detail"] = "generation interrupted by server restart"
                self._store.put("nodes", key, raw)
                recovered += 1
        return recovered
