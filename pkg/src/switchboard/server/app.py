"""HTTP surface: OpenAI-compatible completion routes plus the management API.

Every error leaves as the uniform envelope {"error": {code, message,
field?}}. Streaming responses are server-sent events: `data:`-prefixed JSON
chunks with a terminal `data: [DONE]`. Handlers are synchronous and run in
the framework's worker pool, so slow plugin or backend I/O never blocks
unrelated requests.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import queue
import threading
import time
import uuid
from typing import Any

from fastapi import Body, Depends, FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, StreamingResponse

from .. import errors as E
from ..params import GenerationParams
from ..registry import BackendConfig

log = logging.getLogger(__name__)

_STATUS_BY_CLASS: dict[type, int] = {
    E.InvalidToken: 401,
    E.InvalidCredentials: 401,
    E.AccountPending: 403,
    E.PermissionDenied: 403,
    E.SignupDisabled: 403,
    E.UnknownModel: 404,
    E.UnknownConversation: 404,
    E.UnknownNode: 404,
    E.UnknownParent: 404,
    E.UnknownUser: 404,
    E.UnknownPlugin: 404,
    E.UnknownResource: 404,
    E.UnknownCommand: 404,
    E.RouteNotFound: 404,
    E.DuplicateBackend: 409,
    E.DuplicateEmail: 409,
    E.DuplicatePlugin: 409,
    E.DuplicateCommand: 409,
    E.DataDirLocked: 409,
    E.LastAdminProtection: 409,
    E.PluginDisabled: 409,
    E.InvalidParams: 422,
    E.EmptyContent: 422,
    E.WeakPassword: 422,
    E.ConfigInvalid: 422,
    E.ManifestInvalid: 422,
    E.InvalidPreset: 422,
    E.InvalidUrl: 422,
    E.NotAssistantNode: 422,
    E.HandshakeFailed: 422,
    E.CyclicPreset: 422,
    E.UnsupportedFormat: 422,
    E.ConcurrencyLimitExceeded: 429,
    E.IntegrityError: 400,
    E.PackageFormatError: 400,
    E.UnsupportedCategory: 400,
    E.BadChatLog: 400,
    E.ConsentRequired: 400,
    E.HubNotConfigured: 400,
    E.BackendUnreachable: 502,
    E.HubUnreachable: 502,
    E.FilterAborted: 502,
    E.PipeCrashed: 502,
    E.InvocationFailed: 502,
    E.ActionFailed: 502,
    E.ResultTypeMismatch: 502,
    E.PluginFailedState: 503,
    E.FilterTimeout: 504,
    E.ToolTimeout: 504,
    E.PipeTimeout: 504,
}

ANONYMOUS_PATHS = {"/healthz", "/api/auth/signup", "/api/auth/login"}


def _envelope(code: str, message: str, field: str | None = None) -> dict[str, Any]:
    error: dict[str, Any] = {"code": code, "message": message}
    if field is not None:
        error["field"] = field
    return {"error": error}


def _status_for(exc: E.SwitchboardError) -> int:
    for klass in type(exc).__mro__:
        if klass in _STATUS_BY_CLASS:
            return _STATUS_BY_CLASS[klass]
    return 400


def _sse(obj: Any) -> str:
    return f"data: {json.dumps(obj, ensure_ascii=False)}\n\n"


_SSE_DONE = "data: [DONE]\n\n"


# -- auth dependencies ---------------------------------------------------------------

def _services(request: Request):
    return request.app.state.services


def _bearer(request: Request) -> str | None:
    header = request.headers.get("authorization") or ""
    if header.lower().startswith("bearer "):
        return header[7:].strip()
    return None


def require_user(request: Request) -> dict[str, Any]:
    return _services(request).auth.verify_token(_bearer(request))


def require_active(user: dict[str, Any] = Depends(require_user)) -> dict[str, Any]:
    if user.get("role") == "pending":
        raise E.AccountPending("account is awaiting admin approval")
    return user


def require_admin(user: dict[str, Any] = Depends(require_active)) -> dict[str, Any]:
    if user.get("role") != "admin":
        raise E.PermissionDenied("admin role required")
    return user


# -- field validators --------------------------------------------------------------

def _need_str(payload: dict[str, Any], key: str) -> str:
    value = payload.get(key)
    if not isinstance(value, str) or not value:
        raise E.InvalidParams(f"{key} must be a nonempty string", field=key)
    return value


def _opt_str(payload: dict[str, Any], key: str) -> str | None:
    value = payload.get(key)
    if value is None:
        return None
    if not isinstance(value, str):
        raise E.InvalidParams(f"{key} must be a string", field=key)
    return value


def _need_messages(payload: dict[str, Any]) -> list[dict[str, Any]]:
    raw = payload.get("messages")
    if not isinstance(raw, list) or not raw:
        raise E.InvalidParams("messages must be a nonempty list", field="messages")
    out = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict) or not isinstance(item.get("role"), str):
            raise E.InvalidParams(f"messages[{i}] must have a role",
                                  field=f"messages[{i}].role")
        content = item.get("content")
        if content is None:
            content = ""
        if not isinstance(content, str):
            raise E.InvalidParams(f"messages[{i}].content must be a string",
                                  field=f"messages[{i}].content")
        out.append({"role": item["role"], "content": content})
    return out


def _params_from_body(payload: dict[str, Any]) -> GenerationParams:
    raw = {key: payload[key]
           for key in ("temperature", "top_p", "max_tokens", "seed")
           if payload.get(key) is not None}
    return GenerationParams.from_dict(raw)


def _owned_conv(services, conv_id: str, user: dict[str, Any]):
    conv = services.chat.get_conversation(conv_id)
    if conv.owner_user_id != user["id"] and user.get("role") != "admin":
        raise E.PermissionDenied("conversation belongs to another user")
    return conv


def _completion_id() -> str:
    return f"chatcmpl-{uuid.uuid4().hex}"


def create_app(services) -> FastAPI:
    app = FastAPI(docs_url=None, redoc_url=None, openapi_url=None)
    app.state.services = services

    @app.exception_handler(E.SwitchboardError)
    async def on_domain_error(request: Request, exc: E.SwitchboardError):
        return JSONResponse(status_code=_status_for(exc),
                            content=_envelope(exc.code, exc.message, exc.field))

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        field = ".".join(str(part) for part in first.get("loc", ())[1:]) or None
        return JSONResponse(status_code=422, content=_envelope(
            "invalid_params", first.get("msg", "invalid request body"), field))

    @app.exception_handler(Exception)
    async def on_unexpected_error(request: Request, exc: Exception):
        log.exception("unhandled error for %s %s", request.method, request.url.path)
        return JSONResponse(status_code=500, content=_envelope(
            "internal_error", f"{exc.__class__.__name__}: {exc}"))

    # -- health and auth ----------------------------------------------------------

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/api/auth/signup", status_code=201)
    def signup(payload: dict = Body(default_factory=dict)):
        return services.auth.signup(
            payload.get("name", ""), payload.get("email", ""),
            payload.get("password", ""))

    @app.post("/api/auth/login")
    def login(payload: dict = Body(default_factory=dict)):
        token, user = services.auth.login(
            payload.get("email", ""), payload.get("password", ""))
        return {"token": token, "user": user}

    # -- users -----------------------------------------------------------------------

    @app.get("/api/users/me")
    def whoami(user: dict = Depends(require_user)):
        return user

    @app.get("/api/users")
    def list_users(user: dict = Depends(require_admin)):
        return {"users": services.auth.list_users()}

    @app.post("/api/users/{user_id}/approve")
    def approve_user(user_id: str, user: dict = Depends(require_admin)):
        return services.auth.approve_user(user, user_id)

    @app.post("/api/users/{user_id}/role")
    def set_role(user_id: str, payload: dict = Body(default_factory=dict),
                 user: dict = Depends(require_admin)):
        return services.auth.set_role(user, user_id, payload.get("role", ""))

    # -- model catalog ------------------------------------------------------------

    @app.get("/v1/models")
    def openai_models(user: dict = Depends(require_active)):
        data = [{
            "id": d.id,
            "object": "model",
            "created": 0,
            "owned_by": d.source,
        } for d in services.registry.list_models()]
        return {"object": "list", "data": data}

    @app.get("/api/models")
    def api_models(user: dict = Depends(require_active)):
        return {
            "models": [d.to_dict() for d in services.registry.list_models()],
            "warnings": dict(services.registry.warnings),
        }

    @app.post("/api/models/pull")
    def pull_model(payload: dict = Body(default_factory=dict),
                   user: dict = Depends(require_active)):
        backend_id = _need_str(payload, "backend_id")
        name = _need_str(payload, "name")
        services.registry.backend(backend_id)  # 404 before streaming starts
        progress = services.registry.pull_model(backend_id, name)

        def stream():
            try:
                for event in progress:
                    yield _sse(dataclasses.asdict(event))
            except E.SwitchboardError as exc:
                yield _sse({"model_name": name, "status": "error",
                            "detail": exc.message})
            yield _SSE_DONE

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.post("/api/models/delete")
    def delete_model(payload: dict = Body(default_factory=dict),
                     user: dict = Depends(require_admin)):
        services.registry.delete_model(_need_str(payload, "backend_id"),
                                       _need_str(payload, "name"))
        return {"deleted": True}

    @app.post("/api/models/upload")
    async def upload_model(request: Request, backend_id: str, name: str,
                           user: dict = Depends(require_admin)):
        body = await request.body()
        descriptor = services.registry.upload_model_blob(
            backend_id, iter([body]), name)
        return descriptor.to_dict()

    @app.get("/api/backends")
    def list_backends(user: dict = Depends(require_admin)):
        return {"backends": [b.to_dict() for b in services.registry.backends()]}

    @app.post("/api/backends", status_code=201)
    def add_backend(payload: dict = Body(default_factory=dict),
                    user: dict = Depends(require_admin)):
        replace = bool(payload.pop("replace", False))
        config = BackendConfig.from_dict(payload)
        services.registry.register_backend(config, replace=replace)
        return config.to_dict()

    # -- OpenAI-compatible completions ---------------------------------------------

    @app.post("/v1/chat/completions")
    def chat_completions(payload: dict = Body(default_factory=dict),
                         user: dict = Depends(require_active)):
        model = _need_str(payload, "model")
        messages = _need_messages(payload)
        params = _params_from_body(payload)
        stream = payload.get("stream", False)
        if not isinstance(stream, bool):
            raise E.InvalidParams("stream must be a boolean", field="stream")
        if "tools" in payload and payload["tools"] is not None \
                and not isinstance(payload["tools"], list):
            raise E.InvalidParams("tools must be a list", field="tools")
        services.registry.resolve_route(model)  # 404 before any streaming
        created = int(time.time())
        completion_id = _completion_id()

        if not stream:
            with services.chat.generation_slot():
                result = services.pipeline.generate(model, messages, params,
                                                    user=user)
            return {
                "id": completion_id,
                "object": "chat.completion",
                "created": created,
                "model": model,
                "choices": [{
                    "index": 0,
                    "message": {"role": "assistant", "content": result.content},
                    "finish_reason": "stop",
                }],
                "usage": {"prompt_tokens": 0, "completion_tokens": 0,
                          "total_tokens": 0},
            }

        services.chat.acquire_slots(1)
        events: queue.Queue = queue.Queue()

        def worker():
            try:
                services.pipeline.generate(
                    model, messages, params, user=user,
                    on_chunk=lambda text: events.put(("chunk", text)))
                events.put(("done", None))
            except E.SwitchboardError as exc:
                events.put(("error", _envelope(exc.code, exc.message, exc.field)))
            except Exception as exc:  # surfaced to the stream, never swallowed
                events.put(("error", _envelope("internal_error", str(exc))))
            finally:
                services.chat.release_slots(1)

        threading.Thread(target=worker, daemon=True).start()

        def chunk_body(delta: dict[str, Any], finish: str | None) -> dict[str, Any]:
            return {
                "id": completion_id,
                "object": "chat.completion.chunk",
                "created": created,
                "model": model,
                "choices": [{"index": 0, "delta": delta,
                             "finish_reason": finish}],
            }

        def stream_events():
            yield _sse(chunk_body({"role": "assistant"}, None))
            while True:
                kind, value = events.get()
                if kind == "chunk":
                    yield _sse(chunk_body({"content": value}, None))
                elif kind == "error":
                    yield _sse(value)
                    break
                else:
                    yield _sse(chunk_body({}, "stop"))
                    break
            yield _SSE_DONE

        return StreamingResponse(stream_events(), media_type="text/event-stream")

    # -- conversations -----------------------------------------------------------

    @app.post("/api/conversations", status_code=201)
    def create_conversation(payload: dict = Body(default_factory=dict),
                            user: dict = Depends(require_active)):
        conv = services.chat.create_conversation(
            user["id"], _opt_str(payload, "title"))
        return conv.to_dict()

    @app.get("/api/conversations")
    def list_conversations(user: dict = Depends(require_active)):
        owner = None if user.get("role") == "admin" else user["id"]
        return {"conversations": [c.to_dict()
                                  for c in services.chat.list_conversations(owner)]}

    @app.get("/api/conversations/{conv_id}")
    def get_conversation(conv_id: str, user: dict = Depends(require_active)):
        conv = _owned_conv(services, conv_id, user)
        return {
            "conversation": conv.to_dict(),
            "nodes": [n.to_dict() for n in services.chat.nodes(conv_id)],
            "preferences": [r.to_dict()
                            for r in services.chat.preferences(conv_id)],
        }

    @app.delete("/api/conversations/{conv_id}")
    def delete_conversation(conv_id: str, user: dict = Depends(require_active)):
        _owned_conv(services, conv_id, user)
        services.chat.delete_conversation(conv_id)
        return {"deleted": True}

    @app.post("/api/conversations/{conv_id}/messages", status_code=201)
    def post_message(conv_id: str, payload: dict = Body(default_factory=dict),
                     user: dict = Depends(require_active)):
        _owned_conv(services, conv_id, user)
        node = services.chat.post_user_message(
            conv_id, payload.get("content", ""), _opt_str(payload, "parent_id"))
        return node.to_dict()

    @app.post("/api/conversations/{conv_id}/fanout")
    def fanout(conv_id: str, payload: dict = Body(default_factory=dict),
               user: dict = Depends(require_active)):
        _owned_conv(services, conv_id, user)
        prompt_node_id = _need_str(payload, "prompt_node_id")
        model_ids = payload.get("model_ids")
        if not isinstance(model_ids, list) or not model_ids \
                or not all(isinstance(m, str) for m in model_ids):
            raise E.InvalidParams("model_ids must be a nonempty string list",
                                  field="model_ids")
        params = GenerationParams.from_dict(payload.get("params") or {})
        stream = bool(payload.get("stream", False))
        if not stream:
            nodes = services.chat.fan_out_generate(
                conv_id, prompt_node_id, model_ids, params, user=user)
            return {"nodes": [n.to_dict() for n in nodes]}

        events: queue.Queue = queue.Queue()

        def worker():
            try:
                nodes = services.chat.fan_out_generate(
                    conv_id, prompt_node_id, model_ids, params, user=user,
                    on_event=lambda e: events.put(("event", e)))
                events.put(("done", [n.to_dict() for n in nodes]))
            except E.SwitchboardError as exc:
                events.put(("error", _envelope(exc.code, exc.message, exc.field)))
            except Exception as exc:
                events.put(("error", _envelope("internal_error", str(exc))))

        threading.Thread(target=worker, daemon=True).start()

        def stream_events():
            while True:
                kind, value = events.get()
                if kind == "event":
                    yield _sse(value)
                elif kind == "error":
                    yield _sse(value)
                    break
                else:
                    yield _sse({"type": "done", "nodes": value})
                    break
            yield _SSE_DONE

        return StreamingResponse(stream_events(), media_type="text/event-stream")

    @app.post("/api/conversations/{conv_id}/select")
    def select_response(conv_id: str, payload: dict = Body(default_factory=dict),
                        user: dict = Depends(require_active)):
        _owned_conv(services, conv_id, user)
        record = services.chat.select_response(
            conv_id, _need_str(payload, "node_id"), user=user)
        return {
            "record": record.to_dict() if record else None,
            "conversation": services.chat.get_conversation(conv_id).to_dict(),
        }

    @app.get("/api/conversations/{conv_id}/thread")
    def active_thread(conv_id: str, user: dict = Depends(require_active)):
        _owned_conv(services, conv_id, user)
        return {"nodes": [n.to_dict() for n in services.chat.active_thread(conv_id)]}

    @app.get("/api/conversations/{conv_id}/export")
    def export_conversation(conv_id: str, user: dict = Depends(require_active)):
        return services.chat.export_chat_log(conv_id, requester=user)

    @app.post("/api/conversations/import", status_code=201)
    def import_conversation(payload: dict = Body(default_factory=dict),
                            user: dict = Depends(require_active)):
        conv = services.chat.import_chat_log(payload, user["id"])
        return conv.to_dict()

    @app.post("/api/conversations/{conv_id}/actions/{action_id}")
    def invoke_action(conv_id: str, action_id: str,
                      payload: dict = Body(default_factory=dict),
                      user: dict = Depends(require_active)):
        _owned_conv(services, conv_id, user)
        return services.engine.invoke_action(
            action_id, conv_id, _need_str(payload, "node_id"), user=user)

    # -- plugins ---------------------------------------------------------------------

    @app.get("/api/plugins")
    def list_plugins(user: dict = Depends(require_active)):
        out = []
        for record in services.engine.list_plugins():
            state = services.engine.process_state(record.manifest.id)
            out.append({
                "manifest": record.manifest.to_dict(),
                "enabled": record.enabled,
                "admin_only": record.admin_only,
                "config": record.config,
                "state": dataclasses.asdict(state),
            })
        return {"plugins": out}

    @app.post("/api/plugins", status_code=201)
    def install_plugin(payload: dict = Body(default_factory=dict),
                       user: dict = Depends(require_admin)):
        manifest = services.engine.install_plugin(payload.get("bundle") or payload)
        return manifest.to_dict()

    @app.delete("/api/plugins/{plugin_id}")
    def uninstall_plugin(plugin_id: str, user: dict = Depends(require_admin)):
        services.engine.uninstall_plugin(plugin_id)
        return {"deleted": True}

    @app.post("/api/plugins/{plugin_id}/enable")
    def enable_plugin(plugin_id: str, user: dict = Depends(require_admin)):
        services.engine.enable_plugin(plugin_id)
        return {"enabled": True}

    @app.post("/api/plugins/{plugin_id}/disable")
    def disable_plugin(plugin_id: str, user: dict = Depends(require_admin)):
        services.engine.disable_plugin(plugin_id)
        return {"enabled": False}

    @app.put("/api/plugins/{plugin_id}/config")
    def set_plugin_config(plugin_id: str,
                          payload: dict = Body(default_factory=dict),
                          user: dict = Depends(require_admin)):
        services.engine.set_config(plugin_id, payload)
        return {"config": services.engine.get_record(plugin_id).config}

    @app.get("/api/plugins/tools")
    def list_tools(user: dict = Depends(require_active)):
        return {"tools": services.engine.list_tools(user)}

    @app.get("/api/plugins/actions")
    def list_actions(user: dict = Depends(require_active)):
        return {"actions": services.engine.list_actions(user)}

    # -- presets ---------------------------------------------------------------------

    @app.get("/api/presets/prompts")
    def list_prompts(user: dict = Depends(require_active)):
        return {"prompts": [p.to_dict() for p in services.presets.list_prompts()]}

    @app.post("/api/presets/prompts", status_code=201)
    def create_prompt(payload: dict = Body(default_factory=dict),
                      user: dict = Depends(require_active)):
        preset = services.presets.register_prompt(
            _need_str(payload, "command"), payload.get("title", ""),
            _need_str(payload, "body"))
        return preset.to_dict()

    @app.delete("/api/presets/prompts/{command}")
    def delete_prompt(command: str, user: dict = Depends(require_active)):
        # commands carry a leading slash, which a path segment cannot
        if not command.startswith("/"):
            command = "/" + command
        services.presets.remove_prompt(command)
        return {"deleted": True}

    @app.post("/api/presets/prompts/resolve")
    def resolve_prompt(payload: dict = Body(default_factory=dict),
                       user: dict = Depends(require_active)):
        preset = services.presets.resolve_command(_need_str(payload, "line"))
        return preset.to_dict()

    @app.get("/api/presets/models")
    def list_model_presets(user: dict = Depends(require_active)):
        return {"presets": [p.to_dict()
                            for p in services.presets.list_model_presets()]}

    @app.post("/api/presets/models", status_code=201)
    def create_model_preset(payload: dict = Body(default_factory=dict),
                            user: dict = Depends(require_active)):
        from ..presets import ModelPreset
        descriptor = services.presets.create_model_preset(
            ModelPreset.from_dict(payload))
        return descriptor.to_dict()

    @app.delete("/api/presets/models/{preset_id}")
    def delete_model_preset(preset_id: str, user: dict = Depends(require_active)):
        services.presets.remove_model_preset(preset_id)
        return {"deleted": True}

    # -- hub -------------------------------------------------------------------------

    @app.get("/api/hub/index")
    def hub_index(category: str | None = None, q: str | None = None,
                  user: dict = Depends(require_active)):
        result = services.hub.browse(category, q)
        return {"entries": [e.to_dict() for e in result.entries],
                "stale": result.stale}

    @app.post("/api/hub/import", status_code=201)
    def hub_import(payload: dict = Body(default_factory=dict),
                   user: dict = Depends(require_admin)):
        return services.hub.import_package(_need_str(payload, "package"))

    @app.get("/api/hub/export")
    def hub_export(category: str, ref: str,
                   user: dict = Depends(require_active)):
        return {"package": services.hub.export_package(category, ref,
                                                       requester=user)}

    @app.post("/api/hub/share", status_code=201)
    def hub_share(payload: dict = Body(default_factory=dict),
                  user: dict = Depends(require_active)):
        record = services.hub.share_chat_log(
            _need_str(payload, "conversation_id"),
            bool(payload.get("consent", False)),
            payload.get("redaction_filter_ids") or (),
            requester=user)
        return record.to_dict()

    return app
