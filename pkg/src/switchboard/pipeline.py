"""Composes one generation: route, presets, filters, tools or pipe, outlet.

The effective request is built the same way for every route so a preset with
no overrides produces exactly the request its base model would get. Streaming
chunks are relayed live only when no filters are enabled; otherwise the
final text is filtered first and delivered as a single chunk, since outlet
filters see the complete response.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

from .backends import ChatTurn
from .errors import InvalidParams
from .params import EMPTY_PARAMS, GenerationParams
from .plugins.engine import user_payload

PARAM_KEYS = ("temperature", "top_p", "max_tokens", "seed", "system_prompt")


@dataclass
class GenerationResult:
    content: str
    model_id: str
    trace: list[dict[str, Any]] = field(default_factory=list)
    truncated: bool = False


def _params_from_payload(raw: Any) -> GenerationParams:
    """Rebuild params from a filter-returned payload, ignoring foreign keys."""
    if not isinstance(raw, dict):
        raise InvalidParams("filter produced a non-object params field",
                            field="params")
    return GenerationParams.from_dict({k: raw[k] for k in PARAM_KEYS if k in raw})


class GenerationPipeline:
    def __init__(self, registry, engine=None, max_tool_rounds: int = 5):
        self._registry = registry
        self._engine = engine
        self._max_tool_rounds = max_tool_rounds

    def effective_request(self, model_id: str, context: list[dict[str, Any]],
                          params: GenerationParams) -> tuple[Any, list[dict[str, Any]], GenerationParams]:
        """Resolve the route and fold preset overlays into one request.

        Precedence: caller params beat outer presets beat inner presets.
        Preset system prompts are prepended outermost first, then the
        caller's own system prompt, then the thread messages.
        """
        target = self._registry.resolve_route(model_id)
        merged = EMPTY_PARAMS
        for overlay in reversed(target.overlays):
            merged = overlay.params.overlay_on(merged)
        merged = params.overlay_on(merged)

        system_messages = [
            {"role": "system", "content": overlay.system_prompt}
            for overlay in target.overlays if overlay.system_prompt
        ]
        if merged.system_prompt:
            system_messages.append({"role": "system",
                                    "content": merged.system_prompt})
        messages = system_messages + [dict(m) for m in context]
        return target, messages, merged

    def generate(self, model_id: str, context: list[dict[str, Any]],
                 params: GenerationParams, user: Any = None,
                 on_chunk: Callable[[str], None] | None = None) -> GenerationResult:
        target, messages, merged = self.effective_request(model_id, context, params)
        engine = self._engine
        buffered = engine is not None and engine.has_enabled_filters()
        live_chunk = None if buffered else on_chunk

        if engine is not None:
            inlet = engine.invoke_filter_chain("inlet", {
                "messages": messages,
                "params": merged.to_dict(),
                "user": user_payload(user),
                "model_id": model_id,
                "extra": {},
            })
            messages = inlet["messages"]
            merged = _params_from_payload(inlet.get("params", {}))

        trace: list[dict[str, Any]] = []
        truncated = False
        if target.kind == "pipe":
            content = engine.run_pipe(
                target.pipe_id,
                {"messages": messages, "params": merged.to_dict()},
                user=user, on_chunk=live_chunk)
        else:
            specs = engine.list_tools(user, model_id) if engine is not None else []
            if specs:
                def chat_fn(msgs, _params, tool_specs, cb):
                    return self._registry.backend_chat(
                        target, msgs, merged, tools=tool_specs, on_chunk=cb)
                loop = engine.run_tool_loop(
                    chat_fn, messages, merged, specs, user=user,
                    model_id=model_id, max_rounds=self._max_tool_rounds,
                    on_chunk=live_chunk)
                content, trace, truncated = loop.content, loop.trace, loop.truncated
            else:
                turn: ChatTurn = self._registry.backend_chat(
                    target, messages, merged, tools=None, on_chunk=live_chunk)
                content = turn.content

        if engine is not None:
            outlet = engine.invoke_filter_chain("outlet", {
                "messages": messages + [{"role": "assistant", "content": content}],
                "params": merged.to_dict(),
                "user": user_payload(user),
                "model_id": model_id,
                "extra": {},
            })
            content = outlet["messages"][-1]["content"]

        if buffered and on_chunk is not None and content:
            on_chunk(content)
        return GenerationResult(content=content, model_id=model_id,
                                trace=trace, truncated=truncated)
