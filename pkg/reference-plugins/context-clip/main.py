#!/usr/bin/env python3
"""Filter that bounds the context to the most recent non-system messages.

Keeps at most ``max_messages`` non-system messages, always the most recent
ones, while every system message survives regardless of age. Relative order
is preserved. Histories already within the bound pass through unchanged, so
the filter is idempotent.
"""
import json
import sys

MANIFEST = {
    "id": "context-clip",
    "kind": "filter",
    "name": "Context clip",
    "version": "1.0.0",
    "description": "Keeps only the newest non-system messages; system messages always survive.",
    "author": "reference plugin pack",
    "priority": 10,
    "failure_mode": "open",
    "config_schema": [
        {"key": "max_messages", "type": "int", "default": 8,
         "description": "How many non-system messages to keep, newest first."},
    ],
}


def run(payload):
    config = payload.get("config") or {}
    limit = config.get("max_messages", 8)
    if not isinstance(limit, int) or isinstance(limit, bool) or limit < 1:
        raise ValueError("max_messages must be an integer >= 1")
    kept = []
    budget = limit
    for message in reversed(payload.get("messages") or []):
        if message.get("role") == "system":
            kept.append(dict(message))
        elif budget > 0:
            kept.append(dict(message))
            budget -= 1
    kept.reverse()
    result = dict(payload)
    result["messages"] = kept
    return result


def reply(doc):
    sys.stdout.write(json.dumps(doc) + "\n")
    sys.stdout.flush()


def serve():
    for line in sys.stdin:
        if not line.strip():
            continue
        try:
            request = json.loads(line)
        except ValueError:
            continue
        call_id = request.get("call_id")
        op = request.get("op")
        if op == "describe":
            reply({"op": "manifest", "call_id": call_id, "manifest": MANIFEST})
        elif op == "invoke":
            try:
                value = run(request.get("payload") or {})
            except Exception as exc:
                reply({"op": "error", "call_id": call_id,
                       "message": str(exc) or type(exc).__name__})
            else:
                reply({"op": "result", "call_id": call_id, "value": value})
        else:
            reply({"op": "error", "call_id": call_id,
                   "message": "unsupported op %r" % (op,)})


if __name__ == "__main__":
    serve()
