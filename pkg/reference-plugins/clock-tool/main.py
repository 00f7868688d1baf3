#!/usr/bin/env python3
"""Tool that reports the current UTC date and time.

A minimal tool plugin: one callable, no parameters, a deterministic result
shape. Useful as a starting point for tools that surface live facts the
model cannot know.
"""
import json
import sys
from datetime import datetime, timezone

MANIFEST = {
    "id": "clock-tool",
    "kind": "tool",
    "name": "Clock",
    "version": "1.0.0",
    "description": "Reports the current UTC date and time.",
    "author": "reference plugin pack",
    "tool_specs": [{
        "callable_name": "current_time",
        "description": "Report the current UTC date and time in ISO 8601 form.",
        "parameters": [],
    }],
}


def run(callable_name, arguments):
    if callable_name != "current_time":
        raise ValueError("unknown callable %r" % (callable_name,))
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


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
            payload = request.get("payload") or {}
            try:
                value = run(request.get("callable"),
                            payload.get("arguments") or {})
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
