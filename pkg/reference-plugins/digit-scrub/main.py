#!/usr/bin/env python3
"""Filter that masks every digit in message content with '#'.

A privacy-flavored filter: phone numbers, account numbers, and any other
digit runs are replaced one '#' per digit before the payload moves on. All
roles are scrubbed, system prompts included, and the transform is pure so
repeated invocations agree.
"""
import json
import re
import sys

DIGIT = re.compile(r"\d")

MANIFEST = {
    "id": "digit-scrub",
    "kind": "filter",
    "name": "Digit scrub",
    "version": "1.0.0",
    "description": "Replaces every digit in every message with '#'.",
    "author": "reference plugin pack",
    "priority": 20,
    "failure_mode": "open",
}


def run(payload):
    scrubbed = []
    for message in payload.get("messages") or []:
        out = dict(message)
        if isinstance(out.get("content"), str):
            out["content"] = DIGIT.sub("#", out["content"])
        scrubbed.append(out)
    result = dict(payload)
    result["messages"] = scrubbed
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
