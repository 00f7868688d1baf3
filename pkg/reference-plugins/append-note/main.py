#!/usr/bin/env python3
"""Action that appends a short annotation node beneath a message.

Shows the action contract end to end: the host hands over the selected
node, the plugin answers with an append result, and the host grows the
conversation tree by one child node. The annotation quotes the start of the
message so the note stays meaningful after the thread moves on.
"""
import json
import sys

EXCERPT_LIMIT = 80

MANIFEST = {
    "id": "append-note",
    "kind": "action",
    "name": "Append note",
    "version": "1.0.0",
    "description": "Appends an annotation node quoting the selected message.",
    "author": "reference plugin pack",
    "result_kind": "append",
    "action_button": {"label": "Add note", "icon_ref": None},
    "config_schema": [
        {"key": "note_prefix", "type": "string", "default": "Note",
         "description": "Text the annotation starts with."},
    ],
}


def run(payload):
    node = payload.get("node") or {}
    config = payload.get("config") or {}
    prefix = config.get("note_prefix") or "Note"
    excerpt = (node.get("content") or "").strip()
    if len(excerpt) > EXCERPT_LIMIT:
        excerpt = excerpt[:EXCERPT_LIMIT - 3] + "..."
    role = node.get("role") or "message"
    text = "%s: marked this %s message" % (prefix, role)
    if excerpt:
        text = '%s: marked this %s message: "%s"' % (prefix, role, excerpt)
    return {"type": "append", "content": text, "role": "assistant"}


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
