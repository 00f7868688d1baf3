#!/usr/bin/env python3
"""Pipe that echoes the most recent user message back as a stream.

The smallest useful pipe: no model, no network, chunked output. Long
messages are split into fixed-size chunks so the host's streaming path is
exercised end to end; the joined chunks are byte-identical to the input.
"""
import json
import sys

CHUNK_SIZE = 4096

MANIFEST = {
    "id": "echo-pipe",
    "kind": "pipe",
    "name": "Echo",
    "version": "1.0.0",
    "description": "Echoes the last user message back, streamed in chunks.",
    "author": "reference plugin pack",
}


def run(payload, emit_chunk):
    text = None
    for message in reversed(payload.get("messages") or []):
        if message.get("role") == "user":
            text = message.get("content", "")
            break
    if text is None:
        raise ValueError("no user message")
    for start in range(0, len(text), CHUNK_SIZE):
        emit_chunk(text[start:start + CHUNK_SIZE])
    return ""


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
                value = run(request.get("payload") or {},
                            lambda content: reply({"op": "chunk",
                                                   "call_id": call_id,
                                                   "content": content}))
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
