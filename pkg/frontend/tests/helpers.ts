import type { FetchLike } from "../src/api"

export interface RecordedCall {
  url: string
  method: string
  headers: Record<string, string>
  body: unknown
}

export interface Recorder {
  fetchFn: FetchLike
  calls: RecordedCall[]
}

type Scripted = Response | ((call: RecordedCall) => Response)

/** Fetch stand-in that records every call and replays scripted responses. */
export function makeRecorder(...responses: Scripted[]): Recorder {
  const calls: RecordedCall[] = []
  const queue = [...responses]
  const fetchFn: FetchLike = async (url, init) => {
    const call: RecordedCall = {
      url,
      method: init?.method ?? "GET",
      headers: { ...((init?.headers as Record<string, string>) ?? {}) },
      body: typeof init?.body === "string" ? JSON.parse(init.body) : init?.body,
    }
    calls.push(call)
    const next = queue.shift()
    if (!next) throw new Error(`no scripted response for ${call.method} ${url}`)
    return typeof next === "function" ? next(call) : next
  }
  return { fetchFn, calls }
}

export function jsonResponse(doc: unknown, status = 200): Response {
  return new Response(JSON.stringify(doc), {
    status,
    headers: { "content-type": "application/json" },
  })
}

export function sseResponse(payloads: unknown[]): Response {
  const frames = payloads
    .map((p) => `data: ${typeof p === "string" ? p : JSON.stringify(p)}\n\n`)
    .join("")
  return new Response(frames + "data: [DONE]\n\n", {
    status: 200,
    headers: { "content-type": "text/event-stream" },
  })
}
