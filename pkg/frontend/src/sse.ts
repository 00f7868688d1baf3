/**
 * Incremental parser for text/event-stream bodies.
 *
 * The server frames every event as `data: <payload>\n\n` and closes each
 * stream with `data: [DONE]\n\n`. Transport chunks can split frames at any
 * byte, so the parser buffers across push() calls and only emits payloads
 * whose terminating blank line has arrived.
 */

export const DONE = "[DONE]"

export class SSEParser {
  private buffer = ""

  /** Feed one transport chunk; returns the payloads it completed, in order. */
  push(chunk: string): string[] {
    this.buffer += chunk
    const out: string[] = []
    let sep = this.buffer.indexOf("\n\n")
    while (sep !== -1) {
      const frame = this.buffer.slice(0, sep)
      this.buffer = this.buffer.slice(sep + 2)
      const data = frame
        .split("\n")
        .filter((line) => line.startsWith("data: "))
        .map((line) => line.slice("data: ".length))
      if (data.length > 0) out.push(data.join("\n"))
      sep = this.buffer.indexOf("\n\n")
    }
    return out
  }
}

/** Drain a chunk source into payloads, stopping cleanly at [DONE]. */
export async function* ssePayloads(
  source: AsyncIterable<string>,
): AsyncGenerator<string> {
  const parser = new SSEParser()
  for await (const chunk of source) {
    for (const payload of parser.push(chunk)) {
      if (payload === DONE) return
      yield payload
    }
  }
}
