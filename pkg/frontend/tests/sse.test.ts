import { describe, expect, test } from "vitest"

import { DONE, SSEParser, ssePayloads } from "../src/sse"

async function* chunked(...parts: string[]): AsyncGenerator<string> {
  for (const part of parts) yield part
}

async function collect(source: AsyncIterable<string>): Promise<string[]> {
  const out: string[] = []
  for await (const item of source) out.push(item)
  return out
}

describe("SSEParser", () => {
  test("parses complete frames", () => {
    const parser = new SSEParser()
    expect(parser.push('data: {"a":1}\n\ndata: {"b":2}\n\n')).toEqual([
      '{"a":1}',
      '{"b":2}',
    ])
  })

  test("buffers partial frames across pushes", () => {
    const parser = new SSEParser()
    expect(parser.push("da")).toEqual([])
    expect(parser.push('ta: {"a"')).toEqual([])
    expect(parser.push(':1}\n')).toEqual([])
    expect(parser.push("\n")).toEqual(['{"a":1}'])
  })

  test("joins multi-line data fields with newlines", () => {
    const parser = new SSEParser()
    expect(parser.push("data: one\ndata: two\n\n")).toEqual(["one\ntwo"])
  })

  test("ignores frames without data lines", () => {
    const parser = new SSEParser()
    expect(parser.push(": keepalive\n\ndata: x\n\n")).toEqual(["x"])
  })
})

describe("ssePayloads", () => {
  test("stops at the DONE sentinel", async () => {
    const frames = chunked(
      'data: {"n":1}\n\n',
      `data: ${DONE}\n\n`,
      'data: {"n":2}\n\n',
    )
    expect(await collect(ssePayloads(frames))).toEqual(['{"n":1}'])
  })

  test("reassembles payloads split at arbitrary byte boundaries", async () => {
    const wire = 'data: {"x":"ab"}\n\ndata: {"y":"cd"}\n\ndata: [DONE]\n\n'
    for (const size of [1, 2, 3, 7]) {
      const parts: string[] = []
      for (let i = 0; i < wire.length; i += size) parts.push(wire.slice(i, i + size))
      expect(await collect(ssePayloads(chunked(...parts)))).toEqual([
        '{"x":"ab"}',
        '{"y":"cd"}',
      ])
    }
  })
})
