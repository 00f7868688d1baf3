import { describe, expect, test } from "vitest"

import type { FanoutEvent, NodeDict } from "../src/api"
import {
  applyEvent,
  columnText,
  selectableNodeIds,
  startBoard,
} from "../src/fanout"
import { lineage } from "../src/thread"

function node(id: string, modelId: string, overrides: Partial<NodeDict> = {}): NodeDict {
  return {
    id,
    conversation_id: "c1",
    parent_id: "prompt",
    role: "assistant",
    content: "",
    attachments: [],
    model_id: modelId,
    status: "complete",
    error_detail: null,
    group_id: "g1",
    created_at: "2026-08-19T00:00:00Z",
    ...overrides,
  }
}

/** Interleave the per-model scripts round-robin, the way a live stream lands. */
function interleave(scripts: Record<string, string[]>, nodeIds: Record<string, string>): FanoutEvent[] {
  const events: FanoutEvent[] = []
  const cursors = Object.fromEntries(Object.keys(scripts).map((k) => [k, 0]))
  let moved = true
  while (moved) {
    moved = false
    for (const [modelId, chunks] of Object.entries(scripts)) {
      const at = cursors[modelId] ?? 0
      const content = chunks[at]
      if (content !== undefined) {
        events.push({ type: "chunk", node_id: nodeIds[modelId] ?? "", model_id: modelId, content })
        cursors[modelId] = at + 1
        moved = true
      }
    }
  }
  return events
}

describe("fan-out board", () => {
  const scripts: Record<string, string[]> = {
    "local/alpha": ["The ", "quick ", "brown ", "fox"],
    "local/beta": ["jumps ", "over"],
    "pipe/gamma": ["the ", "lazy ", "dog"],
  }
  const nodeIds: Record<string, string> = {
    "local/alpha": "n-a",
    "local/beta": "n-b",
    "pipe/gamma": "n-c",
  }

  test("acceptance: three interleaved streams land in three columns with no drops or reorders", () => {
    const modelIds = Object.keys(scripts)
    const board = startBoard(modelIds)
    expect(board.columns).toHaveLength(3)

    for (const event of interleave(scripts, nodeIds)) applyEvent(board, event)
    const nodes = modelIds.map((m) =>
      node(nodeIds[m] ?? "", m, { content: (scripts[m] ?? []).join("") }))
    for (const n of nodes) applyEvent(board, { type: "node_complete", node: n })
    applyEvent(board, { type: "done", nodes })

    expect(board.done).toBe(true)
    expect(board.failure).toBeNull()
    for (const [i, modelId] of modelIds.entries()) {
      const column = board.columns[i]
      expect(column?.modelId).toBe(modelId)
      expect(column?.chunks).toEqual(scripts[modelId])
      expect(column?.status).toBe("complete")
      expect(columnText(column ?? board.columns[0]!)).toBe((scripts[modelId] ?? []).join(""))
    }
  })

  test("acceptance: selecting a column collapses the view to its lineage", () => {
    const prompt = node("prompt", null as unknown as string, {
      role: "user",
      parent_id: "root",
      content: "say something",
      model_id: null,
    })
    const root = node("root", null as unknown as string, {
      role: "user",
      parent_id: null,
      content: "hello",
      model_id: null,
    })
    const winners = node("n-b", "local/beta", { content: "jumps over" })
    const rival = node("n-a", "local/alpha", { content: "The quick brown fox" })
    const nodes = Object.fromEntries([root, prompt, winners, rival].map((n) => [n.id, n]))

    const path = lineage(nodes, "n-b")
    expect(path.map((n) => n.id)).toEqual(["root", "prompt", "n-b"])
    expect(path.map((n) => n.id)).not.toContain("n-a")
  })

  test("an errored column keeps the others live and selectable", () => {
    const board = startBoard(["local/alpha", "local/beta"])
    applyEvent(board, { type: "chunk", node_id: "n-a", model_id: "local/alpha", content: "par" })
    applyEvent(board, {
      type: "node_error",
      node: node("n-b", "local/beta", { status: "error", error_detail: "backend down" }),
    })
    applyEvent(board, { type: "chunk", node_id: "n-a", model_id: "local/alpha", content: "tial" })
    applyEvent(board, { type: "node_complete", node: node("n-a", "local/alpha", { content: "partial" }) })

    const [alpha, beta] = board.columns
    expect(alpha?.status).toBe("complete")
    expect(columnText(alpha!)).toBe("partial")
    expect(beta?.status).toBe("error")
    expect(beta?.errorDetail).toBe("backend down")
    expect(selectableNodeIds(board)).toEqual(["n-a"])
  })

  test("chunks for one node stay append-only and in arrival order", () => {
    const board = startBoard(["m"])
    const contents = ["a", "b", "c", "d", "e"]
    for (const content of contents) {
      applyEvent(board, { type: "chunk", node_id: "n1", model_id: "m", content })
    }
    expect(board.columns[0]?.chunks).toEqual(contents)
  })

  test("a done event binds columns that saw no per-node events", () => {
    const board = startBoard(["m1", "m2"])
    const n1 = node("x1", "m1", { content: "one" })
    const n2 = node("x2", "m2", { status: "error", error_detail: "boom" })
    applyEvent(board, { type: "done", nodes: [n1, n2] })
    expect(board.done).toBe(true)
    expect(board.columns[0]?.status).toBe("complete")
    expect(board.columns[1]?.status).toBe("error")
    expect(board.columns[1]?.errorDetail).toBe("boom")
  })

  test("an error envelope mid-stream fails the whole board", () => {
    const board = startBoard(["m1"])
    applyEvent(board, { error: { code: "route_not_found", message: "no such model" } })
    expect(board.done).toBe(true)
    expect(board.failure).toBe("no such model")
  })

  test("duplicate model ids get distinct columns bound by node id", () => {
    const board = startBoard(["m", "m"])
    applyEvent(board, { type: "chunk", node_id: "n1", model_id: "m", content: "first" })
    applyEvent(board, { type: "chunk", node_id: "n2", model_id: "m", content: "second" })
    applyEvent(board, { type: "chunk", node_id: "n1", model_id: "m", content: "+more" })
    expect(board.columns[0]?.chunks).toEqual(["first", "+more"])
    expect(board.columns[1]?.chunks).toEqual(["second"])
  })
})
