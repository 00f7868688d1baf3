import { describe, expect, test } from "vitest"

import type { NodeDict } from "../src/api"
import { branchPosition, childrenOf, lineage } from "../src/thread"

function node(id: string, parentId: string | null, role: NodeDict["role"] = "assistant"): NodeDict {
  return {
    id,
    conversation_id: "c1",
    parent_id: parentId,
    role,
    content: id,
    attachments: [],
    model_id: role === "assistant" ? "m" : null,
    status: "complete",
    error_detail: null,
    group_id: null,
    created_at: "2026-08-19T00:00:00Z",
  }
}

const order = ["root", "a1", "a2", "a3", "follow"]
const nodes = Object.fromEntries(
  [
    node("root", null, "user"),
    node("a1", "root"),
    node("a2", "root"),
    node("a3", "root"),
    node("follow", "a2", "user"),
  ].map((n) => [n.id, n]),
)

describe("lineage", () => {
  test("walks root to leaf", () => {
    expect(lineage(nodes, "follow").map((n) => n.id)).toEqual(["root", "a2", "follow"])
  })

  test("excludes unrelated siblings", () => {
    const ids = lineage(nodes, "follow").map((n) => n.id)
    expect(ids).not.toContain("a1")
    expect(ids).not.toContain("a3")
  })

  test("unknown leaf yields an empty path", () => {
    expect(lineage(nodes, "ghost")).toEqual([])
  })

  test("a parent cycle terminates instead of hanging", () => {
    const looped = {
      x: node("x", "y"),
      y: node("y", "x"),
    }
    const path = lineage(looped, "x")
    expect(path.map((n) => n.id)).toEqual(["y", "x"])
  })
})

describe("branch switcher", () => {
  test("children are returned in conversation order", () => {
    expect(childrenOf(nodes, order, "root").map((n) => n.id)).toEqual(["a1", "a2", "a3"])
  })

  test("position reports index, total, and all sibling ids", () => {
    const pos = branchPosition(nodes, order, "a2")
    expect(pos).toEqual({ index: 1, total: 3, siblingIds: ["a1", "a2", "a3"] })
  })

  test("an only child is 0 of 1", () => {
    const pos = branchPosition(nodes, order, "follow")
    expect(pos.index).toBe(0)
    expect(pos.total).toBe(1)
  })

  test("unknown node is empty", () => {
    expect(branchPosition(nodes, order, "nope")).toEqual({ index: -1, total: 0, siblingIds: [] })
  })
})
