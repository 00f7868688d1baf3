/**
 * Conversation-tree helpers: lineage collapse after a fan-out selection and
 * sibling lookup for the branch switcher.
 */

import type { NodeDict } from "./api"

type NodeMap = Record<string, NodeDict>

/** Path from the root to `leafId`, in root-first order. */
export function lineage(nodes: NodeMap, leafId: string): NodeDict[] {
  const path: NodeDict[] = []
  const seen = new Set<string>()
  let cursor: string | null = leafId
  while (cursor !== null) {
    if (seen.has(cursor)) break // cycle guard; corrupt data must not hang the UI
    seen.add(cursor)
    const node: NodeDict | undefined = nodes[cursor]
    if (!node) break
    path.push(node)
    cursor = node.parent_id
  }
  path.reverse()
  return path
}

/** All children of `parentId` (or roots when null), in insertion order. */
export function childrenOf(nodes: NodeMap, order: string[], parentId: string | null): NodeDict[] {
  const out: NodeDict[] = []
  for (const id of order) {
    const node = nodes[id]
    if (node && node.parent_id === parentId) out.push(node)
  }
  return out
}

export interface BranchPosition {
  index: number
  total: number
  siblingIds: string[]
}

/** Where `nodeId` sits among its siblings, for the branch switcher. */
export function branchPosition(nodes: NodeMap, order: string[], nodeId: string): BranchPosition {
  const node = nodes[nodeId]
  if (!node) return { index: -1, total: 0, siblingIds: [] }
  const siblings = childrenOf(nodes, order, node.parent_id)
  const siblingIds = siblings.map((s) => s.id)
  return { index: siblingIds.indexOf(nodeId), total: siblingIds.length, siblingIds }
}
