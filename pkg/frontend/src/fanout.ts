/**
 * Client-side state for a fan-out stream: one column per requested model,
 * chunks appended in arrival order, and per-column completion or error.
 */

import type { FanoutEvent, NodeDict } from "./api"

export type ColumnStatus = "streaming" | "complete" | "error"

export interface ColumnState {
  modelId: string
  nodeId: string | null
  chunks: string[]
  status: ColumnStatus
  errorDetail: string | null
  node: NodeDict | null
}

export interface FanoutBoard {
  columns: ColumnState[]
  done: boolean
  /** Whole-request failure (error envelope on the stream), if any. */
  failure: string | null
}

export function startBoard(modelIds: string[]): FanoutBoard {
  return {
    columns: modelIds.map((modelId) => ({
      modelId,
      nodeId: null,
      chunks: [],
      status: "streaming",
      errorDetail: null,
      node: null,
    })),
    done: false,
    failure: null,
  }
}

function findColumn(board: FanoutBoard, nodeId: string, modelId: string | null): ColumnState | undefined {
  const bound = board.columns.find((c) => c.nodeId === nodeId)
  if (bound) return bound
  if (modelId !== null) {
    const unbound = board.columns.find((c) => c.nodeId === null && c.modelId === modelId)
    if (unbound) {
      unbound.nodeId = nodeId
      return unbound
    }
  }
  return board.columns.find((c) => c.nodeId === null)
}

/** Fold one stream event into the board. Mutates and returns the board. */
export function applyEvent(board: FanoutBoard, event: FanoutEvent): FanoutBoard {
  if ("error" in event) {
    board.failure = event.error.message
    board.done = true
    return board
  }
  switch (event.type) {
    case "chunk": {
      const column = findColumn(board, event.node_id, event.model_id)
      if (column) column.chunks.push(event.content)
      break
    }
    case "node_complete": {
      const column = findColumn(board, event.node.id, event.node.model_id)
      if (column) {
        column.status = "complete"
        column.node = event.node
      }
      break
    }
    case "node_error": {
      const column = findColumn(board, event.node.id, event.node.model_id)
      if (column) {
        column.status = "error"
        column.node = event.node
        column.errorDetail = event.node.error_detail ?? event.node.content
      }
      break
    }
    case "done": {
      // bind any columns the per-node events missed, then settle status
      for (const node of event.nodes) {
        const column = findColumn(board, node.id, node.model_id)
        if (column && column.node === null) {
          column.node = node
          column.status = node.status === "error" ? "error" : "complete"
          if (node.status === "error") {
            column.errorDetail = node.error_detail ?? node.content
          }
        }
      }
      board.done = true
      break
    }
  }
  return board
}

export function columnText(column: ColumnState): string {
  return column.chunks.join("")
}

/** Ids of sibling nodes still selectable after one column errors. */
export function selectableNodeIds(board: FanoutBoard): string[] {
  return board.columns
    .filter((c) => c.status === "complete" && c.nodeId !== null)
    .map((c) => c.nodeId as string)
}
