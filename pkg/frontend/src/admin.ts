/**
 * Admin-screen view models: pull progress reduction, role gating, pending
 * signup queue, and inline error rendering.
 */

import type { ErrorBody, PublicUser, PullEvent } from "./api"

export interface PullView {
  modelName: string
  status: string
  /** 0..100, or null while the total is unknown. */
  percent: number | null
  detail: string
}

export function reducePull(event: PullEvent): PullView {
  let percent: number | null = null
  const total = event.total_bytes ?? null
  if (event.status === "done") {
    percent = 100
  } else if (total !== null && total > 0) {
    percent = Math.floor(((event.completed_bytes ?? 0) * 100) / total)
    if (percent > 100) percent = 100
  }
  return {
    modelName: event.model_name,
    status: event.status,
    percent,
    detail: event.detail ?? "",
  }
}

export function isAdmin(user: PublicUser | null): boolean {
  return user !== null && user.role === "admin"
}

/** Message for an inline error banner, from an error envelope. */
export function describeError(body: ErrorBody): string {
  const error = body.error
  if (error.field) return `${error.message} (${error.field})`
  return error.message
}

export function pendingUsers(users: PublicUser[]): PublicUser[] {
  return users.filter((u) => u.role === "pending")
}
