/**
 * Model-selector items: searchable list of everything routable, each entry
 * badged by where it comes from, plus a pull affordance when the search term
 * matches nothing installed.
 */

import type { ModelDescriptor } from "./api"

export type SourceBadge = "local" | "remote" | "pipe" | "preset"

const BADGES: Record<string, SourceBadge> = {
  "local-runner": "local",
  "remote-endpoint": "remote",
  "pipe-plugin": "pipe",
  "model-preset": "preset",
}

export interface SelectorItem {
  id: string
  displayName: string
  badge: SourceBadge
  /** True for the synthetic "pull this from the runner" row. */
  pullable: boolean
}

export function badgeFor(source: string): SourceBadge {
  return BADGES[source] ?? "local"
}

/**
 * Filter installed models by a case-insensitive substring of the id or
 * display name. A nonempty term that matches no installed id exactly gets a
 * trailing pullable row so the user can fetch it by name.
 */
export function buildSelectorItems(models: ModelDescriptor[], term: string): SelectorItem[] {
  const needle = term.trim().toLowerCase()
  const items: SelectorItem[] = []
  for (const model of models) {
    const haystack = `${model.id}\n${model.display_name}`.toLowerCase()
    if (needle === "" || haystack.includes(needle)) {
      items.push({
        id: model.id,
        displayName: model.display_name,
        badge: badgeFor(model.source),
        pullable: false,
      })
    }
  }
  if (needle !== "") {
    const installed = models.some(
      (m) =>
        m.id.toLowerCase() === needle ||
        m.native_name.toLowerCase() === needle ||
        m.display_name.toLowerCase() === needle,
    )
    if (!installed) {
      items.push({ id: term.trim(), displayName: `Pull "${term.trim()}"`, badge: "local", pullable: true })
    }
  }
  return items
}
