/**
 * Draft state for the message composer, including slash-command preset
 * insertion and bracket-variable tab navigation.
 *
 * A variable is `[name]` where name is nonempty and contains no bracket or
 * newline; anything else is literal text. Inserting a preset selects the
 * first variable; Tab advances the selection through the variables in
 * document order and parks the caret at the end of the draft once the last
 * one is passed. Typing replaces the selected span, and spans are kept
 * aligned through edits elsewhere in the draft.
 */

export interface VariableSpan {
  name: string
  start: number
  end: number // exclusive; draft.slice(start, end) === "[" + name + "]"
  order: number
}

export interface Selection {
  start: number
  end: number
}

export interface ComposerState {
  draft: string
  /** Variable spans not yet typed over, in document order. */
  spans: VariableSpan[]
  /** Index into spans of the currently selected variable, or -1. */
  focused: number
  selection: Selection
}

const VARIABLE_RE = /\[([^\[\]\n]+)\]/g

export function parseTemplate(body: string): VariableSpan[] {
  const spans: VariableSpan[] = []
  VARIABLE_RE.lastIndex = 0
  let match = VARIABLE_RE.exec(body)
  while (match !== null) {
    spans.push({
      name: match[1] ?? "",
      start: match.index,
      end: match.index + match[0].length,
      order: spans.length,
    })
    match = VARIABLE_RE.exec(body)
  }
  return spans
}

export function emptyComposer(): ComposerState {
  return { draft: "", spans: [], focused: -1, selection: { start: 0, end: 0 } }
}

/** Place a preset body in the draft with the first variable selected. */
export function insertPreset(state: ComposerState, body: string): ComposerState {
  const spans = parseTemplate(body)
  const first = spans[0]
  if (!first) {
    return {
      draft: body,
      spans,
      focused: -1,
      selection: { start: body.length, end: body.length },
    }
  }
  return {
    draft: body,
    spans,
    focused: 0,
    selection: { start: first.start, end: first.end },
  }
}

/** Advance the selection to the next variable; past the last, caret to end. */
export function tabNext(state: ComposerState): ComposerState {
  let nextIndex = -1
  if (state.focused >= 0) {
    if (state.focused + 1 < state.spans.length) nextIndex = state.focused + 1
  } else {
    // resume traversal at the first remaining variable after the caret
    nextIndex = state.spans.findIndex((s) => s.start >= state.selection.end)
  }
  const span = nextIndex >= 0 ? state.spans[nextIndex] : undefined
  if (!span) {
    const end = state.draft.length
    return { ...state, focused: -1, selection: { start: end, end } }
  }
  return {
    ...state,
    focused: nextIndex,
    selection: { start: span.start, end: span.end },
  }
}

/**
 * Apply one text edit, replacing draft[from, to) with `insert`.
 *
 * Spans entirely before the edit are untouched, spans after it shift by the
 * length delta, and any span the edit overlaps is consumed. If the focused
 * span survives, it stays selected; otherwise the caret lands after the
 * inserted text.
 */
export function applyEdit(
  state: ComposerState,
  from: number,
  to: number,
  insert: string,
): ComposerState {
  const draft = state.draft.slice(0, from) + insert + state.draft.slice(to)
  const delta = insert.length - (to - from)
  const focusedBefore = state.focused >= 0 ? state.spans[state.focused] : undefined

  const spans: VariableSpan[] = []
  let focusedAfter: VariableSpan | undefined
  for (const span of state.spans) {
    let kept: VariableSpan | undefined
    if (span.end <= from) {
      kept = span
    } else if (span.start >= to) {
      kept = { ...span, start: span.start + delta, end: span.end + delta }
    }
    if (kept) {
      spans.push(kept)
      if (span === focusedBefore) focusedAfter = kept
    }
  }

  if (focusedAfter) {
    return {
      draft,
      spans,
      focused: spans.indexOf(focusedAfter),
      selection: { start: focusedAfter.start, end: focusedAfter.end },
    }
  }
  const caret = from + insert.length
  return { draft, spans, focused: -1, selection: { start: caret, end: caret } }
}

/** Replace the currently selected variable span with typed text. */
export function typeIntoFocus(state: ComposerState, text: string): ComposerState {
  const span = state.focused >= 0 ? state.spans[state.focused] : undefined
  if (!span) {
    return applyEdit(state, state.selection.start, state.selection.end, text)
  }
  return applyEdit(state, span.start, span.end, text)
}

/** Names of the variables still awaiting a value, in document order. */
export function remainingVariables(state: ComposerState): string[] {
  return state.spans.map((s) => s.name)
}
