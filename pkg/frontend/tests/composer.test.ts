import { describe, expect, test } from "vitest"

import {
  applyEdit,
  emptyComposer,
  insertPreset,
  parseTemplate,
  remainingVariables,
  tabNext,
  typeIntoFocus,
  type ComposerState,
} from "../src/composer"

function selectedText(state: ComposerState): string {
  return state.draft.slice(state.selection.start, state.selection.end)
}

describe("parseTemplate", () => {
  test("finds variables with exact spans in document order", () => {
    const spans = parseTemplate("Translate [text] into [language].")
    expect(spans.map((s) => [s.name, s.start, s.end])).toEqual([
      ["text", 10, 16],
      ["language", 22, 32],
    ])
    expect(spans.map((s) => s.order)).toEqual([0, 1])
  })

  test("spans reconstruct the source", () => {
    const body = "a [x] b [ment-ion] c"
    for (const span of parseTemplate(body)) {
      expect(body.slice(span.start, span.end)).toBe(`[${span.name}]`)
    }
  })

  const edgeCases: Array<[string, string[]]> = [
    ["no variables here", []],
    ["[]", []],
    ["[unclosed", []],
    ["unopened]", []],
    ["[a\nb]", []],
    ["[[inner]", ["inner"]],
    ["[a][b]", ["a", "b"]],
    ["[a[b]", ["b"]],
    ["[a]]", ["a"]],
    ["x[ spaced name ]y", [" spaced name "]],
    ["[dup] and [dup]", ["dup", "dup"]],
  ]
  test.each(edgeCases)("edge case %j", (body, names) => {
    expect(parseTemplate(body).map((s) => s.name)).toEqual(names)
  })
})

describe("preset insertion and tab traversal", () => {
  test("acceptance: inserting a preset selects the first variable", () => {
    const state = insertPreset(emptyComposer(), "Explain [topic] to [audience]")
    expect(state.draft).toBe("Explain [topic] to [audience]")
    expect(state.focused).toBe(0)
    expect(selectedText(state)).toBe("[topic]")
  })

  test("acceptance: Tab advances through variables in document order, then to the end", () => {
    let state = insertPreset(emptyComposer(), "Explain [topic] to [audience]")
    state = tabNext(state)
    expect(selectedText(state)).toBe("[audience]")
    state = tabNext(state)
    expect(state.focused).toBe(-1)
    expect(state.selection).toEqual({
      start: state.draft.length,
      end: state.draft.length,
    })
  })

  const fixtures = [
    "Translate [text] into [language].",
    "[a][b]",
    "[dup] and [dup]",
    "lead [one] mid [two] tail [three] end",
    "[[inner] then [outer]",
    "x[ spaced name ]y plus [tight]",
  ]
  test.each(fixtures)("traversal covers every variable in order for %j", (body) => {
    let state = insertPreset(emptyComposer(), body)
    const expected = parseTemplate(body)
    const visited: string[] = []
    while (state.focused >= 0) {
      const span = state.spans[state.focused]
      expect(span).toBeDefined()
      expect(selectedText(state)).toBe(`[${span?.name ?? ""}]`)
      visited.push(span?.name ?? "")
      state = tabNext(state)
    }
    expect(visited).toEqual(expected.map((s) => s.name))
    expect(state.selection.start).toBe(state.draft.length)
  })

  test("preset without variables parks the caret at the end", () => {
    const state = insertPreset(emptyComposer(), "just words")
    expect(state.focused).toBe(-1)
    expect(state.selection).toEqual({ start: 10, end: 10 })
  })

  test("Tab from an unfocused caret resumes at the next variable after it", () => {
    let state = insertPreset(emptyComposer(), "[a] mid [b]")
    state = { ...state, focused: -1, selection: { start: 5, end: 5 } }
    state = tabNext(state)
    expect(selectedText(state)).toBe("[b]")
  })
})

describe("typing over variables", () => {
  test("typing replaces the selected span and keeps later spans aligned", () => {
    let state = insertPreset(emptyComposer(), "Explain [topic] to [audience]")
    state = typeIntoFocus(state, "monads")
    expect(state.draft).toBe("Explain monads to [audience]")
    expect(remainingVariables(state)).toEqual(["audience"])
    state = tabNext(state)
    expect(selectedText(state)).toBe("[audience]")
    state = typeIntoFocus(state, "cats")
    expect(state.draft).toBe("Explain monads to cats")
    expect(state.spans).toEqual([])
  })

  test("filling spans out of document order still keeps offsets true", () => {
    let state = insertPreset(emptyComposer(), "[a] and [b] and [c]")
    state = tabNext(state) // focus b
    state = typeIntoFocus(state, "BEE")
    expect(state.draft).toBe("[a] and BEE and [c]")
    const names = state.spans.map((s) => s.name)
    expect(names).toEqual(["a", "c"])
    for (const span of state.spans) {
      expect(state.draft.slice(span.start, span.end)).toBe(`[${span.name}]`)
    }
  })

  test("an edit before the spans shifts them without consuming any", () => {
    let state = insertPreset(emptyComposer(), "go [x] stop [y]")
    state = applyEdit(state, 0, 0, ">> ")
    expect(state.draft).toBe(">> go [x] stop [y]")
    for (const span of state.spans) {
      expect(state.draft.slice(span.start, span.end)).toBe(`[${span.name}]`)
    }
    // the focused first variable rides the shift and stays selected
    expect(selectedText(state)).toBe("[x]")
    state = tabNext(state)
    expect(selectedText(state)).toBe("[y]")
  })

  test("an edit overlapping a span consumes it", () => {
    let state = insertPreset(emptyComposer(), "go [x] stop [y]")
    const x = state.spans[0]
    expect(x).toBeDefined()
    state = applyEdit(state, (x?.start ?? 0) + 1, (x?.end ?? 0) - 1, "zz")
    expect(state.spans.map((s) => s.name)).toEqual(["y"])
    const y = state.spans[0]
    expect(state.draft.slice(y?.start ?? 0, y?.end ?? 0)).toBe("[y]")
  })

  test("focused span survives unrelated edits elsewhere", () => {
    let state = insertPreset(emptyComposer(), "[a] tail [b]")
    state = tabNext(state) // focus b
    state = applyEdit(state, 0, 3, "AAAA") // replace "[a]" with text
    expect(state.draft).toBe("AAAA tail [b]")
    expect(selectedText(state)).toBe("[b]")
  })
})
