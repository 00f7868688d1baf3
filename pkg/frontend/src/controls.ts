/**
 * Per-chat generation controls. Drafts hold raw strings from the inputs;
 * validation mirrors the server's ranges so bad values are flagged before a
 * request is made, and the payload carries only the fields the user set.
 */

export interface ParamDraft {
  temperature: string
  topP: string
  maxTokens: string
  seed: string
  systemPrompt: string
}

export const EMPTY_DRAFT: ParamDraft = {
  temperature: "",
  topP: "",
  maxTokens: "",
  seed: "",
  systemPrompt: "",
}

export interface ParamIssue {
  field: string
  message: string
}

export interface ValidatedParams {
  payload: Record<string, number | string>
  issues: ParamIssue[]
}

export function validateParams(draft: ParamDraft): ValidatedParams {
  const payload: Record<string, number | string> = {}
  const issues: ParamIssue[] = []

  const temperature = draft.temperature.trim()
  if (temperature !== "") {
    const value = Number(temperature)
    if (!Number.isFinite(value) || value < 0 || value > 2) {
      issues.push({ field: "temperature", message: "temperature must be between 0 and 2" })
    } else {
      payload.temperature = value
    }
  }

  const topP = draft.topP.trim()
  if (topP !== "") {
    const value = Number(topP)
    if (!Number.isFinite(value) || value <= 0 || value > 1) {
      issues.push({ field: "top_p", message: "top_p must be in (0, 1]" })
    } else {
      payload.top_p = value
    }
  }

  const maxTokens = draft.maxTokens.trim()
  if (maxTokens !== "") {
    const value = Number(maxTokens)
    if (!Number.isInteger(value) || value <= 0) {
      issues.push({ field: "max_tokens", message: "max_tokens must be a positive integer" })
    } else {
      payload.max_tokens = value
    }
  }

  const seed = draft.seed.trim()
  if (seed !== "") {
    const value = Number(seed)
    if (!Number.isInteger(value)) {
      issues.push({ field: "seed", message: "seed must be an integer" })
    } else {
      payload.seed = value
    }
  }

  if (draft.systemPrompt !== "") {
    payload.system_prompt = draft.systemPrompt
  }

  return { payload, issues }
}
