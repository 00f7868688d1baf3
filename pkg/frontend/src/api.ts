/**
 * Typed client for the gateway's HTTP and SSE surface.
 *
 * The UI holds no truth: every view is rebuilt from these responses, so the
 * client is a thin translation layer. All non-2xx responses carry the
 * uniform envelope {"error": {code, message, field?}} and are thrown as
 * ApiError; streaming endpoints yield parsed `data:` payloads until [DONE].
 */

import { ssePayloads } from "./sse"

export interface ErrorBody {
  error: { code: string; message: string; field?: string | null }
}

export class ApiError extends Error {
  constructor(
    readonly code: string,
    message: string,
    readonly field: string | null = null,
    readonly status = 0,
  ) {
    super(message)
    this.name = "ApiError"
  }
}

export function toApiError(doc: unknown, status: number): ApiError {
  const err = (doc as ErrorBody | null)?.error
  if (err && typeof err.code === "string") {
    return new ApiError(err.code, err.message, err.field ?? null, status)
  }
  return new ApiError("unknown", `request failed with status ${status}`, null, status)
}

export interface PublicUser {
  id: string
  name: string
  email: string
  role: "admin" | "user" | "pending"
  created_at: string
}

export interface WireModel {
  id: string
  object: string
  created: number
  owned_by: string
}

export interface ModelDescriptor {
  id: string
  display_name: string
  source: "local-runner" | "remote-endpoint" | "pipe-plugin" | "model-preset"
  backend_id: string | null
  native_name: string
  default_params: Record<string, unknown>
  profile: { image_ref: string | null; description: string | null; starters: string[] }
  remote: boolean
}

export interface NodeDict {
  id: string
  conversation_id: string
  parent_id: string | null
  role: "system" | "user" | "assistant" | "tool"
  content: string
  attachments: unknown[]
  model_id: string | null
  status: "streaming" | "complete" | "error"
  error_detail: string | null
  group_id: string | null
  created_at: string
}

export interface ConversationDict {
  id: string
  owner_user_id: string
  title: string | null
  created_at: string
  updated_at: string
  node_ids: string[]
  root_ids: string[]
  active_leaf_id: string | null
  shared: boolean
}

export interface PullEvent {
  model_name: string
  status: "pulling" | "verifying" | "done" | "error"
  // the terminal error event carries only name, status, and detail
  completed_bytes?: number
  total_bytes?: number | null
  detail?: string | null
}

export type FanoutEvent =
  | { type: "chunk"; node_id: string; model_id: string; content: string }
  | { type: "node_complete"; node: NodeDict }
  | { type: "node_error"; node: NodeDict }
  | { type: "done"; nodes: NodeDict[] }
  | ErrorBody

export interface ParamsPayload {
  temperature?: number
  top_p?: number
  max_tokens?: number
  seed?: number
  system_prompt?: string
}

export interface PromptPresetDict {
  command: string
  title: string
  body: string
}

export interface PluginRow {
  manifest: { id: string; name: string; kind: string; version: string } & Record<string, unknown>
  enabled: boolean
  admin_only: boolean
  config: Record<string, unknown>
  state: { plugin_id: string; state: string; restarts: number; last_error: string | null }
}

/** Minimal view of fetch so tests can substitute a recorder. */
export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>

async function* bodyChunks(resp: Response): AsyncGenerator<string> {
  const body: ReadableStream<Uint8Array> | null | undefined = resp.body
  if (body && typeof body.getReader === "function") {
    const reader = body.getReader()
    const decoder = new TextDecoder()
    for (;;) {
      const { value, done } = await reader.read()
      if (done) break
      yield decoder.decode(value, { stream: true })
    }
    return
  }
  // fallback for test doubles and non-streaming transports
  yield await resp.text()
}

export class ApiClient {
  token: string | null = null

  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private headers(): Record<string, string> {
    const out: Record<string, string> = { "content-type": "application/json" }
    if (this.token) out["authorization"] = `Bearer ${this.token}`
    return out
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path, {
      method,
      headers: this.headers(),
      body: body === undefined ? undefined : JSON.stringify(body),
    })
    const text = await resp.text()
    const doc = text ? JSON.parse(text) : {}
    if (!resp.ok) throw toApiError(doc, resp.status)
    return doc as T
  }

  private async *stream(method: string, path: string, body?: unknown): AsyncGenerator<string> {
    const resp = await this.fetchFn(this.baseUrl + path, {
      method,
      headers: this.headers(),
      body: body === undefined ? undefined : JSON.stringify(body),
    })
    if (!resp.ok) {
      const text = await resp.text()
      throw toApiError(text ? JSON.parse(text) : {}, resp.status)
    }
    yield* ssePayloads(bodyChunks(resp))
  }

  // -- auth ------------------------------------------------------------------

  async signup(name: string, email: string, password: string): Promise<PublicUser> {
    return this.request("POST", "/api/auth/signup", { name, email, password })
  }

  async login(email: string, password: string): Promise<PublicUser> {
    const doc = await this.request<{ token: string; user: PublicUser }>(
      "POST", "/api/auth/login", { email, password })
    this.token = doc.token
    return doc.user
  }

  async whoami(): Promise<PublicUser> {
    return this.request("GET", "/api/users/me")
  }

  // -- models ------------------------------------------------------------------

  async listWireModels(): Promise<WireModel[]> {
    const doc = await this.request<{ object: string; data: WireModel[] }>(
      "GET", "/v1/models")
    return doc.data
  }

  async describeModels(): Promise<{ models: ModelDescriptor[]; warnings: Record<string, string> }> {
    return this.request("GET", "/api/models")
  }

  pullModel(backendId: string, name: string): AsyncGenerator<PullEvent> {
    const payloads = this.stream("POST", "/api/models/pull",
      { backend_id: backendId, name })
    return (async function* () {
      for await (const raw of payloads) yield JSON.parse(raw) as PullEvent
    })()
  }

  async deleteModel(backendId: string, name: string): Promise<void> {
    await this.request("POST", "/api/models/delete", { backend_id: backendId, name })
  }

  // -- conversations ------------------------------------------------------------

  async createConversation(title?: string): Promise<ConversationDict> {
    return this.request("POST", "/api/conversations", title ? { title } : {})
  }

  async listConversations(): Promise<ConversationDict[]> {
    const doc = await this.request<{ conversations: ConversationDict[] }>(
      "GET", "/api/conversations")
    return doc.conversations
  }

  async getConversation(convId: string): Promise<{
    conversation: ConversationDict
    nodes: NodeDict[]
    preferences: unknown[]
  }> {
    return this.request("GET", `/api/conversations/${convId}`)
  }

  async postMessage(convId: string, content: string, parentId?: string | null): Promise<NodeDict> {
    const body: Record<string, unknown> = { content }
    if (parentId) body["parent_id"] = parentId
    return this.request("POST", `/api/conversations/${convId}/messages`, body)
  }

  fanoutStream(
    convId: string,
    promptNodeId: string,
    modelIds: string[],
    params?: ParamsPayload,
  ): AsyncGenerator<FanoutEvent> {
    const payloads = this.stream("POST", `/api/conversations/${convId}/fanout`, {
      prompt_node_id: promptNodeId,
      model_ids: modelIds,
      params: params ?? {},
      stream: true,
    })
    return (async function* () {
      for await (const raw of payloads) yield JSON.parse(raw) as FanoutEvent
    })()
  }

  async select(convId: string, nodeId: string): Promise<{
    record: Record<string, unknown> | null
    conversation: ConversationDict
  }> {
    return this.request("POST", `/api/conversations/${convId}/select`, { node_id: nodeId })
  }

  async activeThread(convId: string): Promise<NodeDict[]> {
    const doc = await this.request<{ nodes: NodeDict[] }>(
      "GET", `/api/conversations/${convId}/thread`)
    return doc.nodes
  }

  // -- presets -------------------------------------------------------------------

  async listPrompts(): Promise<PromptPresetDict[]> {
    const doc = await this.request<{ prompts: PromptPresetDict[] }>(
      "GET", "/api/presets/prompts")
    return doc.prompts
  }

  async createPrompt(command: string, title: string, body: string): Promise<PromptPresetDict> {
    return this.request("POST", "/api/presets/prompts", { command, title, body })
  }

  async resolvePrompt(line: string): Promise<PromptPresetDict> {
    return this.request("POST", "/api/presets/prompts/resolve", { line })
  }

  // -- plugins and admin -----------------------------------------------------------

  async listPlugins(): Promise<PluginRow[]> {
    const doc = await this.request<{ plugins: PluginRow[] }>("GET", "/api/plugins")
    return doc.plugins
  }

  async setPluginEnabled(pluginId: string, enabled: boolean): Promise<void> {
    const op = enabled ? "enable" : "disable"
    await this.request("POST", `/api/plugins/${pluginId}/${op}`)
  }

  async listUsers(): Promise<PublicUser[]> {
    const doc = await this.request<{ users: PublicUser[] }>("GET", "/api/users")
    return doc.users
  }

  async approveUser(userId: string): Promise<void> {
    await this.request("POST", `/api/users/${userId}/approve`)
  }

  async uploadModel(backendId: string, name: string, blob: ArrayBuffer | Uint8Array): Promise<void> {
    const qs = `backend_id=${encodeURIComponent(backendId)}&name=${encodeURIComponent(name)}`
    const headers: Record<string, string> = { "content-type": "application/octet-stream" }
    if (this.token) headers["authorization"] = `Bearer ${this.token}`
    const resp = await this.fetchFn(`${this.baseUrl}/api/models/upload?${qs}`, {
      method: "POST",
      headers,
      body: blob as BodyInit,
    })
    if (!resp.ok) {
      const text = await resp.text()
      throw toApiError(text ? JSON.parse(text) : {}, resp.status)
    }
  }

  async hubImport(packageText: string): Promise<{ category: string; ref: string; name: string }> {
    return this.request("POST", "/api/hub/import", { package: packageText })
  }
}
