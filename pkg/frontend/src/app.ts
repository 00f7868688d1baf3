/**
 * Browser shell wiring the state modules to the DOM: login, model selection,
 * preset composing with Tab traversal, fan-out columns, and the admin drawer.
 *
 * All conversation truth lives on the server; this layer only renders what
 * the API returns and replays user intent back to it.
 */

import { ApiClient, type ModelDescriptor, type NodeDict, type PromptPresetDict } from "./api"
import { reducePull, describeError, isAdmin, pendingUsers } from "./admin"
import {
  type ComposerState,
  emptyComposer,
  insertPreset,
  tabNext,
  applyEdit,
} from "./composer"
import { type FanoutBoard, applyEvent, columnText, startBoard } from "./fanout"
import { buildSelectorItems } from "./selector"
import { type ParamDraft, EMPTY_DRAFT, validateParams } from "./controls"
import { lineage, branchPosition } from "./thread"

interface AppState {
  api: ApiClient
  user: Awaited<ReturnType<ApiClient["whoami"]>> | null
  models: ModelDescriptor[]
  selectedModels: string[]
  conversationId: string | null
  nodes: Record<string, NodeDict>
  nodeOrder: string[]
  leafId: string | null
  composer: ComposerState
  presets: PromptPresetDict[]
  board: FanoutBoard | null
  params: ParamDraft
  searchTerm: string
  banner: string | null
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag)
  if (className) node.className = className
  if (text !== undefined) node.textContent = text
  return node
}

function must<T>(value: T | null | undefined, what: string): T {
  if (value === null || value === undefined) throw new Error(`missing ${what}`)
  return value
}

export function createApp(root: HTMLElement): void {
  const state: AppState = {
    api: new ApiClient(window.location.origin),
    user: null,
    models: [],
    selectedModels: [],
    conversationId: null,
    nodes: {},
    nodeOrder: [],
    leafId: null,
    composer: emptyComposer(),
    presets: [],
    board: null,
    params: { ...EMPTY_DRAFT },
    searchTerm: "",
    banner: null,
  }

  const bannerBox = el("div", "banner")
  const authBox = el("div", "auth")
  const chatBox = el("div", "chat hidden")
  root.append(bannerBox, authBox, chatBox)

  function showBanner(message: string | null): void {
    state.banner = message
    bannerBox.textContent = message ?? ""
    bannerBox.classList.toggle("hidden", message === null)
  }

  async function refreshModels(): Promise<void> {
    const doc = await state.api.describeModels()
    state.models = doc.models
    renderSelector()
  }

  async function reloadConversation(): Promise<void> {
    if (state.conversationId === null) return
    const doc = await state.api.getConversation(state.conversationId)
    state.nodes = Object.fromEntries(doc.nodes.map((n) => [n.id, n]))
    state.nodeOrder = doc.conversation.node_ids
    state.leafId = doc.conversation.active_leaf_id
    renderThread()
  }

  // --- auth -----------------------------------------------------------

  const emailInput = el("input")
  emailInput.placeholder = "email"
  const passwordInput = el("input")
  passwordInput.type = "password"
  passwordInput.placeholder = "password"
  const loginButton = el("button", undefined, "Sign in")
  const signupButton = el("button", undefined, "Create account")
  authBox.append(emailInput, passwordInput, loginButton, signupButton)

  async function enter(): Promise<void> {
    state.user = await state.api.whoami()
    authBox.classList.add("hidden")
    chatBox.classList.remove("hidden")
    state.presets = await state.api.listPrompts()
    await refreshModels()
    renderAdmin()
  }

  loginButton.addEventListener("click", () => {
    state.api
      .login(emailInput.value, passwordInput.value)
      .then(enter)
      .catch((err) => showBanner(String(err)))
  })
  signupButton.addEventListener("click", () => {
    state.api
      .signup(emailInput.value.split("@")[0] ?? "user", emailInput.value, passwordInput.value)
      .then(() => state.api.login(emailInput.value, passwordInput.value))
      .then(enter)
      .catch((err) => showBanner(String(err)))
  })

  // --- model selector -------------------------------------------------

  const selectorBox = el("div", "selector")
  const searchInput = el("input")
  searchInput.placeholder = "search models"
  const selectorList = el("ul")
  selectorBox.append(searchInput, selectorList)
  chatBox.append(selectorBox)

  searchInput.addEventListener("input", () => {
    state.searchTerm = searchInput.value
    renderSelector()
  })

  function renderSelector(): void {
    selectorList.replaceChildren()
    for (const item of buildSelectorItems(state.models, state.searchTerm)) {
      const row = el("li", `item badge-${item.badge}`)
      const label = el("span", "name", item.displayName)
      const badge = el("span", "badge", item.badge)
      row.append(label, badge)
      if (item.pullable) {
        const pull = el("button", "pull", "Pull")
        pull.addEventListener("click", () => void pullModel(item.id))
        row.append(pull)
      } else {
        const picked = state.selectedModels.includes(item.id)
        row.classList.toggle("picked", picked)
        row.addEventListener("click", () => {
          const at = state.selectedModels.indexOf(item.id)
          if (at >= 0) state.selectedModels.splice(at, 1)
          else state.selectedModels.push(item.id)
          renderSelector()
        })
      }
      selectorList.append(row)
    }
  }

  const pullBar = el("progress")
  pullBar.max = 100
  pullBar.classList.add("hidden")
  selectorBox.append(pullBar)

  async function pullModel(name: string): Promise<void> {
    const backend = state.models.find((m) => m.source === "local-runner")?.backend_id ?? "local"
    pullBar.classList.remove("hidden")
    pullBar.removeAttribute("value")
    try {
      for await (const event of state.api.pullModel(backend, name)) {
        const view = reducePull(event)
        if (view.percent !== null) pullBar.value = view.percent
        if (view.status === "error") showBanner(view.detail)
      }
      await refreshModels()
    } catch (err) {
      showBanner(String(err))
    } finally {
      pullBar.classList.add("hidden")
    }
  }

  // --- thread and fan-out columns --------------------------------------

  const threadBox = el("div", "thread")
  const columnsBox = el("div", "columns")
  chatBox.append(threadBox, columnsBox)

  function renderThread(): void {
    threadBox.replaceChildren()
    if (state.leafId === null) return
    for (const node of lineage(state.nodes, state.leafId)) {
      const row = el("div", `node role-${node.role}`)
      row.append(el("span", "role", node.role), el("span", "content", node.content))
      const pos = branchPosition(state.nodes, state.nodeOrder, node.id)
      if (pos.total > 1) {
        const switcher = el("span", "branches", `${pos.index + 1}/${pos.total}`)
        for (const siblingId of pos.siblingIds) {
          if (siblingId === node.id) continue
          const jump = el("button", "sibling", "switch")
          jump.addEventListener("click", () => void selectNode(siblingId))
          switcher.append(jump)
        }
        row.append(switcher)
      }
      threadBox.append(row)
    }
  }

  async function selectNode(nodeId: string): Promise<void> {
    if (state.conversationId === null) return
    await state.api.select(state.conversationId, nodeId)
    state.board = null
    columnsBox.replaceChildren()
    await reloadConversation()
  }

  function renderBoard(): void {
    columnsBox.replaceChildren()
    const board = state.board
    if (!board) return
    if (board.failure !== null) showBanner(board.failure)
    for (const column of board.columns) {
      const cell = el("div", `column status-${column.status}`)
      cell.append(el("div", "model", column.modelId))
      cell.append(el("div", "text", columnText(column)))
      if (column.status === "error") {
        cell.append(el("div", "error", column.errorDetail ?? "failed"))
      } else if (column.status === "complete" && column.nodeId !== null) {
        const keep = el("button", "keep", "Continue here")
        const nodeId = column.nodeId
        keep.addEventListener("click", () => void selectNode(nodeId))
        cell.append(keep)
      }
      columnsBox.append(cell)
    }
  }

  // --- composer ---------------------------------------------------------

  const composerBox = el("div", "composer")
  const presetList = el("ul", "presets hidden")
  const draftArea = el("textarea")
  draftArea.rows = 4
  const sendButton = el("button", undefined, "Send")
  composerBox.append(presetList, draftArea, sendButton)
  chatBox.append(composerBox)

  function syncComposer(): void {
    draftArea.value = state.composer.draft
    draftArea.focus()
    draftArea.setSelectionRange(state.composer.selection.start, state.composer.selection.end)
  }

  function renderPresetMenu(): void {
    const term = draftArea.value.toLowerCase()
    // stored commands carry their leading slash, so match on the raw line
    const hits = state.presets.filter((p) => p.command.toLowerCase().startsWith(term))
    presetList.replaceChildren()
    presetList.classList.toggle("hidden", !draftArea.value.startsWith("/") || hits.length === 0)
    for (const preset of hits) {
      const row = el("li", "preset", `${preset.command} ${preset.title}`)
      row.addEventListener("click", () => {
        state.composer = insertPreset(state.composer, preset.body)
        presetList.classList.add("hidden")
        syncComposer()
      })
      presetList.append(row)
    }
  }

  draftArea.addEventListener("keydown", (event) => {
    if (event.key === "Tab") {
      event.preventDefault()
      state.composer = tabNext(state.composer)
      syncComposer()
    }
  })

  draftArea.addEventListener("input", () => {
    // derive the edit from the value diff the browser applied
    const caret = draftArea.selectionStart ?? draftArea.value.length
    const before = state.composer
    const inserted = draftArea.value.length - before.draft.length + (before.selection.end - before.selection.start)
    const from = before.selection.start
    const to = before.selection.end
    const text = draftArea.value.slice(from, from + Math.max(inserted, 0))
    state.composer = applyEdit(before, from, to, text)
    state.composer.selection = { start: caret, end: caret }
    if (draftArea.value.startsWith("/")) renderPresetMenu()
    else presetList.classList.add("hidden")
  })

  sendButton.addEventListener("click", () => void send())

  async function send(): Promise<void> {
    const text = draftArea.value
    if (text.trim() === "" || state.selectedModels.length === 0) return
    const { payload, issues } = validateParams(state.params)
    if (issues.length > 0) {
      showBanner(issues.map((i) => i.message).join("; "))
      return
    }
    showBanner(null)
    if (state.conversationId === null) {
      const conv = await state.api.createConversation()
      state.conversationId = conv.id
    }
    const prompt = await state.api.postMessage(state.conversationId, text)
    state.composer = emptyComposer()
    draftArea.value = ""
    state.board = startBoard(state.selectedModels)
    renderBoard()
    try {
      for await (const event of state.api.fanoutStream(
        state.conversationId,
        prompt.id,
        state.selectedModels,
        payload,
      )) {
        applyEvent(state.board, event)
        renderBoard()
      }
    } catch (err) {
      showBanner(String(err))
    }
    await reloadConversation()
  }

  // --- controls and admin ----------------------------------------------

  const controlsBox = el("div", "controls")
  const fields: Array<[keyof ParamDraft, string]> = [
    ["temperature", "temperature"],
    ["topP", "top_p"],
    ["maxTokens", "max_tokens"],
    ["seed", "seed"],
    ["systemPrompt", "system prompt"],
  ]
  for (const [key, label] of fields) {
    const wrap = el("label", "field", label)
    const input = el("input")
    input.addEventListener("input", () => {
      state.params[key] = input.value
    })
    wrap.append(input)
    controlsBox.append(wrap)
  }
  chatBox.append(controlsBox)

  const adminBox = el("div", "admin")
  chatBox.append(adminBox)

  function renderAdmin(): void {
    adminBox.replaceChildren()
    if (!isAdmin(state.user)) {
      adminBox.append(el("div", "denied", "Admin access required"))
      return
    }
    const queue = el("ul", "pending")
    adminBox.append(el("h3", undefined, "Pending signups"), queue)
    void state.api.listUsers().then((users) => {
      for (const user of pendingUsers(users)) {
        const row = el("li", undefined, user.email)
        const approve = el("button", undefined, "Approve")
        approve.addEventListener("click", () => {
          void state.api.approveUser(user.id).then(renderAdmin)
        })
        row.append(approve)
        queue.append(row)
      }
    })

    const upload = el("input")
    upload.type = "file"
    upload.addEventListener("change", () => {
      const file = upload.files?.[0]
      if (!file) return
      void file.arrayBuffer().then(async (buf) => {
        try {
          const backend = must(
            state.models.find((m) => m.source === "local-runner")?.backend_id,
            "local backend",
          )
          await state.api.uploadModel(backend, file.name, new Uint8Array(buf))
          await refreshModels()
        } catch (err) {
          showBanner(err instanceof Error ? describeError({ error: { code: "upload_failed", message: err.message } }) : String(err))
        }
      })
    })
    adminBox.append(el("h3", undefined, "Upload model file"), upload)
  }
}

const rootEl = document.getElementById("app")
if (rootEl) createApp(rootEl)
