// DOM wiring: boots a session against the service that serves this page,
// renders from the console state, and keeps it fed from the SSE stream.

import { ApiClient, ApiError } from "./api.js";
import { openEventStream } from "./sse.js";
import type { AttributeSchema } from "./types.js";
import {
  ConsoleState,
  applyBotTurn,
  applyFiringRecord,
  applyStateChange,
  applyUserText,
  canSend,
  flashTargets,
  initConsole,
  renderAutomationCard,
  renderChat,
  renderEntityCard,
  renderFeed,
  renderStageBadges,
  validateValue,
} from "./viewmodel.js";

const DEFAULT_SCENARIO = "vr-museum";
const FLASH_MS = 900;

const api = new ApiClient("");

function el<T extends HTMLElement>(selector: string): T {
  const node = document.querySelector<T>(selector);
  if (!node) throw new Error(`missing element ${selector}`);
  return node;
}

function scenarioFromQuery(): string {
  return new URLSearchParams(window.location.search).get("scenario") ?? DEFAULT_SCENARIO;
}

let state: ConsoleState;
let sessionId = "";
const flashes = new Set<string>();

function render(): void {
  el("#badges").innerHTML = renderStageBadges(state.stageBadges);
  const chatBox = el("#chat-log");
  chatBox.innerHTML = renderChat(state.chat);
  chatBox.scrollTop = chatBox.scrollHeight;
  el("#entities").innerHTML = Object.values(state.entities)
    .map((entity) =>
      renderEntityCard(
        entity,
        state.kinds[entity.kind],
        state.selected === entity.id,
        flashes.has(entity.id),
      ),
    )
    .join("");
  el("#automations").innerHTML =
    state.automations.map(renderAutomationCard).join("") ||
    `<p class="empty">no automations yet</p>`;
  el("#feed").innerHTML = renderFeed(state.feed);
  const input = el<HTMLInputElement>("#chat-input");
  el<HTMLButtonElement>("#send").disabled = !canSend(input.value, state.pending);
}

function toast(message: string): void {
  const node = el("#toast");
  node.textContent = message;
  node.classList.add("toast-visible");
  window.setTimeout(() => node.classList.remove("toast-visible"), 2600);
}

function flash(entityIds: string[]): void {
  for (const id of entityIds) flashes.add(id);
  render();
  window.setTimeout(() => {
    for (const id of entityIds) flashes.delete(id);
    render();
  }, FLASH_MS);
}

async function refreshAutomations(): Promise<void> {
  const listed = await api.automations(state.scenario);
  state.automations = listed.automations;
  render();
}

async function sendTurn(text: string): Promise<void> {
  applyUserText(state, text);
  state.pending = true;
  render();
  try {
    const response = await api.sendTurn(sessionId, text);
    applyBotTurn(state, response.turn);
    if (response.turn.stage === "export") {
      await refreshAutomations();
    }
  } catch (err) {
    if (err instanceof ApiError && err.status === 409) {
      toast("the assistant is thinking; give it a moment");
    } else {
      toast(err instanceof Error ? err.message : String(err));
    }
  } finally {
    state.pending = false;
    render();
  }
}

function attributeSchema(entityId: string, name: string): AttributeSchema | undefined {
  const entity = state.entities[entityId];
  const kind = entity ? state.kinds[entity.kind] : undefined;
  return kind?.attributes.find((attr) => attr.name === name);
}

async function fireFromControl(control: HTMLInputElement | HTMLSelectElement): Promise<void> {
  const entityId = control.dataset.entity ?? "";
  const name = control.dataset.attribute ?? "";
  const attr = attributeSchema(entityId, name);
  if (!attr) return;
  const raw =
    control instanceof HTMLInputElement && control.type === "checkbox"
      ? String(control.checked)
      : control.value;
  const checked = validateValue(attr, raw);
  if (!checked.ok) {
    toast(checked.reason);
    render(); // restore the control from state
    return;
  }
  try {
    const result = await api.fireEvent(state.scenario, entityId, name, checked.value);
    for (const record of result.firing_records) {
      if (record.fired) flash(flashTargets(record));
    }
  } catch (err) {
    toast(err instanceof Error ? err.message : String(err));
    render();
  }
}

async function toggleFocus(entityId: string): Promise<void> {
  const next = state.selected === entityId ? null : entityId;
  try {
    await api.setFocus(sessionId, next === null ? null : { framed: [next] });
    state.selected = next;
  } catch (err) {
    if (err instanceof ApiError && err.status === 422) {
      toast("that object is gone; reload the page to refresh");
    } else {
      toast(err instanceof Error ? err.message : String(err));
    }
  }
  render();
}

async function boot(): Promise<void> {
  const scenario = scenarioFromQuery();
  const env = await api.environment(scenario);
  state = initConsole(env);
  const session = await api.createSession(scenario);
  sessionId = session.session_id;
  state.chat.push({ role: "bot", text: session.greeting.message, stage: session.greeting.stage });
  await refreshAutomations();

  openEventStream("", sessionId, {
    onStateChange: (change) => {
      applyStateChange(state, change);
      render();
    },
    onFiringRecord: (record) => {
      applyFiringRecord(state, record);
      void refreshAutomations();
    },
    onError: () => {
      // EventSource reconnects on its own; nothing to do
    },
  });

  el<HTMLFormElement>("#chat-form").addEventListener("submit", (event) => {
    event.preventDefault();
    const input = el<HTMLInputElement>("#chat-input");
    const text = input.value;
    if (!canSend(text, state.pending)) return;
    input.value = "";
    void sendTurn(text);
  });
  el<HTMLInputElement>("#chat-input").addEventListener("input", render);

  el("#entities").addEventListener("change", (event) => {
    const target = event.target as HTMLElement;
    if (target.classList.contains("attr-control")) {
      void fireFromControl(target as HTMLInputElement | HTMLSelectElement);
    }
  });
  el("#entities").addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    if (target.closest(".attr-row") || target.classList.contains("attr-control")) {
      return; // control interaction, not card selection
    }
    const card = target.closest<HTMLElement>(".card[data-id]");
    if (card?.dataset.id) {
      void toggleFocus(card.dataset.id);
    }
  });

  el("#scenario-name").textContent = scenario;
  render();
}

boot().catch((err) => {
  document.body.innerHTML = `<p class="boot-error">failed to start: ${
    err instanceof Error ? err.message : String(err)
  }</p>`;
});
