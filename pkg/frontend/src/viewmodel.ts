// Pure console logic: schema-driven controls, input validation, canonical
// JSON, and the state reducers the SSE stream feeds. Everything in this
// module is side-effect free; app.ts owns the DOM.

import type {
  AttributeSchema,
  Automation,
  BotTurn,
  EntitySnapshot,
  EnvironmentSnapshot,
  FiringRecord,
  KindSchema,
  Scalar,
  Stage,
  StateChange,
} from "./types.js";

export const STAGES: Stage[] = ["define", "explore", "refine", "confirm", "export"];

// -- schema-driven controls ---------------------------------------------------

export type ControlSpec =
  | { control: "toggle" }
  | { control: "select"; options: string[] }
  | { control: "slider"; min: number; max: number }
  | { control: "number" }
  | { control: "readonly" };

export function controlFor(attr: AttributeSchema): ControlSpec {
  if (attr.kind === "bool") {
    return { control: "toggle" };
  }
  if (attr.kind === "enum" && attr.enum && attr.enum.length > 0) {
    return { control: "select", options: attr.enum };
  }
  if (attr.kind === "number") {
    if (attr.min !== undefined && attr.max !== undefined) {
      return { control: "slider", min: attr.min, max: attr.max };
    }
    return { control: "number" };
  }
  // string/media attributes are written by services, not direct edits
  return { control: "readonly" };
}

export type Validation = { ok: true; value: Scalar } | { ok: false; reason: string };

export function validateValue(attr: AttributeSchema, raw: string): Validation {
  if (attr.kind === "bool") {
    if (raw === "true") return { ok: true, value: true };
    if (raw === "false") return { ok: true, value: false };
    return { ok: false, reason: `${attr.name} must be true or false` };
  }
  if (attr.kind === "number") {
    const value = Number(raw);
    if (raw.trim() === "" || Number.isNaN(value)) {
      return { ok: false, reason: `${attr.name} must be a number` };
    }
    if (attr.min !== undefined && value < attr.min) {
      return { ok: false, reason: `${attr.name} must be at least ${attr.min}` };
    }
    if (attr.max !== undefined && value > attr.max) {
      return { ok: false, reason: `${attr.name} must be at most ${attr.max}` };
    }
    return { ok: true, value };
  }
  if (attr.kind === "enum") {
    const options = attr.enum ?? [];
    if (!options.includes(raw)) {
      return { ok: false, reason: `${attr.name} must be one of ${options.join(", ")}` };
    }
    return { ok: true, value: raw };
  }
  return { ok: true, value: raw };
}

// -- canonical JSON -------------------------------------------------------------

/** Sorted-key compact JSON, byte-compatible with the server's encoding. */
export function canonicalJson(value: unknown): string {
  if (Array.isArray(value)) {
    return `[${value.map(canonicalJson).join(",")}]`;
  }
  if (value !== null && typeof value === "object") {
    const entries = Object.entries(value as Record<string, unknown>)
      .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0))
      .map(([key, item]) => `${JSON.stringify(key)}:${canonicalJson(item)}`);
    return `{${entries.join(",")}}`;
  }
  return JSON.stringify(value);
}

// -- console state ---------------------------------------------------------------

export type ChatBubble = { role: "user" | "bot"; text: string; stage?: Stage };

export type FeedItem = { text: string; tone: "fired" | "skipped" | "change"; clock: number };

export type ConsoleState = {
  scenario: string;
  clock: number;
  entities: Record<string, EntitySnapshot>;
  kinds: Record<string, KindSchema>;
  chat: ChatBubble[];
  stageBadges: Stage[];
  automations: Automation[];
  feed: FeedItem[];
  selected: string | null;
  pending: boolean;
};

export function initConsole(env: EnvironmentSnapshot): ConsoleState {
  const entities: Record<string, EntitySnapshot> = {};
  for (const entity of env.entities) {
    entities[entity.id] = { ...entity, state: { ...entity.state } };
  }
  const kinds: Record<string, KindSchema> = {};
  for (const kind of env.taxonomy) {
    kinds[kind.kind] = kind;
  }
  return {
    scenario: env.scenario_id,
    clock: env.clock,
    entities,
    kinds,
    chat: [],
    stageBadges: [],
    automations: [],
    feed: [],
    selected: null,
    pending: false,
  };
}

export function canSend(text: string, pending: boolean): boolean {
  return text.trim().length > 0 && !pending;
}

export function applyUserText(state: ConsoleState, text: string): void {
  state.chat.push({ role: "user", text });
}

export function applyBotTurn(state: ConsoleState, turn: BotTurn): void {
  state.chat.push({ role: "bot", text: turn.message, stage: turn.stage });
  state.stageBadges.push(turn.stage);
}

export function applyStateChange(state: ConsoleState, change: StateChange): void {
  const entity = state.entities[change.entity_id];
  if (entity) {
    entity.state[change.attribute] = change.new;
  }
  state.clock = change.clock;
  state.feed.push({
    text: `${change.entity_id}.${change.attribute}: ${fmt(change.old)} -> ${fmt(change.new)}`,
    tone: "change",
    clock: change.clock,
  });
}

export function applyFiringRecord(state: ConsoleState, record: FiringRecord): void {
  const text = record.fired
    ? `${record.rule_id} fired (${record.emitted_events.length} effect(s))`
    : record.enabled
      ? `${record.rule_id} matched but its conditions did not hold`
      : `${record.rule_id} matched but is disabled`;
  state.feed.push({ text, tone: record.fired ? "fired" : "skipped", clock: record.clock });
}

/** Entity ids whose cards should flash for this record: the action targets. */
export function flashTargets(record: FiringRecord): string[] {
  const ids = new Set<string>();
  for (const event of record.emitted_events) {
    ids.add(event.entity_id);
  }
  ids.add(record.event.entity_id);
  return [...ids];
}

function fmt(value: Scalar): string {
  return typeof value === "string" ? `'${value}'` : String(value);
}

// -- render helpers (pure HTML strings) -------------------------------------------

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderStageBadges(badges: Stage[]): string {
  if (badges.length === 0) {
    return `<span class="badge badge-idle">no turns yet</span>`;
  }
  return badges
    .map((stage, i) => {
      const active = i === badges.length - 1 ? " badge-active" : "";
      return `<span class="badge badge-stage${active}">${stage}</span>`;
    })
    .join("");
}

export function renderChat(chat: ChatBubble[]): string {
  return chat
    .map((bubble) => {
      const stageTag = bubble.stage ? `<span class="bubble-stage">${bubble.stage}</span>` : "";
      return `<div class="bubble bubble-${bubble.role}">${stageTag}${escapeHtml(bubble.text)}</div>`;
    })
    .join("");
}

export function renderControl(entityId: string, attr: AttributeSchema, value: Scalar): string {
  const spec = controlFor(attr);
  const common = `data-entity="${escapeHtml(entityId)}" data-attribute="${escapeHtml(attr.name)}"`;
  switch (spec.control) {
    case "toggle":
      return `<input type="checkbox" class="attr-control" ${common} ${value === true ? "checked" : ""} />`;
    case "select": {
      const options = spec.options
        .map(
          (option) =>
            `<option value="${escapeHtml(option)}" ${option === value ? "selected" : ""}>${escapeHtml(option)}</option>`,
        )
        .join("");
      return `<select class="attr-control" ${common}>${options}</select>`;
    }
    case "slider":
      return (
        `<input type="range" class="attr-control" ${common} min="${spec.min}" max="${spec.max}" value="${Number(value)}" />` +
        `<span class="attr-value">${Number(value)}${attr.unit ? " " + escapeHtml(attr.unit) : ""}</span>`
      );
    case "number":
      return `<input type="number" class="attr-control" ${common} value="${Number(value)}" />`;
    case "readonly":
      return `<code class="attr-value">${escapeHtml(String(value))}</code>`;
  }
}

export function renderEntityCard(
  entity: EntitySnapshot,
  kind: KindSchema,
  selected: boolean,
  flashing: boolean,
): string {
  const classes = ["card"];
  if (selected) classes.push("card-selected");
  if (flashing) classes.push("card-flash");
  const rows = kind.attributes
    .map(
      (attr) =>
        `<div class="attr-row"><label>${escapeHtml(attr.name)}</label>` +
        `${renderControl(entity.id, attr, entity.state[attr.name])}</div>`,
    )
    .join("");
  const media = entity.media_library?.length
    ? `<div class="media">media: ${entity.media_library.map(escapeHtml).join(", ")}</div>`
    : "";
  return (
    `<article class="${classes.join(" ")}" data-id="${escapeHtml(entity.id)}">` +
    `<header><h3>${escapeHtml(entity.display_name)}</h3>` +
    `<span class="badge badge-kind">${escapeHtml(entity.kind)}</span></header>` +
    rows +
    media +
    `</article>`
  );
}

export function renderAutomationCard(automation: Automation): string {
  const enabled = automation.enabled
    ? `<span class="badge badge-on">enabled</span>`
    : `<span class="badge badge-off">disabled</span>`;
  const shape =
    `${automation.triggers.length} trigger(s), ` +
    `${automation.conditions.length} condition(s), ` +
    `${automation.actions.length} action(s)`;
  return (
    `<article class="card automation" data-id="${escapeHtml(automation.id)}">` +
    `<header><h3>${escapeHtml(automation.alias)}</h3>${enabled}</header>` +
    `<div class="shape">${shape}</div>` +
    `<details><summary>canonical JSON</summary>` +
    `<pre>${escapeHtml(canonicalJson(automation))}</pre></details>` +
    `</article>`
  );
}

export function renderFeed(feed: FeedItem[], limit = 50): string {
  return feed
    .slice(-limit)
    .reverse()
    .map(
      (item) =>
        `<li class="feed-${item.tone}"><span class="feed-clock">t=${item.clock}</span> ${escapeHtml(item.text)}</li>`,
    )
    .join("");
}
