import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import type {
  AttributeSchema,
  Automation,
  BotTurn,
  EnvironmentSnapshot,
  FiringRecord,
  StateChange,
} from "../src/types.js";
import {
  applyBotTurn,
  applyFiringRecord,
  applyStateChange,
  applyUserText,
  canSend,
  canonicalJson,
  controlFor,
  escapeHtml,
  flashTargets,
  initConsole,
  renderAutomationCard,
  renderChat,
  renderControl,
  renderEntityCard,
  renderStageBadges,
  validateValue,
} from "../src/viewmodel.js";

const boolAttr: AttributeSchema = { name: "power", kind: "bool", default: false };
const boundedAttr: AttributeSchema = {
  name: "brightness",
  kind: "number",
  default: 100,
  min: 0,
  max: 100,
  unit: "percent",
};
const freeAttr: AttributeSchema = { name: "lux", kind: "number", default: 0 };
const enumAttr: AttributeSchema = {
  name: "contains",
  kind: "enum",
  default: "empty",
  enum: ["empty", "sceptre", "orb"],
};
const stringAttr: AttributeSchema = { name: "now_playing", kind: "string", default: "" };

const miniEnv: EnvironmentSnapshot = {
  scenario_id: "mini",
  clock: 0,
  taxonomy: [
    { kind: "light", attributes: [boolAttr, boundedAttr], services: [] },
    { kind: "socket", attributes: [enumAttr], services: [] },
  ],
  entities: [
    {
      id: "lamp_1",
      kind: "light",
      display_name: "the desk lamp",
      state: { power: false, brightness: 100 },
    },
    { id: "slot_1", kind: "socket", display_name: "the slot", state: { contains: "empty" } },
  ],
};

describe("controlFor", () => {
  it("maps schemas onto controls", () => {
    expect(controlFor(boolAttr)).toEqual({ control: "toggle" });
    expect(controlFor(enumAttr)).toEqual({
      control: "select",
      options: ["empty", "sceptre", "orb"],
    });
    expect(controlFor(boundedAttr)).toEqual({ control: "slider", min: 0, max: 100 });
    expect(controlFor(freeAttr)).toEqual({ control: "number" });
    expect(controlFor(stringAttr)).toEqual({ control: "readonly" });
  });
});

describe("validateValue", () => {
  it("parses booleans strictly", () => {
    expect(validateValue(boolAttr, "true")).toEqual({ ok: true, value: true });
    expect(validateValue(boolAttr, "false")).toEqual({ ok: true, value: false });
    expect(validateValue(boolAttr, "yes")).toMatchObject({ ok: false });
  });

  it("checks numbers and their bounds", () => {
    expect(validateValue(boundedAttr, "42")).toEqual({ ok: true, value: 42 });
    expect(validateValue(boundedAttr, "abc")).toMatchObject({ ok: false });
    expect(validateValue(boundedAttr, "")).toMatchObject({ ok: false });
    const over = validateValue(boundedAttr, "150");
    expect(over.ok).toBe(false);
    if (!over.ok) expect(over.reason).toContain("at most 100");
    const under = validateValue(boundedAttr, "-3");
    expect(under.ok).toBe(false);
    if (!under.ok) expect(under.reason).toContain("at least 0");
    expect(validateValue(freeAttr, "99999")).toEqual({ ok: true, value: 99999 });
  });

  it("restricts enums to their options", () => {
    expect(validateValue(enumAttr, "sceptre")).toEqual({ ok: true, value: "sceptre" });
    const bad = validateValue(enumAttr, "banana");
    expect(bad.ok).toBe(false);
    if (!bad.ok) expect(bad.reason).toContain("sceptre");
  });

  it("passes strings through", () => {
    expect(validateValue(stringAttr, "whatever")).toEqual({ ok: true, value: "whatever" });
  });
});

describe("canonicalJson", () => {
  it("sorts keys recursively and stays compact", () => {
    expect(canonicalJson({ b: 1, a: [true, { z: null, y: "x" }] })).toBe(
      '{"a":[true,{"y":"x","z":null}],"b":1}',
    );
  });

  it("keeps unicode unescaped like the server does", () => {
    expect(canonicalJson({ alias: "Règle ✨" })).toBe('{"alias":"Règle ✨"}');
  });

  it("reproduces the server's golden store byte for byte", () => {
    const golden = readFileSync(
      new URL("../../tests/golden/angie-store.json", import.meta.url),
      "utf-8",
    ).trim();
    expect(canonicalJson(JSON.parse(golden))).toBe(golden);
  });
});

describe("console state", () => {
  it("indexes entities and kinds from the snapshot", () => {
    const state = initConsole(miniEnv);
    expect(Object.keys(state.entities)).toEqual(["lamp_1", "slot_1"]);
    expect(state.kinds["light"].attributes).toHaveLength(2);
    expect(state.stageBadges).toEqual([]);
  });

  it("copies state so later changes do not leak into the snapshot", () => {
    const state = initConsole(miniEnv);
    state.entities["lamp_1"].state["power"] = true;
    expect(miniEnv.entities[0].state["power"]).toBe(false);
  });

  it("tracks the stage badge sequence from bot turns", () => {
    const state = initConsole(miniEnv);
    const stages = ["define", "explore", "refine", "refine", "confirm", "export"] as const;
    for (const stage of stages) {
      applyBotTurn(state, { stage, message: "m", intent: "continue" } as BotTurn);
    }
    expect(state.stageBadges).toEqual([...stages]);
    expect(state.chat.filter((b) => b.role === "bot")).toHaveLength(6);
  });

  it("applies state changes to the right card", () => {
    const state = initConsole(miniEnv);
    const change: StateChange = {
      entity_id: "lamp_1",
      attribute: "power",
      old: false,
      new: true,
      clock: 3,
    };
    applyStateChange(state, change);
    expect(state.entities["lamp_1"].state["power"]).toBe(true);
    expect(state.clock).toBe(3);
    expect(state.feed.at(-1)?.text).toContain("lamp_1.power");
    expect(state.feed.at(-1)?.text).toContain("false -> true");
  });

  it("words firing records by outcome", () => {
    const state = initConsole(miniEnv);
    const base = {
      rule_id: "rule-1",
      event: { entity_id: "slot_1", attribute: "contains", old: "empty", new: "orb", clock: 1 },
      conditions_evaluated: [],
      emitted_events: [],
      clock: 1,
      error: null,
    };
    applyFiringRecord(state, { ...base, enabled: true, fired: true } as FiringRecord);
    applyFiringRecord(state, { ...base, enabled: true, fired: false } as FiringRecord);
    applyFiringRecord(state, { ...base, enabled: false, fired: false } as FiringRecord);
    expect(state.feed.map((f) => f.tone)).toEqual(["fired", "skipped", "skipped"]);
    expect(state.feed[1].text).toContain("conditions did not hold");
    expect(state.feed[2].text).toContain("disabled");
  });

  it("flashes the action targets and the source entity", () => {
    const record = {
      rule_id: "rule-1",
      event: { entity_id: "slot_1", attribute: "contains", old: "empty", new: "orb", clock: 1 },
      enabled: true,
      fired: true,
      conditions_evaluated: [],
      emitted_events: [
        { entity_id: "lamp_1", attribute: "power", old: false, new: true, clock: 1 },
      ],
      clock: 1,
      error: null,
    } as FiringRecord;
    expect(flashTargets(record).sort()).toEqual(["lamp_1", "slot_1"]);
  });

  it("gates sending on text and pending state", () => {
    expect(canSend("", false)).toBe(false);
    expect(canSend("   ", false)).toBe(false);
    expect(canSend("hi", true)).toBe(false);
    expect(canSend("hi", false)).toBe(true);
  });
});

describe("rendering", () => {
  it("escapes untrusted text", () => {
    expect(escapeHtml('<img src="x">')).toBe("&lt;img src=&quot;x&quot;&gt;");
    const state = initConsole(miniEnv);
    applyUserText(state, "<script>alert(1)</script>");
    expect(renderChat(state.chat)).not.toContain("<script>");
  });

  it("renders controls per schema", () => {
    expect(renderControl("lamp_1", boolAttr, true)).toContain('type="checkbox"');
    expect(renderControl("lamp_1", boolAttr, true)).toContain("checked");
    expect(renderControl("lamp_1", boolAttr, false)).not.toContain("checked");
    const slider = renderControl("lamp_1", boundedAttr, 70);
    expect(slider).toContain('type="range"');
    expect(slider).toContain('min="0"');
    expect(slider).toContain('max="100"');
    expect(slider).toContain("percent");
    const select = renderControl("slot_1", enumAttr, "sceptre");
    expect(select).toContain("<select");
    expect(select).toContain('<option value="sceptre" selected>');
    expect(renderControl("spk", stringAttr, "song.mp3")).toContain("song.mp3");
  });

  it("renders entity cards with name, kind and selection", () => {
    const state = initConsole(miniEnv);
    const html = renderEntityCard(state.entities["lamp_1"], state.kinds["light"], true, false);
    expect(html).toContain("the desk lamp");
    expect(html).toContain("badge-kind");
    expect(html).toContain("card-selected");
    expect(html).toContain('data-id="lamp_1"');
    const plain = renderEntityCard(state.entities["lamp_1"], state.kinds["light"], false, true);
    expect(plain).not.toContain("card-selected");
    expect(plain).toContain("card-flash");
  });

  it("renders automation cards with the canonical JSON view", () => {
    const automation: Automation = {
      id: "rule-1",
      alias: "play it",
      enabled: true,
      triggers: [{ entity: "slot_1", attribute: "contains", to: "sceptre" }],
      conditions: [],
      actions: [{ entity: "lamp_1", service: "turn_on", args: {} }],
    };
    const html = renderAutomationCard(automation);
    expect(html).toContain("play it");
    expect(html).toContain("1 trigger(s), 0 condition(s), 1 action(s)");
    expect(html).toContain(escapeHtml(canonicalJson(automation)));
  });

  it("marks only the latest stage badge active", () => {
    const html = renderStageBadges(["define", "explore"]);
    const active = html.match(/badge-active/g) ?? [];
    expect(active).toHaveLength(1);
    expect(html.indexOf("define")).toBeLessThan(html.indexOf("explore"));
    expect(renderStageBadges([])).toContain("no turns yet");
  });
});
