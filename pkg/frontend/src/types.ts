// Wire types for the automation service's JSON surface. Field names match
// the server payloads exactly; everything here is plain data.

export type Scalar = string | number | boolean;

export type Stage = "define" | "explore" | "refine" | "confirm" | "export";

export type Intent = "continue" | "ask-confirm" | "export" | "abort";

export type AttributeSchema = {
  name: string;
  kind: "bool" | "number" | "string" | "enum" | "media";
  default: Scalar;
  unit?: string;
  min?: number;
  max?: number;
  enum?: string[];
};

export type ServiceParam = {
  name: string;
  kind: string;
  required?: boolean;
  enum?: string[];
};

export type ServiceEffect = {
  attribute: string;
  value?: Scalar;
  param?: string;
};

export type ServiceSchema = {
  name: string;
  params: ServiceParam[];
  effects: ServiceEffect[];
};

export type KindSchema = {
  kind: string;
  attributes: AttributeSchema[];
  services: ServiceSchema[];
};

export type EntitySnapshot = {
  id: string;
  kind: string;
  display_name: string;
  state: Record<string, Scalar>;
  media_library?: string[];
};

export type EnvironmentSnapshot = {
  scenario_id: string;
  clock: number;
  entities: EntitySnapshot[];
  taxonomy: KindSchema[];
};

export type Trigger = {
  entity: string;
  attribute: string;
  from?: Scalar;
  to?: Scalar;
};

export type Condition = {
  entity: string;
  attribute: string;
  op: "eq" | "ne" | "lt" | "le" | "gt" | "ge";
  value: Scalar;
};

export type ActionCall = {
  entity: string;
  service: string;
  args: Record<string, Scalar>;
};

export type Automation = {
  id: string;
  alias: string;
  enabled: boolean;
  triggers: Trigger[];
  conditions: Condition[];
  actions: ActionCall[];
};

export type DraftPatch = {
  alias?: string;
  target_rule_id?: string;
  triggers?: Trigger[];
  conditions?: Condition[];
  actions?: ActionCall[];
};

export type BotTurn = {
  stage: Stage;
  message: string;
  intent: Intent;
  draft_patch?: DraftPatch;
  set_mode?: "create" | "modify";
  modify_query?: string;
};

export type DraftDigest = {
  alias: string | null;
  triggers: Trigger[] | null;
  conditions: Condition[] | null;
  actions: ActionCall[] | null;
  target_rule_id: string | null;
};

export type SessionDigest = {
  stage: Stage;
  mode: "create" | "modify";
  pending_confirmation: boolean;
  draft: DraftDigest;
  turn_count: number;
};

export type SessionInfo = {
  session_id: string;
  scenario: string;
  greeting: BotTurn;
};

export type TurnResponse = {
  turn: BotTurn;
  state: SessionDigest;
};

export type StateChange = {
  entity_id: string;
  attribute: string;
  old: Scalar;
  new: Scalar;
  clock: number;
};

export type ConditionCheck = {
  condition: Condition;
  holds: boolean;
};

export type FiringRecord = {
  rule_id: string;
  event: StateChange;
  enabled: boolean;
  conditions_evaluated: ConditionCheck[];
  fired: boolean;
  emitted_events: StateChange[];
  clock: number;
  error: string | null;
};

export type InjectResult = {
  event: StateChange | null;
  firing_records: FiringRecord[];
};

export type TickResult = {
  clock: number;
  events: StateChange[];
  firing_records: FiringRecord[];
};

export type FocusSelection = {
  framed?: string[];
  pointed?: string;
  grabbed?: string;
  proximate?: string[];
};

export type TransitionMatrix = {
  stages: Stage[];
  counts: number[][];
  total_turns: number;
  normalized: number[][];
};
