import itertools
import json

import pytest

from ecabot.assets import prompt_text, script_path
from ecabot.engine import serialize_rules
from ecabot.environment import load_environment
from ecabot.errors import (
    ConfigError,
    EmptyDraftError,
    ReplySchemaError,
    RoutingFailureError,
)
from ecabot.orchestrator import (
    BOT_TURN_SCHEMA,
    BotTurn,
    DraftRule,
    Orchestrator,
    Stage,
    run_script,
    summarize_draft,
)
from ecabot.providers import (
    ChatMessage,
    CompletionRequest,
    ProviderBundle,
    Script,
    ScriptedProvider,
    ScriptStep,
    load_script,
)


def make_script(steps, scenario="vr-museum", turns=None, seeds=None):
    return Script(
        steps=[
            ScriptStep(
                match=s["match"],
                response=s["response"],
                is_regex=s.get("is_regex", False),
                consume=s.get("consume", True),
            )
            for s in steps
        ],
        scenario=scenario,
        turns=turns or [],
        seed_automations=seeds or [],
    )


def build(steps, scenario="vr-museum", seeds=None):
    script = make_script(steps, scenario=scenario, seeds=seeds)
    env = load_environment(scenario)
    from ecabot.engine import RuleStore, rule_from_dict

    store = RuleStore()
    for raw in seeds or []:
        store.add_rule(rule_from_dict(raw), env)
    orchestrator = Orchestrator(scenario, env, store, ProviderBundle.scripted(script))
    return orchestrator, orchestrator.new_state("t"), env, store


def reply(stage, message="ok", intent="continue", **extra):
    return {"stage": stage, "message": message, "intent": intent, **extra}


class RecordingProvider:
    def __init__(self, inner):
        self.inner = inner
        self.requests = []

    def complete(self, request):
        self.requests.append(request)
        return self.inner.complete(request)


class FailingRouter:
    def complete(self, request):
        raise ReplySchemaError("nonsense from the router")


# -- walkthrough: creating -------------------------------------------------------


def test_angie_walkthrough_stage_sequence_and_store():
    script = load_script(script_path("angie-vr"))
    state, store, env, _ = run_script(script)
    assert [s.value for s in state.stage_sequence()] == [
        "define", "explore", "refine", "refine", "confirm", "export",
    ]
    assert state.history == []  # cleared by the export
    assert state.draft.is_empty()
    assert state.mode == "create"
    rules = store.list_rules()
    assert len(rules) == 1
    rule = rules[0]
    assert rule.id == "rule-1"
    assert len(rule.triggers) == 1 and len(rule.conditions) == 1 and len(rule.actions) == 1
    assert rule.triggers[0].entity == "socket_above_nefertiti"
    assert rule.actions[0].args == {"file": "Egyptian Queen.mp3"}
    assert state.turn_log[-1].turn.message == "The automation has been saved."


def test_angie_draft_grows_monotonically():
    script = load_script(script_path("angie-vr"))
    env = load_environment("vr-museum")
    from ecabot.engine import RuleStore

    orch = Orchestrator("vr-museum", env, RuleStore(), ProviderBundle.scripted(script))
    state = orch.new_state("t")
    orch.step(state, script.turns[0])
    orch.step(state, script.turns[1])
    assert state.draft.is_empty()
    orch.step(state, script.turns[2])
    assert state.draft.triggers and state.draft.actions and not state.draft.conditions
    orch.step(state, script.turns[3])
    assert state.draft.conditions  # condition slot added, others untouched
    assert state.draft.triggers[0]["entity"] == "socket_above_nefertiti"
    orch.step(state, script.turns[4])
    assert state.pending_confirmation
    orch.step(state, script.turns[5])
    assert not state.pending_confirmation and state.draft.is_empty()


def test_replay_is_deterministic():
    script = load_script(script_path("angie-vr"))
    first, store_a, _, _ = run_script(script)
    second, store_b, _, _ = run_script(script)
    assert first.transcript_lines() == second.transcript_lines()
    assert serialize_rules(store_a) == serialize_rules(store_b)


# -- walkthrough: modifying ------------------------------------------------------


def test_bob_walkthrough_modifies_in_place():
    script = load_script(script_path("bob-modify-ar"))
    state, store, env, _ = run_script(script)
    assert [r.id for r in store] == ["rule-entrance-return", "rule-entrance-presence"]
    modified = store.get("rule-entrance-return")
    assert modified.triggers[0].entity == "gps_sensor"  # trigger untouched
    assert len(modified.conditions) == 1
    assert modified.conditions[0].entity == "ambient_light_sensor"
    untouched = store.get("rule-entrance-presence")
    assert untouched.conditions == []


def test_bob_disambiguation_lists_both_aliases():
    script = load_script(script_path("bob-modify-ar"))
    state, _, _, _ = run_script(script)
    disambiguation = state.turn_log[2].turn
    assert disambiguation.stage is Stage.Explore
    assert "Turn on the entrance light upon return" in disambiguation.message
    assert "Turn on the entrance light when presence is detected" in disambiguation.message
    bound = state.turn_log[3]
    assert bound.turn.stage is Stage.Refine


def test_modify_query_with_no_hits():
    steps = [
        {"match": "modify", "response": reply("define", set_mode="modify")},
        {"match": "unicorn", "response": reply("explore", message="",
                                               modify_query="the unicorn feeder")},
    ]
    orch, state, _, _ = build(steps)
    orch.step(state, "I want to modify something")
    turn = orch.step(state, "the unicorn feeder please")
    assert turn.stage is Stage.Explore
    assert "could not find" in turn.message.lower()
    assert state.mode == "modify"
    assert state.draft.target_rule_id is None


def test_set_mode_create_clears_target():
    seeds = [
        {
            "id": "rule-1",
            "alias": "light the spotlight when the button is pressed",
            "triggers": [{"entity": "info_button", "attribute": "pressed", "to": True}],
            "conditions": [],
            "actions": [{"entity": "spotlight_1", "service": "turn_on", "args": {}}],
        }
    ]
    steps = [
        {"match": "modify", "response": reply("define", set_mode="modify",
                                              modify_query="spotlight button")},
        {"match": "actually", "response": reply("define", set_mode="create")},
    ]
    orch, state, _, _ = build(steps, seeds=seeds)
    orch.step(state, "modify the spotlight thing")
    assert state.draft.target_rule_id == "rule-1"
    orch.step(state, "actually start over")
    assert state.mode == "create" and state.draft.target_rule_id is None


# -- routing ---------------------------------------------------------------------


def test_route_rejects_empty_text():
    orch, state, _, _ = build([{"match": ".*", "is_regex": True,
                                "response": reply("define")}])
    with pytest.raises(ConfigError):
        orch.route(state, "   ", "ctx")
    with pytest.raises(ConfigError):
        orch.step(state, "")


def test_router_export_reply_lands_on_confirm():
    steps = [{"match": ".*", "is_regex": True, "consume": False,
              "response": reply("export", intent="continue")}]
    orch, state, _, _ = build(steps)
    assert orch.route(state, "save it", "ctx") is Stage.Confirm


def test_router_failure_falls_back_to_previous_stage():
    script = make_script(
        [{"match": ".*", "is_regex": True, "consume": False,
          "response": reply("refine", message="still here")}]
    )
    scripted = ScriptedProvider(script)
    bundle = ProviderBundle(router=FailingRouter(), dialogue=scripted, export=scripted)
    env = load_environment("vr-museum")
    from ecabot.engine import RuleStore

    orch = Orchestrator("vr-museum", env, RuleStore(), bundle)
    state = orch.new_state("t")
    turn = orch.step(state, "hello?")
    assert turn.stage is Stage.Define  # fresh sessions fall back to the entry stage
    state.stage = Stage.Explore
    turn = orch.step(state, "and now?")
    assert turn.stage is Stage.Explore

    with pytest.raises(RoutingFailureError):
        orch.route(state, "direct call", "ctx")


# -- draft patching --------------------------------------------------------------


def test_bad_patch_becomes_clarification_turn():
    steps = [
        {"match": "haunt", "response": reply(
            "refine",
            draft_patch={"triggers": [{"entity": "ghost", "attribute": "boo", "to": True}]},
        )},
    ]
    orch, state, _, _ = build(steps)
    turn = orch.step(state, "haunt the gallery")
    assert turn.stage is Stage.Refine
    assert "could not apply" in turn.message.lower()
    assert state.draft.is_empty()  # nothing landed


def test_patch_replaces_slot_wholesale():
    steps = [
        {"match": "first", "response": reply(
            "refine",
            draft_patch={"triggers": [
                {"entity": "info_button", "attribute": "pressed", "to": True}]},
        )},
        {"match": "second", "response": reply(
            "refine",
            draft_patch={"triggers": [
                {"entity": "nefertiti_proximity", "attribute": "visitor_near", "to": True}]},
        )},
    ]
    orch, state, _, _ = build(steps)
    orch.step(state, "first trigger")
    orch.step(state, "second trigger replaces it")
    assert len(state.draft.triggers) == 1
    assert state.draft.triggers[0]["entity"] == "nefertiti_proximity"


# -- export gate -----------------------------------------------------------------


def full_draft_steps():
    return [
        {"match": "build", "response": reply(
            "refine",
            draft_patch={
                "alias": "light on button",
                "triggers": [{"entity": "info_button", "attribute": "pressed", "to": True}],
                "actions": [{"entity": "spotlight_1", "service": "turn_on", "args": {}}],
            },
        )},
        {"match": "confirm me", "response": reply("confirm", intent="ask-confirm")},
        {"match": "yes", "response": reply("confirm", message="Saved.", intent="export")},
    ]


def test_export_needs_prior_confirmation():
    steps = [
        full_draft_steps()[0],
        {"match": "yes", "response": reply("confirm", message="Saved.", intent="export")},
    ]
    orch, state, _, store = build(steps)
    orch.step(state, "build it")
    turn = orch.step(state, "yes save it")
    assert turn.stage is Stage.Refine
    assert "cannot save" in turn.message.lower()
    assert len(store) == 0


def test_export_needs_confirm_routing():
    steps = [
        full_draft_steps()[0],
        {"match": "confirm me", "response": reply("confirm", intent="ask-confirm")},
        {"match": "yes", "response": reply("refine", message="Saved.", intent="export")},
    ]
    orch, state, _, store = build(steps)
    orch.step(state, "build it")
    orch.step(state, "confirm me")
    turn = orch.step(state, "yes")
    assert turn.stage is Stage.Refine and len(store) == 0


def test_export_needs_complete_draft():
    steps = [
        {"match": "build", "response": reply(
            "refine",
            draft_patch={"triggers": [
                {"entity": "info_button", "attribute": "pressed", "to": True}]},
        )},
        {"match": "confirm me", "response": reply("confirm", intent="ask-confirm")},
        {"match": "yes", "response": reply("confirm", message="Saved.", intent="export")},
    ]
    orch, state, _, store = build(steps)
    orch.step(state, "build it")
    orch.step(state, "confirm me")
    turn = orch.step(state, "yes")
    assert turn.stage is Stage.Refine
    assert len(store) == 0
    assert state.pending_confirmation is False


def test_successful_export_rewrites_stage_and_resets():
    orch, state, _, store = build(full_draft_steps())
    orch.step(state, "build it")
    orch.step(state, "confirm me")
    turn = orch.step(state, "yes")
    assert turn.stage is Stage.Export
    assert turn.message == "Saved."
    assert len(store) == 1 and store.get("rule-1").alias == "light on button"
    assert state.history == [] and state.draft.is_empty()
    assert state.stage is Stage.Define


def test_declining_no_op_modification_is_not_saved():
    seeds = [
        {
            "id": "rule-1",
            "alias": "spotlight on button",
            "triggers": [{"entity": "info_button", "attribute": "pressed", "to": True}],
            "conditions": [{"entity": "nefertiti_proximity", "attribute": "visitor_near",
                            "op": "eq", "value": True}],
            "actions": [{"entity": "spotlight_1", "service": "turn_on", "args": {}}],
        }
    ]
    steps = [
        {"match": "modify", "response": reply("define", set_mode="modify",
                                              modify_query="spotlight button")},
        {"match": "same", "response": reply(
            "confirm",
            intent="ask-confirm",
            draft_patch={"conditions": [
                {"entity": "nefertiti_proximity", "attribute": "visitor_near",
                 "op": "eq", "value": True}]},
        )},
        {"match": "yes", "response": reply("confirm", message="Done.", intent="export")},
    ]
    orch, state, _, store = build(steps, seeds=seeds)
    orch.step(state, "modify the spotlight rule")
    orch.step(state, "keep the same condition")
    turn = orch.step(state, "yes")
    assert turn.stage is Stage.Refine  # nothing to change is not an export
    assert "cannot save" in turn.message.lower()
    assert store.get("rule-1").conditions[0].entity == "nefertiti_proximity"


def test_abort_resets_draft():
    steps = [
        full_draft_steps()[0],
        {"match": "forget", "response": reply("define", message="Okay.", intent="abort")},
    ]
    orch, state, _, _ = build(steps)
    orch.step(state, "build it")
    assert not state.draft.is_empty()
    orch.step(state, "forget it")
    assert state.draft.is_empty() and state.mode == "create"


# -- prompts and history ---------------------------------------------------------


def test_all_stage_prompts_exist_with_placeholders():
    for stage in Stage:
        for scenario in ("vr-museum", "ar-home"):
            text = prompt_text(stage.value, scenario)
            assert "{{CONTEXT}}" in text and "{{AUTOMATIONS}}" in text


def test_prompt_placeholders_are_filled():
    script = make_script(
        [{"match": ".*", "is_regex": True, "consume": False, "response": reply("define")}]
    )
    scripted = RecordingProvider(ScriptedProvider(script))
    bundle = ProviderBundle(router=scripted, dialogue=scripted, export=scripted)
    env = load_environment("vr-museum")
    from ecabot.engine import RuleStore

    orch = Orchestrator("vr-museum", env, RuleStore(), bundle)
    orch.step(orch.new_state("t"), "hello")
    dialogue_requests = [r for r in scripted.requests if r.instance == "dialogue"]
    system = dialogue_requests[0].messages[0].content
    assert "{{CONTEXT}}" not in system and "{{AUTOMATIONS}}" not in system
    assert "FOCUS" in system and "OBJECTS" in system


def test_history_accumulates_until_export():
    orch, state, _, _ = build(full_draft_steps())
    orch.step(state, "build it")
    assert [m.role for m in state.history] == ["user", "assistant"]
    orch.step(state, "confirm me")
    assert len(state.history) == 4
    orch.step(state, "yes")
    assert state.history == []


def test_turn_log_serializes_to_json_lines():
    script = load_script(script_path("angie-vr"))
    state, _, _, _ = run_script(script)
    lines = state.transcript_lines()
    assert len(lines) == 6
    for line in lines:
        record = json.loads(line)
        assert set(record) == {"user", "routed_stage", "turn"}
        assert record["turn"]["stage"] in [s.value for s in Stage]


# -- free stage movement ----------------------------------------------------------


@pytest.mark.parametrize(
    "first,second",
    list(itertools.product(["define", "explore", "refine", "confirm"], repeat=2)),
)
def test_every_stage_pair_is_accepted(first, second):
    steps = [
        {"match": "alpha", "response": reply(first, message="one")},
        {"match": "beta", "response": reply(second, message="two")},
    ]
    orch, state, _, _ = build(steps)
    orch.step(state, "alpha")
    orch.step(state, "beta")
    assert [s.value for s in state.stage_sequence()] == [first, second]


# -- draft summaries ---------------------------------------------------------------


def test_summarize_draft_requires_content(vr_env):
    with pytest.raises(EmptyDraftError):
        summarize_draft(DraftRule(), vr_env)


def test_summarize_draft_angie(vr_env):
    draft = DraftRule(
        triggers=[{"entity": "socket_above_nefertiti", "attribute": "contains",
                   "to": "sceptre"}],
        conditions=[{"entity": "nefertiti_proximity", "attribute": "visitor_near",
                     "op": "eq", "value": True}],
        actions=[{"entity": "speaker_nefertiti", "service": "play_media",
                  "args": {"file": "Egyptian Queen.mp3"}}],
    )
    sentence = summarize_draft(draft, vr_env)
    assert "Egyptian Queen.mp3" in sentence
    assert "the statue of Nefertiti" in sentence
    assert "but only if" in sentence
    for entity_id in vr_env.entities:
        assert entity_id not in sentence


def test_bot_turn_round_trip():
    turn = BotTurn.from_reply(
        {"stage": "refine", "message": "m", "intent": "continue",
         "draft_patch": {"alias": "x"}}
    )
    assert turn.to_dict() == {
        "stage": "refine", "message": "m", "intent": "continue",
        "draft_patch": {"alias": "x"},
    }


def test_bot_turn_schema_rejects_extras():
    import jsonschema

    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate(
            {"stage": "refine", "message": "m", "intent": "continue", "mood": "smug"},
            BOT_TURN_SCHEMA,
        )
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate({"stage": "refine", "message": "m"}, BOT_TURN_SCHEMA)
