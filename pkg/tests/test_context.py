import re

import pytest

from ecabot.context import (
    FocusState,
    capture,
    describe_action,
    describe_condition,
    describe_trigger,
    render_text,
    summarize_slots,
)
from ecabot.engine import Action, Condition, EcaRule, RuleStore, Trigger
from ecabot.environment import environment_from_dict
from ecabot.errors import BudgetTooSmallError, UnknownEntityError


def big_env(n=100):
    return environment_from_dict(
        {
            "scenario_id": "warehouse",
            "taxonomy": [
                {
                    "kind": "widget",
                    "attributes": [
                        {"name": "active", "kind": "bool", "default": False},
                        {"name": "level", "kind": "number", "default": 0,
                         "minimum": 0, "maximum": 100},
                    ],
                    "services": [
                        {"name": "enable", "effects": [{"attribute": "active", "value": True}]}
                    ],
                }
            ],
            "entities": [
                {"id": f"w{i:03}", "kind": "widget", "display_name": f"widget {i}"}
                for i in range(n)
            ],
        }
    )


def test_capture_focus_passthrough(vr_env):
    focus = FocusState(framed=["nefertiti_statue"], proximate=["nefertiti_proximity"])
    snapshot = capture(vr_env, focus)
    assert snapshot.focus.framed == ["nefertiti_statue"]
    assert snapshot.focus.proximate == ["nefertiti_proximity"]
    assert snapshot.scenario_id == "vr-museum"


def test_capture_empty_focus_still_digests_everything(vr_env):
    snapshot = capture(vr_env, FocusState())
    assert snapshot.focus.is_empty()
    assert len(snapshot.objects) == len(vr_env.entities)
    assert [d.entity_id for d in snapshot.objects] == sorted(vr_env.entities)


def test_capture_rejects_unknown_focus(vr_env):
    with pytest.raises(UnknownEntityError):
        capture(vr_env, FocusState(framed=["atlantis"]))
    with pytest.raises(UnknownEntityError):
        capture(vr_env, FocusState(pointed="atlantis"))


def test_capture_includes_automation_digest(ar_env):
    store = RuleStore()
    store.add_rule(
        EcaRule(
            id="rule-entrance-return",
            alias="Turn on the entrance light upon return",
            triggers=[Trigger("gps_sensor", "near_home", to=True)],
            conditions=[],
            actions=[Action("entrance_light", "turn_on", {})],
        ),
        ar_env,
    )
    snapshot = capture(ar_env, FocusState(), store)
    assert len(snapshot.automations) == 1
    digest = snapshot.automations[0]
    assert "entrance" in digest.alias
    assert "the entrance light" in digest.summary


def test_capture_is_a_snapshot_not_a_view(vr_env):
    snapshot = capture(vr_env, FocusState())
    vr_env.set_state("spotlight_1", "power", True)
    spotlight = next(d for d in snapshot.objects if d.entity_id == "spotlight_1")
    assert spotlight.attributes["power"] is False


def test_render_sections_in_fixed_order(vr_env):
    text = render_text(capture(vr_env, FocusState()))
    positions = [text.index(h) for h in ("FOCUS", "OBJECTS", "AUTOMATIONS", "CLOCK")]
    assert positions == sorted(positions)
    assert "(none)" in text  # no automations yet


def test_render_is_deterministic(vr_env):
    focus = FocusState(framed=["nefertiti_statue"])
    a = render_text(capture(vr_env, focus), 4000)
    b = render_text(capture(vr_env, focus), 4000)
    assert a == b


def test_render_rejects_tiny_budget(vr_env):
    with pytest.raises(BudgetTooSmallError):
        render_text(capture(vr_env, FocusState()), 499)


def test_render_truncates_unfocused_objects_first():
    env = big_env()
    focus = FocusState(framed=["w050"], pointed="w071", proximate=["w090"])
    text = render_text(capture(env, focus), 2000)
    assert len(text) <= 2000
    assert "objects omitted" in text
    for focused in ("w050", "w071", "w090"):
        assert focused in text
    # focused objects come first in the OBJECTS section, frame before pointer
    assert text.index("w050") < text.index("w071") < text.index("w090")


def test_render_mentions_no_phantom_entities():
    env = big_env(20)
    text = render_text(capture(env, FocusState(framed=["w003"])), 6000)
    for token in re.findall(r"\bw\d{3}\b", text):
        assert token in env.entities


def test_budget_too_small_even_after_truncation():
    env = big_env()
    focus = FocusState(framed=[f"w{i:03}" for i in range(60)])
    with pytest.raises(BudgetTooSmallError):
        render_text(capture(env, focus), 600)


def test_large_budget_keeps_everything():
    env = big_env(30)
    text = render_text(capture(env, FocusState()), 50_000)
    assert "objects omitted" not in text
    for i in range(30):
        assert f"w{i:03}" in text


# -- deterministic English ------------------------------------------------------


def test_describe_trigger_forms(vr_env):
    to_only = describe_trigger(
        {"entity": "socket_above_nefertiti", "attribute": "contains", "to": "sceptre"}, vr_env
    )
    assert to_only == "contains of the container above the statue of Nefertiti becomes 'sceptre'"
    both = describe_trigger(
        {"entity": "spotlight_1", "attribute": "power", "from": False, "to": True}, vr_env
    )
    assert "changes from false to true" in both
    bare = describe_trigger({"entity": "spotlight_1", "attribute": "power"}, vr_env)
    assert bare.endswith("changes")


def test_describe_condition_forms(ar_env):
    dark = describe_condition(
        {"entity": "ambient_light_sensor", "attribute": "is_dark", "op": "eq", "value": True},
        ar_env,
    )
    assert dark == "the outdoor light sensor is dark"
    not_dark = describe_condition(
        {"entity": "ambient_light_sensor", "attribute": "is_dark", "op": "eq", "value": False},
        ar_env,
    )
    assert not_dark == "the outdoor light sensor is not dark"
    level = describe_condition(
        {"entity": "ambient_light_sensor", "attribute": "lux", "op": "lt", "value": 40}, ar_env
    )
    assert level == "lux of the outdoor light sensor is below 40"


def test_describe_action_includes_args(vr_env):
    text = describe_action(
        {
            "entity": "speaker_nefertiti",
            "service": "play_media",
            "args": {"file": "Egyptian Queen.mp3"},
        },
        vr_env,
    )
    assert text == "play media the audio guide by the statue of Nefertiti (file='Egyptian Queen.mp3')"


def test_summary_uses_display_names_never_ids(vr_env):
    sentence = summarize_slots(
        [{"entity": "socket_above_nefertiti", "attribute": "contains", "to": "sceptre"}],
        [{"entity": "nefertiti_proximity", "attribute": "visitor_near", "op": "eq", "value": True}],
        [{"entity": "speaker_nefertiti", "service": "play_media",
          "args": {"file": "Egyptian Queen.mp3"}}],
        vr_env,
    )
    for entity_id in vr_env.entities:
        assert entity_id not in sentence
    assert "but only if" in sentence
    assert "when" in sentence


def test_summary_partial_markers(vr_env):
    no_action = summarize_slots(
        [{"entity": "info_button", "attribute": "pressed", "to": True}], [], [], vr_env
    )
    assert "(action not yet set)" in no_action
    no_trigger = summarize_slots(
        [], [], [{"entity": "spotlight_1", "service": "turn_on", "args": {}}], vr_env
    )
    assert "(trigger not yet set)" in no_trigger
