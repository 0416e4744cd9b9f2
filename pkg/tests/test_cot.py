"""
Tests for template parsing, prompt assembly and decision parsing.
"""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from app_config import NONE_AVAILABLE
from business.exceptions.errors import (
    AmbiguousDecisionError,
    MissingPlaceholderValueError,
    SchemaError,
    UnknownPlaceholderError,
)
from business.models.cot import CoTTemplate
from business.models.memory import MemoryEntry
from business.models.survey import EvacuationChoice
from business.services.cot_service import (
    assemble_cot,
    load_template,
    parse_decision,
    reflexion_prompt,
    render,
    render_examples,
    render_extras,
    request_decision,
    substitute,
)
from business.services.llm_service import ScriptedLlmClient

TEMPLATE = """---
template_id: t1
placeholders: [Risk, Extras]
---
[system]
System text.
[user]
Risk: {Risk}
Extras: {Extras}
"""

SURVEY = "- How far away was the fire when you first noticed it: 2 miles\n- Did you see smoke or flames: Yes"
RISK = "Moderate risk (risk score 3 of 5)"


def _entry(**overrides):
    values = dict(
        entry_id=0, record_id="R1", cot_text="original prompt", context_text="- Do you have pets: yes",
        rationale_text="They had an order, so YES.", correct_decision=EvacuationChoice.STAY,
        predicted_decision=EvacuationChoice.EVACUATE, key_embedding=[1.0, 0.0],
    )
    values.update(overrides)
    return MemoryEntry(**values)


# ---------------------------------------------------------------------
# Templates
# ---------------------------------------------------------------------
def test_parse_template_sections():
    t = CoTTemplate.parse(TEMPLATE)
    assert t.template_id == "t1"
    assert t.system_text == "System text."
    assert t.user_text == "Risk: {Risk}\nExtras: {Extras}"
    assert t.used_placeholders() == ["Extras", "Risk"]


def test_template_without_front_matter():
    with pytest.raises(SchemaError):
        CoTTemplate.parse("[system]\nx\n[user]\ny\n")


def test_template_without_user_section():
    with pytest.raises(SchemaError):
        CoTTemplate.parse("---\ntemplate_id: t\n---\n[system]\nonly system\n")


def test_unknown_placeholder():
    with pytest.raises(UnknownPlaceholderError):
        CoTTemplate.parse(TEMPLATE.replace("{Extras}", "{Weather}"))


def test_undeclared_placeholder():
    with pytest.raises(UnknownPlaceholderError):
        CoTTemplate.parse(TEMPLATE.replace("placeholders: [Risk, Extras]", "placeholders: [Risk]"))


@pytest.mark.parametrize("name", ["threat", "risk", "decision_cot", "decision_direct", "baseline_direct", "reflexion"])
def test_shipped_templates_load(name):
    assert load_template(name).template_id == f"{name}_v1"


# ---------------------------------------------------------------------
# Substitution and blocks
# ---------------------------------------------------------------------
def test_substitution_is_single_pass():
    assert substitute("{Risk} {Extras}", {"Risk": "{Extras}", "Extras": "x"}) == "{Extras} x"


def test_missing_placeholder_value():
    with pytest.raises(MissingPlaceholderValueError):
        substitute("{Risk}", {})


def test_render_examples_empty():
    assert render_examples([]) == NONE_AVAILABLE


def test_render_examples_with_reflection():
    block = render_examples([_entry(reflection_text="The order was ignored.")])
    assert block == (
        "\nExample 1:\n"
        "Context: - Do you have pets: yes\n"
        "Reasoning: They had an order, so YES.\n"
        "Correct decision: the resident stayed\n"
        "Reflection: The order was ignored."
    )


def test_render_extras_skips_blanks():
    assert render_extras(["", "  "]) == NONE_AVAILABLE
    assert render_extras([" drove north ", "with the dog"]) == "drove north with the dog"


def _as_golden(system, user):
    return f"[system]\n{system}\n[user]\n{user}\n"


def _golden(golden_dir, name):
    return (golden_dir / name).read_text(encoding="utf-8")


def test_threat_prompt_matches_golden(golden_dir):
    system, user = render(load_template("threat"), {"Survey": SURVEY})
    assert _as_golden(system, user) == _golden(golden_dir, "threat_prompt.txt")


def test_risk_prompt_matches_golden(golden_dir):
    perception = "The resident saw flames nearby and feared for their safety"
    system, user = render(load_template("risk"), {"Perception": perception, "Survey": SURVEY})
    assert _as_golden(system, user) == _golden(golden_dir, "risk_prompt.txt")


def test_decision_prompt_matches_golden(golden_dir):
    example = _entry(reflection_text="The order covered the next zone, not theirs.")
    cot = assemble_cot(load_template("decision_cot"), RISK, ["stayed to defend"], [example], "R9")
    assert cot.template_id == "decision_cot_v1"
    assert cot.record_id == "R9"
    assert _as_golden(cot.rendered_system, cot.rendered_user) == _golden(golden_dir, "decision_cot.txt")


def test_decision_prompt_without_cot_matches_golden(golden_dir):
    cot = assemble_cot(load_template("decision_direct"), RISK, ["stayed to defend"], [])
    assert _as_golden(cot.rendered_system, cot.rendered_user) == _golden(golden_dir, "decision_direct.txt")
    assert cot.components["examples_block"] == NONE_AVAILABLE


# ---------------------------------------------------------------------
# Decisions
# ---------------------------------------------------------------------
@pytest.mark.parametrize("text,expected", [
    ("Step 1 ... Conclusion: YES", EvacuationChoice.EVACUATE),
    ("so the answer is no.", EvacuationChoice.STAY),
    ("**NO**", EvacuationChoice.STAY),
])
def test_parse_decision(text, expected):
    decision = parse_decision(text)
    assert decision.value is expected
    assert decision.rationale_text == text


def test_parse_decision_reads_only_the_tail():
    text = "Yes, the order was received. " + "a" * 300 + " Conclusion: NO"
    assert parse_decision(text).value is EvacuationChoice.STAY


@given(st.text(alphabet="abcdefghijklm .,:\n", max_size=400))
def test_trailing_yes_decides_evacuate(response):
    assert parse_decision(response + " YES").value is EvacuationChoice.EVACUATE
    assert parse_decision(response + " NO").value is EvacuationChoice.STAY


@pytest.mark.parametrize("text", ["yes and no", "nothing conclusive", "", "   "])
def test_ambiguous_decision(text):
    with pytest.raises(AmbiguousDecisionError):
        parse_decision(text)


def test_ambiguous_reply_gets_one_clarification():
    llm = ScriptedLlmClient([
        {"match": "Answer only YES or NO", "response": "NO"},
        {"match": "whether the resident", "response": "Hard to say."},
    ])
    decision = request_decision(llm, llm.new_request("sys", "Decide whether the resident evacuated.", "predict:R1:decision"))
    assert decision.value is EvacuationChoice.STAY
    assert decision.rationale_text == "Hard to say."
    assert [c["request_id"] for c in llm.calls] == ["predict:R1:decision", "predict:R1:decision:clarify"]


def test_clarification_that_stays_ambiguous():
    llm = ScriptedLlmClient([{"match": "resident", "response": "Unclear.", "repeat": True}])
    with pytest.raises(AmbiguousDecisionError):
        request_decision(llm, llm.new_request("sys", "Did the resident leave?", "predict:R1:decision"))


def test_reflexion_prompt_carries_the_true_label():
    system, user = reflexion_prompt(_entry())
    assert user.startswith("original prompt\n\nPrevious answer:\nThey had an order, so YES.")
    assert "this resident stayed from the wildfire" in user
    assert user.endswith("on why the resident stayed:")
    assert system.startswith("You are an advanced reasoning agent")
