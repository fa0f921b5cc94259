#!/usr/bin/env python3
"""
Prompt templates: slot checking and the fixed instruction texts.
"""

import pytest

from errors import ContractError
from prompt_templates import (
    ALL_TEMPLATES,
    ATTITUDE_UPDATE,
    INITIAL_ATTITUDE,
    JSON_LESSON_PROMPT,
    LESSONS_HEADER,
    NEWS_LESSON,
    PREVIOUS_HEADER,
    RATING_EXP,
    RISK_SENTENCE,
    SOCIAL_NETWORK_USER,
    PromptTemplate,
)


def test_every_template_renders_with_its_slots():
    for template in ALL_TEMPLATES:
        values = {slot: 1.0 if slot == "rate" else f"<{slot}>" for slot in template.slots}
        text = template.render(**values)
        for slot in template.slots:
            if slot != "rate":
                assert f"<{slot}>" in text


def test_missing_slot_is_a_contract_error():
    with pytest.raises(ContractError) as info:
        NEWS_LESSON.render(news="x")
    assert "k" in str(info.value)
    assert PromptTemplate("t", "no slots").render() == "no slots"


def test_json_examples_survive_rendering():
    text = INITIAL_ATTITUDE.render()
    assert '{"reasoning": ,  "attitude_dist": }' in text
    assert RATING_EXP in text


def test_attitude_update_layout():
    text = ATTITUDE_UPDATE.render(week=3, risk="Calm week.", lessons="1. a (saliency: 1.00)", previous=[0.1, 0.2, 0.3, 0.4])
    assert text.startswith("This is week 3 since the COVID-19 outbreak. Calm week.")
    assert f"{LESSONS_HEADER}\n1. a (saliency: 1.00)\n{PREVIOUS_HEADER} [0.1, 0.2, 0.3, 0.4]." in text


def test_lesson_prompts_carry_json_instructions():
    text = NEWS_LESSON.render(news="Title: x", k=3)
    assert "Summarize at most 3 takeaways" in text
    assert text.endswith(JSON_LESSON_PROMPT)


def test_fixed_wording():
    assert RISK_SENTENCE.render(rate=12.0) == (
        "This week, 12.00% of emergency department visits in your area are related to COVID-19."
    )
    assert "separated by semicolon: A; B. Please ONLY provide" in SOCIAL_NETWORK_USER.render(others="A; B")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
