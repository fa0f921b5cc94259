#!/usr/bin/env python3
"""
Scripted backend: request classification, determinism, custom rules and the
policy/stance sensitivity the offline evaluation relies on.
"""

import json

import pytest

from content_logic import get_policy
from errors import ContractError
from llm_gateway import CompletionParams, extract_attitude, extract_lessons
from models import PolicyCategory, PolicyEffort
from persona_logic import load_marginals, profile_string, sample_population
from prompt_templates import AGENT_SYSTEM, ATTITUDE_UPDATE, INITIAL_ATTITUDE, JUDGE_MEMORY, POLICY_LESSON, TWEET_POST
from scripted_backend import (
    RequestKind,
    ScriptedRule,
    ScriptedRuleSet,
    STANCE_MARKERS,
    detect_kind,
    default_rules,
    hesitancy_to_distribution,
    scripted_backend,
)


PERSONA = sample_population(load_marginals(), 1, seed=0)[0]
SYSTEM = {"role": "system", "content": AGENT_SYSTEM.render(profile=profile_string(PERSONA))}


def _ask(provider, user, seed=1):
    return provider.complete([SYSTEM, {"role": "user", "content": user}], CompletionParams(seed=seed))


def _update(lessons, previous=(0.3, 0.2, 0.3, 0.2)):
    return ATTITUDE_UPDATE.render(week=4, risk="", lessons=lessons, previous=list(previous))


def _hesitancy(reply):
    _, values = extract_attitude(reply)
    return values[0] + values[1]


def test_detect_kind():
    assert detect_kind(SYSTEM["content"], INITIAL_ATTITUDE.render()) == RequestKind.ATTITUDE
    assert detect_kind(SYSTEM["content"], POLICY_LESSON.render(policy="x", k=3)) == RequestKind.LESSONS
    assert detect_kind(SYSTEM["content"], TWEET_POST.render(lessons="1. a")) == RequestKind.TWEET
    assert detect_kind(JUDGE_MEMORY.render(), "history") == RequestKind.JUDGE
    assert detect_kind("", "hello") == RequestKind.GENERIC


def test_replies_are_deterministic():
    prompt = INITIAL_ATTITUDE.render()
    assert _ask(scripted_backend(seed=2), prompt) == _ask(scripted_backend(seed=2), prompt)
    assert _ask(scripted_backend(seed=2), prompt) != _ask(scripted_backend(seed=3), prompt)


def test_initial_attitude_is_a_valid_distribution():
    reasoning, values = extract_attitude(_ask(scripted_backend(), INITIAL_ATTITUDE.render()))
    assert len(values) == 4
    assert sum(values) == pytest.approx(1.0, abs=1e-3)
    assert reasoning


def test_policy_lessons_echo_the_policy():
    strong = get_policy(PolicyCategory.INCENTIVE, PolicyEffort.STRONG)
    lessons = extract_lessons(_ask(scripted_backend(), POLICY_LESSON.render(policy=strong.description, k=3)))
    assert lessons[0][0] == "The government announced a policy: $50 cash card"
    assert lessons[0][1] == pytest.approx(0.9)


def test_strong_policy_moves_attitudes_more_than_weak():
    provider = scripted_backend()
    plain = _hesitancy(_ask(provider, _update("1. Nothing new (saliency: 1.00)")))
    weak = _hesitancy(_ask(provider, _update("1. The government announced a policy: $10 cash card (saliency: 1.00)")))
    strong = _hesitancy(_ask(provider, _update("1. The government announced a policy: $50 cash card (saliency: 1.00)")))
    assert strong < weak < plain


def test_news_stance_moves_attitudes():
    provider = scripted_backend()
    good = _hesitancy(_ask(provider, _update(f"1. I read that {STANCE_MARKERS[next(iter(STANCE_MARKERS))]} (saliency: 1.00)")))
    concern = "reports of serious vaccine side effects"
    bad = _hesitancy(_ask(provider, _update(f"1. I read that {concern} (saliency: 1.00)")))
    assert good < bad


def test_tweet_echoes_top_lesson():
    reply = _ask(scripted_backend(), TWEET_POST.render(lessons="1. Clinics are open late (saliency: 1.00)\n2. other (saliency: 0.00)"))
    assert reply == "Thinking about this week: Clinics are open late"


def test_judge_reply_parses():
    reply = scripted_backend().complete(
        [{"role": "system", "content": JUDGE_MEMORY.render()}, {"role": "user", "content": "history"}], CompletionParams()
    )
    assert json.loads(reply)["rating"] == "4"


def test_custom_rules_take_precedence_and_calls_are_counted():
    rules = default_rules().with_rules(
        ScriptedRule(RequestKind.ATTITUDE, "always-sure", lambda request: '{"reasoning": "sure", "attitude_dist": [0, 0, 0, 1]}')
    )
    provider = scripted_backend(rules)
    assert extract_attitude(_ask(provider, INITIAL_ATTITUDE.render())) == ("sure", [0, 0, 0, 1])
    assert provider.calls[RequestKind.ATTITUDE] == 1
    assert provider.total_calls == 1


def test_rule_sets_must_cover_every_kind():
    with pytest.raises(ContractError):
        ScriptedRuleSet(default_rules().rules[:3])


def test_distribution_helper():
    dist = hesitancy_to_distribution(0.4)
    assert dist[0] + dist[1] == pytest.approx(0.4)
    assert sum(dist) == pytest.approx(1.0)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
