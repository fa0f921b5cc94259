#!/usr/bin/env python3
"""
Content sources: news corpus files and mix views, scripted news generation,
the policy catalog, and the weekly risk series.
"""

import json

import numpy as np
import pytest

from content_logic import (
    build_corpus_view,
    builtin_policies,
    generate_corpus,
    generate_news,
    get_policy,
    load_exemplars,
    load_news_corpus,
    load_policies,
    load_risk_series,
    placeholder_exemplars,
    read_news_corpus,
    resolve_policy,
    risk_at,
    risk_sentence,
    save_news_corpus,
    save_policies,
    save_risk_series,
    synthetic_risk_series,
)
from errors import ConfigError, ContractError, CorpusError, PartialCorpusError, RiskSeriesLoadError
from models import NewsGroup, NewsItem, Policy, PolicyCategory, PolicyEffort, RiskPoint, RiskSeries, StanceType
from scripted_backend import STANCE_MARKERS, scripted_backend


def _corpus(n_pos, n_neg):
    items = [NewsItem(id=f"p{i}", text=f"good {i}", stance_type=StanceType.VACCINE_BENEFIT) for i in range(n_pos)]
    items += [NewsItem(id=f"n{i}", text=f"bad {i}", stance_type=StanceType.VACCINE_CONCERN) for i in range(n_neg)]
    return items


class DownAfter:
    provider_id = "down"

    def __init__(self, limit):
        self.inner = scripted_backend()
        self.limit = limit
        self.calls = 0

    def complete(self, messages, params):
        self.calls += 1
        if self.calls > self.limit:
            raise RuntimeError("quota exceeded")
        return self.inner.complete(messages, params)


# --- News ------------------------------------------------------------------------------------


def test_stance_groups():
    assert NewsItem(id="a", text="", stance_type=StanceType.HIGH_DISRUPTION).group == NewsGroup.POS
    assert NewsItem(id="b", text="", stance_type=StanceType.LOW_DISRUPTION).group == NewsGroup.NEG


def test_corpus_view_balances_mix():
    items = _corpus(600, 400)
    view = build_corpus_view(items, 0.5, np.random.default_rng(0))
    assert (view.pos, view.neg, len(view)) == (400, 400, 800)
    # corpus order is preserved
    order = [item.id for item in items if item in view.items]
    assert [item.id for item in view.items] == order


def test_corpus_view_extremes_and_errors():
    items = _corpus(6, 4)
    assert len(build_corpus_view(items, 1.0, np.random.default_rng(0))) == 6
    assert all(item.group == NewsGroup.NEG for item in build_corpus_view(items, 0.0, np.random.default_rng(0)).items)
    with pytest.raises(CorpusError):
        build_corpus_view(_corpus(5, 0), 0.5, np.random.default_rng(0))
    with pytest.raises(ConfigError):
        build_corpus_view(items, 1.5, np.random.default_rng(0))


def test_corpus_file_round_trip(tmp_path):
    path = tmp_path / "news.jsonl"
    items = _corpus(3, 3)
    save_news_corpus(items, path)
    assert read_news_corpus(path) == items
    view = load_news_corpus(path, mix=0.5, seed=1)
    assert view.pos == 3 and view.neg == 3


def test_corpus_file_errors(tmp_path):
    with pytest.raises(CorpusError):
        read_news_corpus(tmp_path / "missing.jsonl")

    path = tmp_path / "news.jsonl"
    path.write_text('{"id": "a", "stance_type": "vaccine_benefit", "text": "x"}\n{"id": "b", "stance_type": "rumour"}\n')
    with pytest.raises(CorpusError) as info:
        read_news_corpus(path)
    assert ":2:" in str(info.value)

    path.write_text('{"id": "a", "stance_type": "vaccine_benefit", "text": "x"}\n' * 2)
    with pytest.raises(CorpusError):
        read_news_corpus(path)

    path.write_text("\n")
    with pytest.raises(CorpusError):
        load_news_corpus(path)


def test_exemplars(tmp_path):
    assert len(placeholder_exemplars()) == 8
    assert load_exemplars(None) == placeholder_exemplars()
    path = tmp_path / "few.json"
    path.write_text(json.dumps(["one", "two"]))
    assert load_exemplars(path) == ["one", "two"]
    path.write_text(json.dumps({"exemplars": ["three"]}))
    assert load_exemplars(path) == ["three"]
    path.write_text(json.dumps({"exemplars": [""]}))
    with pytest.raises(ConfigError):
        load_exemplars(path)


def test_generate_news_is_seeded_and_on_stance():
    few_shot = placeholder_exemplars()
    first = generate_news(scripted_backend(), StanceType.VACCINE_CONCERN, 3, few_shot, seed=5)
    second = generate_news(scripted_backend(), StanceType.VACCINE_CONCERN, 3, few_shot, seed=5)
    assert first == second
    assert [item.id for item in first] == ["vaccine_concern-00000", "vaccine_concern-00001", "vaccine_concern-00002"]
    assert all(STANCE_MARKERS[StanceType.VACCINE_CONCERN] in item.text for item in first)

    assert generate_news(scripted_backend(), StanceType.VACCINE_BENEFIT, 0, few_shot) == []
    with pytest.raises(ContractError):
        generate_news(scripted_backend(), StanceType.VACCINE_BENEFIT, -1, few_shot)
    with pytest.raises(ContractError):
        generate_news(scripted_backend(), StanceType.VACCINE_BENEFIT, 2, [])


def test_generate_corpus_splits_stances(tmp_path):
    path = tmp_path / "news.jsonl"
    corpus = generate_corpus(scripted_backend(), 10, placeholder_exemplars(), output_path=path)
    counts = {stance: sum(item.stance_type == stance for item in corpus) for stance in StanceType}
    assert list(counts.values()) == [3, 3, 2, 2]
    assert read_news_corpus(path) == corpus


def test_partial_corpus_is_saved(tmp_path):
    path = tmp_path / "news.jsonl"
    with pytest.raises(PartialCorpusError) as info:
        generate_corpus(DownAfter(limit=5), 8, placeholder_exemplars(), output_path=path, parallelism=1, max_retries=1)
    assert len(info.value.items) == 5
    assert len(read_news_corpus(path)) == 5


# --- Policies --------------------------------------------------------------------------------


def test_builtin_catalog():
    policies = builtin_policies()
    assert len(policies) == 6
    assert {policy.label for policy in policies} == {
        "Weak Incentive",
        "Strong Incentive",
        "Weak Ambassador",
        "Strong Ambassador",
        "Weak Mandate",
        "Strong Mandate",
    }
    strong = get_policy(PolicyCategory.INCENTIVE, PolicyEffort.STRONG)
    assert "$50 cash card" in strong.description


def test_policy_catalog_override(tmp_path):
    path = tmp_path / "policies.json"
    custom = [Policy(category=PolicyCategory.MANDATE, effort=PolicyEffort.WEAK, description="Masks please.")]
    save_policies(custom, path)
    loaded = load_policies(path)
    assert loaded == custom
    assert get_policy(PolicyCategory.MANDATE, PolicyEffort.WEAK, loaded).description == "Masks please."
    with pytest.raises(ConfigError):
        get_policy(PolicyCategory.INCENTIVE, PolicyEffort.WEAK, loaded)

    bare = Policy(category=PolicyCategory.MANDATE, effort=PolicyEffort.WEAK)
    assert resolve_policy(bare, loaded).description == "Masks please."
    assert resolve_policy(None) is None


@pytest.mark.parametrize(
    "payload",
    [
        [{"category": "mandate", "effort": "weak"}],
        [{"category": "mandate", "effort": "weak", "description": "a"}, {"category": "mandate", "effort": "weak", "description": "b"}],
        [{"category": "lottery", "effort": "weak", "description": "a"}],
    ],
)
def test_policy_catalog_errors(tmp_path, payload):
    path = tmp_path / "policies.json"
    path.write_text(json.dumps(payload))
    with pytest.raises(ConfigError):
        load_policies(path)


# --- Risk ------------------------------------------------------------------------------------


def test_risk_csv_with_and_without_header(tmp_path):
    path = tmp_path / "risk.csv"
    path.write_text("week,rate\n0,1.5\n1,2.25\n")
    series = load_risk_series(path)
    assert [(p.week, p.rate) for p in series.points] == [(0, 1.5), (1, 2.25)]

    path.write_text("0,1.5\n3,4\n")
    assert [p.week for p in load_risk_series(path).points] == [0, 3]


@pytest.mark.parametrize(
    "text",
    ["week,rate\n0,abc\n", "0,-1\n", "0.5,1\n", "0,1,2\n", "0,1\n0,2\n", "week,rate\n"],
)
def test_risk_csv_errors(tmp_path, text):
    path = tmp_path / "risk.csv"
    path.write_text(text)
    with pytest.raises(RiskSeriesLoadError):
        load_risk_series(path)


def test_risk_csv_missing(tmp_path):
    with pytest.raises(RiskSeriesLoadError):
        load_risk_series(tmp_path / "missing.csv")


def test_risk_series_save_load(tmp_path):
    series = synthetic_risk_series(6)
    path = tmp_path / "risk.csv"
    save_risk_series(series, path)
    assert load_risk_series(path) == series


def test_risk_lookup_is_a_step_function():
    series = RiskSeries(points=[RiskPoint(week=2, rate=1.0), RiskPoint(week=4, rate=2.0), RiskPoint(week=7, rate=3.0)])
    assert risk_at(series, 0) == 1.0
    assert risk_at(series, 3) == 1.0
    assert risk_at(series, 4) == 2.0
    assert risk_at(series, 6) == 2.0
    assert risk_at(series, 7) == 3.0
    assert risk_at(series, 30) == 3.0


def test_synthetic_series_shape():
    series = synthetic_risk_series(20)
    rates = [p.rate for p in series.points]
    assert len(rates) == 20
    assert rates.index(max(rates)) == 8
    assert max(rates) == pytest.approx(9.0)
    assert min(rates) >= 1.0

    noisy = synthetic_risk_series(10, noise=0.5, rng=np.random.default_rng(2))
    assert noisy == synthetic_risk_series(10, noise=0.5, rng=np.random.default_rng(2))
    assert all(p.rate >= 0 for p in noisy.points)
    with pytest.raises(ContractError):
        synthetic_risk_series(0)
    with pytest.raises(ContractError):
        synthetic_risk_series(10, noise=0.5)


def test_risk_sentence():
    assert risk_sentence(3.456) == "This week, 3.46% of emergency department visits in your area are related to COVID-19."


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
