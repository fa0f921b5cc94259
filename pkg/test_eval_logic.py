#!/usr/bin/env python3
"""
Evaluation harness: rank agreement with the bundled expert table, Borda
aggregation, trajectory error, tables, the LLM judge and analysis reports.
"""

import json
import logging

import numpy as np
import pandas as pd
import pytest
from scipy import stats

from errors import AggregationError, ComparisonError, ConfigError, ProtocolError
from eval_logic import (
    analysis_report,
    borda_aggregate,
    borda_points,
    compare_rankings,
    delta_h,
    drift,
    kendall_tau_b,
    load_rankings_table,
    load_reference_series,
    mae_vs_reference,
    metrics_table,
    p1_align,
    p4_judge,
    rank_by_reduction,
    tau_asymptotic_pvalue,
    tau_exact_pvalue,
    tau_pvalue,
    trajectory_table,
)
from models import HesitancySummary, JudgeCategory, ProviderConfig, Ranking, RunRecord, SimulationConfig, StepRecord
from scripted_backend import scripted_backend
from simulation_logic import run_batch, with_overrides


def _summary(label, per_seed, seeds=(0, 1), warmup=None, news_mix=0.5, steps=10):
    return HesitancySummary(
        label=label,
        news_mix=news_mix,
        steps=steps,
        seeds=list(seeds),
        per_seed=list(per_seed),
        warmup_per_seed=list(warmup or []),
    )


# --- Rank agreement --------------------------------------------------------------------------


def test_bundled_table_agreement():
    table = load_rankings_table()
    assert table.reference_name == "Expert"
    assert len(table.items) == 6
    assert kendall_tau_b(table.rankings["Llama-3.1"], table.reference) == pytest.approx(0.7333, abs=1e-4)
    assert kendall_tau_b(table.rankings["Qwen"], table.reference) == pytest.approx(0.6901, abs=1e-4)


def test_exact_pvalues():
    table = load_rankings_table()
    assert tau_exact_pvalue(table.rankings["Llama-3.1"], table.reference) == pytest.approx(40 / 720)
    assert tau_exact_pvalue(table.rankings["Qwen"], table.reference) == pytest.approx(60 / 720)


def test_auto_method_switches_on_ties():
    table = load_rankings_table()
    p_value, method = tau_pvalue(table.rankings["Llama-3.1"], table.reference)
    assert method == "exact" and p_value == pytest.approx(40 / 720)
    p_value, method = tau_pvalue(table.rankings["Qwen"], table.reference)
    assert method == "asymptotic"
    assert p_value == pytest.approx(0.0558, abs=5e-4)
    with pytest.raises(ConfigError):
        tau_pvalue(table.rankings["Qwen"], table.reference, method="bootstrap")


@pytest.mark.parametrize("name", ["Llama-3", "Llama-3-AB", "Llama-3.1", "Qwen"])
def test_matches_scipy(name):
    table = load_rankings_table()
    ranking = table.rankings[name]
    x = [ranking.ranks[item] for item in table.items]
    y = [table.reference.ranks[item] for item in table.items]
    expected = stats.kendalltau(x, y, variant="b", method="asymptotic")
    assert kendall_tau_b(ranking, table.reference) == pytest.approx(expected.statistic)
    assert tau_asymptotic_pvalue(ranking, table.reference) == pytest.approx(expected.pvalue)


def test_compare_rankings_frame():
    table = load_rankings_table()
    frame = compare_rankings(table.rankings, table.reference)
    assert list(frame.columns) == ["ranking", "tau_b", "p_value", "p_method"]
    assert list(frame["ranking"]) == ["Llama-3", "Llama-3-AB", "Llama-3.1", "Qwen"]
    assert frame.loc[frame["ranking"] == "Llama-3.1", "tau_b"].item() == pytest.approx(0.7333, abs=1e-4)


def test_rank_comparison_errors():
    a = Ranking(ranks={"x": 1, "y": 2, "z": 3})
    with pytest.raises(ComparisonError):
        kendall_tau_b(a, Ranking(ranks={"x": 1, "y": 2, "w": 3}))
    with pytest.raises(ComparisonError):
        kendall_tau_b(Ranking(ranks={"x": 1}), Ranking(ranks={"x": 1}))
    with pytest.raises(ComparisonError):
        kendall_tau_b(a, Ranking(ranks={"x": 1, "y": 1, "z": 1}))

    pair = Ranking(ranks={"x": 1, "y": 2})
    swapped = Ranking(ranks={"x": 2, "y": 1})
    assert kendall_tau_b(pair, swapped) == pytest.approx(-1.0)
    assert tau_exact_pvalue(pair, swapped) == pytest.approx(1.0)
    with pytest.raises(ComparisonError):
        tau_asymptotic_pvalue(pair, swapped)

    items = [f"p{i}" for i in range(9)]
    big = Ranking(ranks={item: i + 1 for i, item in enumerate(items)})
    reversed_big = Ranking(ranks={item: 9 - i for i, item in enumerate(items)})
    with pytest.raises(ComparisonError):
        tau_exact_pvalue(big, reversed_big)
    assert tau_exact_pvalue(big, reversed_big, approximate=True) == pytest.approx(tau_asymptotic_pvalue(big, reversed_big))
    assert kendall_tau_b(big, reversed_big) == pytest.approx(-1.0)


def test_rankings_table_with_votes(tmp_path):
    path = tmp_path / "rankings.json"
    path.write_text(
        json.dumps(
            {
                "items": ["a", "b", "c"],
                "rankings": {"model": [1, 2, 3]},
                "reference_votes": [[1, 2, 3], [2, 1, 3], [1, 3, 2]],
            }
        )
    )
    table = load_rankings_table(path)
    assert table.reference.ranks == {"a": 1, "b": 2, "c": 3}
    assert table.reference_name == "Reference"

    path.write_text(json.dumps({"items": ["a", "b"], "rankings": {"model": [1]}, "reference_ranking": [1, 2]}))
    with pytest.raises(ConfigError):
        load_rankings_table(path)
    with pytest.raises(ConfigError):
        load_rankings_table(tmp_path / "missing.json")


# --- Borda -----------------------------------------------------------------------------------


def test_borda_points_share_ties():
    assert borda_points(Ranking(ranks={"a": 1, "b": 2, "c": 3})) == {"a": 2.0, "b": 1.0, "c": 0.0}
    assert borda_points(Ranking(ranks={"a": 1, "b": 1, "c": 3})) == {"a": 1.5, "b": 1.5, "c": 0.0}


def test_borda_aggregate():
    votes = [
        Ranking(ranks={"a": 1, "b": 2, "c": 3}),
        Ranking(ranks={"b": 1, "a": 2, "c": 3}),
    ]
    assert borda_aggregate(votes).ranks == {"a": 1, "b": 1, "c": 3}
    assert borda_aggregate(votes[:1]).ranks == votes[0].ranks

    with pytest.raises(AggregationError):
        borda_aggregate([])
    with pytest.raises(AggregationError):
        borda_aggregate([votes[0], Ranking(ranks={"a": 1, "b": 2})])


def _random_ranking(rng, items, max_rank):
    while True:
        ranks = {item: int(rank) for item, rank in zip(items, rng.integers(1, max_rank + 1, size=len(items)))}
        if len(set(ranks.values())) > 1:
            return Ranking(ranks=ranks)


def _brute_force_borda(votes):
    totals = {}
    for vote in votes:
        for item, rank in vote.ranks.items():
            worse = sum(1 for other, r in vote.ranks.items() if other != item and r > rank)
            tied = sum(1 for other, r in vote.ranks.items() if other != item and r == rank)
            totals[item] = totals.get(item, 0.0) + worse + 0.5 * tied
    return {item: 1 + sum(1 for other in totals.values() if other > total) for item, total in totals.items()}


def test_reversed_voters_tie_everything():
    votes = [Ranking(ranks={"a": 1, "b": 2, "c": 3}), Ranking(ranks={"a": 3, "b": 2, "c": 1})]
    assert borda_aggregate(votes).ranks == {"a": 1, "b": 1, "c": 1}


def test_borda_matches_brute_force_and_ignores_voter_order():
    rng = np.random.default_rng(8)
    items = list("abcde")
    for _ in range(50):
        votes = [_random_ranking(rng, items, max_rank=5) for _ in range(int(rng.integers(1, 7)))]
        aggregate = borda_aggregate(votes).ranks
        assert aggregate == _brute_force_borda(votes)
        shuffled = [votes[int(i)] for i in rng.permutation(len(votes))]
        assert borda_aggregate(shuffled).ranks == aggregate


def test_tau_is_symmetric_and_flips_sign_on_reversal():
    rng = np.random.default_rng(9)
    items = [f"i{n}" for n in range(7)]
    for _ in range(50):
        a = _random_ranking(rng, items, max_rank=7)
        b = _random_ranking(rng, items, max_rank=7)
        reversed_b = Ranking(ranks={item: 8 - rank for item, rank in b.ranks.items()})
        assert kendall_tau_b(a, b) == pytest.approx(kendall_tau_b(b, a))
        assert kendall_tau_b(a, reversed_b) == pytest.approx(-kendall_tau_b(a, b), abs=1e-12)


# --- Hesitancy comparisons and tables --------------------------------------------------------


def test_delta_h_and_reduction_ranking():
    baseline = _summary("No Policy", [0.5, 0.5])
    treated = [
        _summary("Weak Incentive", [0.4, 0.4]),
        _summary("Strong Incentive", [0.3, 0.3]),
        _summary("Strong Mandate", [0.2, 0.4]),
    ]
    assert delta_h(baseline, treated[0]) == pytest.approx(0.1)
    assert rank_by_reduction(baseline, treated).ranks == {"Strong Incentive": 1, "Strong Mandate": 1, "Weak Incentive": 3}

    with pytest.raises(ComparisonError):
        delta_h(baseline, _summary("x", [0.1, 0.1], news_mix=1.0))
    with pytest.raises(ComparisonError):
        delta_h(baseline, _summary("x", [0.1, 0.1], seeds=(0, 2)))
    with pytest.raises(AggregationError):
        rank_by_reduction(baseline, [])


def test_drift():
    assert drift(_summary("x", [0.3, 0.5], warmup=[0.5, 0.5])) == pytest.approx(-0.1)
    with pytest.raises(ComparisonError):
        drift(_summary("x", [0.3, 0.5]))


def test_metrics_table(tmp_path):
    baseline = _summary("No Policy", [0.5, 0.6], warmup=[0.5, 0.5])
    strong = _summary("Strong Incentive", [0.3, 0.5], warmup=[0.5, 0.5])
    path = tmp_path / "metrics.csv"
    frame = metrics_table(baseline, [strong], path)
    assert len(frame) == 4
    row = frame[(frame["policy"] == "Strong Incentive") & (frame["seed"] == 0)].iloc[0]
    assert (row["category"], row["effort"]) == ("incentive", "strong")
    assert row["delta_h"] == pytest.approx(0.2)
    assert len(pd.read_csv(path)) == 4


def test_mae_vs_reference(tmp_path):
    # step 1 sits between weeks 0 and 2 and reads the earlier week
    assert mae_vs_reference([0.5, 0.4, 0.3], {0: 45.0, 2: 35.0}) == pytest.approx(5.0)
    # steps outside the reference range are skipped
    assert mae_vs_reference([0.9, 0.4, 0.9], {1: 50.0}) == pytest.approx(10.0)
    with pytest.raises(ComparisonError):
        mae_vs_reference([0.5], {3: 40.0})
    with pytest.raises(ComparisonError):
        mae_vs_reference([0.5], {})

    path = tmp_path / "reference.csv"
    path.write_text("week,hesitancy_percent\n2,35\n0,45\n")
    series = load_reference_series(path)
    assert list(series.index) == [0, 2]
    assert mae_vs_reference([0.5, 0.4, 0.3], series) == pytest.approx(5.0)
    path.write_text("t,value\n0,1\n")
    with pytest.raises(ConfigError):
        load_reference_series(path)


# --- Alignment -------------------------------------------------------------------------------


def _flat_runner(aborted_seeds, hesitancy=0.45):
    def runner(config, seeds):
        steps = [StepRecord(step=i, agents=[], hesitancy=hesitancy) for i in range(config.steps)]
        return [
            RunRecord(config=with_overrides(config, seed=seed), steps=steps, aborted=seed in aborted_seeds)
            for seed in seeds
        ]

    return runner


def test_alignment_warns_about_aborted_runs(caplog):
    config = SimulationConfig(n_agents=2, steps=4, warmup=2)
    with caplog.at_level(logging.WARNING, logger="eval_logic"):
        result = p1_align(_flat_runner({3}), config, grid=(1.0,), seeds=(0, 1, 2, 3))
    assert result.best_temperature == 1.0
    assert result.errors[1.0] == pytest.approx(0.0)
    assert result.summaries[1.0].seeds == [0, 1, 2]
    assert "1 of 4 runs aborted" in caplog.text

    with pytest.raises(ProtocolError):
        p1_align(_flat_runner({1, 2}), config, grid=(1.0,), seeds=(0, 1, 2, 3))


# --- Judge and analysis ----------------------------------------------------------------------


@pytest.fixture(scope="module")
def run_logs(tmp_path_factory):
    output = tmp_path_factory.mktemp("runs")
    config = SimulationConfig(
        n_agents=3, steps=3, warmup=1, corpus_size=8, provider=ProviderConfig(parallelism=2, retry_base_delay=0)
    )
    records = run_batch(config, seeds=[0, 1], output_dir=output)
    return records, sorted((output / "logs").glob("*.jsonl"))


def test_trajectory_table(run_logs):
    records, _ = run_logs
    frame = trajectory_table(records)
    assert len(frame) == 6
    assert set(frame["policy"]) == {"No Policy"}


def test_judge_rates_every_category(run_logs):
    _, paths = run_logs
    reports = p4_judge(paths, scripted_backend(), n_agents_sampled=4, episodes_per_category=2, retry_base_delay=0)
    assert set(reports) == set(JudgeCategory)
    for report in reports.values():
        assert not report.failed
        assert report.mean == pytest.approx(4.0)
        assert 0 < len(report.ratings) <= 8
        assert report.parse_failures == 0


def test_judge_needs_conversations(tmp_path):
    config = SimulationConfig(
        n_agents=2, steps=1, warmup=0, corpus_size=4, log_conversations=False,
        provider=ProviderConfig(parallelism=1, retry_base_delay=0),
    )
    run_batch(config, seeds=[0], output_dir=tmp_path)
    with pytest.raises(ProtocolError):
        p4_judge(sorted((tmp_path / "logs").glob("*.jsonl")), scripted_backend(), retry_base_delay=0)


def test_analysis_report(run_logs):
    _, paths = run_logs
    report = analysis_report(paths, scripted_backend(), scope="meta", n_agents=2, retry_base_delay=0)
    assert [section.title for section in report.sections][-1] == "Meta-analysis"
    assert len(report.sections) == 3
    assert report.calls == 3
    assert not report.partial
    assert "## Meta-analysis" in report.render()

    per_agent = analysis_report(paths, scripted_backend(), scope="per_agent", n_agents=2, retry_base_delay=0)
    assert len(per_agent.sections) == 2
    assert analysis_report(paths, scripted_backend(), n_agents=0).sections == []
    with pytest.raises(ConfigError):
        analysis_report(paths, scripted_backend(), scope="global")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
