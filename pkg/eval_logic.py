"""
Evaluation protocols and metrics.

Alignment (temperature search against a real-world hesitancy target),
policy effort and news stance sensitivity, LLM-judge quality ratings, rank
agreement with experts (Borda aggregation, Kendall tau-b and its p-value),
trajectory error against a reference series, and qualitative analysis
reports. Tables are pandas DataFrames written as CSV.
"""

import itertools
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.stats import kendalltau

from content_logic import get_policy
from errors import AggregationError, ComparisonError, ConfigError, JudgeParseError, ProtocolError, ProviderError
from llm_gateway import ChatProvider, CompletionParams, complete_detailed, extract_judge_rating
from models import (
    HesitancySummary,
    JudgeCategory,
    JudgeReport,
    Policy,
    PolicyCategory,
    PolicyEffort,
    Ranking,
    RunRecord,
    SimulationConfig,
)
from persona_logic import profile_string
from prompt_templates import (
    AGENT_SYSTEM,
    ANALYSIS_AGENT,
    ANALYSIS_META,
    JSON_LESSON_PROMPT,
    JUDGE_ATTITUDE,
    JUDGE_CONVERSATION,
    JUDGE_MEMORY,
    RATING_EXP,
)
from seeding import derive_rng, derive_seed
from simulation_logic import (
    DEFAULT_SEEDS,
    BatchRunner,
    end_hesitancy,
    load_run_log,
    load_run_personas,
    summarize_batch,
    warmup_hesitancy,
    with_overrides,
)

logger = logging.getLogger(__name__)

DEFAULT_TEMPERATURE_GRID: Tuple[float, ...] = (0.1, 0.5, 0.7, 1.0, 1.5, 2.0)
TARGET_HESITANCY = 0.45
MIN_SURVIVING_SEEDS = 3
EFFORT_GAP_PASS = 0.02
EXACT_PVALUE_MAX_ITEMS = 8
RANKINGS_TABLE = Path(__file__).parent / "data" / "policy_rankings.json"

_JUDGE_PROMPTS = {
    JudgeCategory.ATTITUDE: JUDGE_ATTITUDE,
    JudgeCategory.MEMORY: JUDGE_MEMORY,
    JudgeCategory.CONVERSATION: JUDGE_CONVERSATION,
}

_JUDGE_TURNS = {
    JudgeCategory.ATTITUDE: ("attitude",),
    JudgeCategory.MEMORY: ("news_lesson", "policy_lesson", "risk_lesson", "tweet_lesson"),
    JudgeCategory.CONVERSATION: ("tweet",),
}


# --- Hesitancy comparisons -----------------------------------------------------------------


def delta_h(baseline: HesitancySummary, treated: HesitancySummary) -> float:
    """Hesitancy reduction: baseline end hesitancy minus treated end hesitancy."""

    if baseline.news_mix != treated.news_mix:
        raise ComparisonError(f"news mix differs: {baseline.news_mix} vs {treated.news_mix}")
    if baseline.steps != treated.steps:
        raise ComparisonError(f"step count differs: {baseline.steps} vs {treated.steps}")
    if sorted(baseline.seeds) != sorted(treated.seeds):
        raise ComparisonError(f"seed sets differ: {baseline.seeds} vs {treated.seeds}")
    return baseline.mean - treated.mean


@dataclass(frozen=True)
class AlignmentResult:
    best_temperature: float
    errors: Dict[float, float]
    summaries: Dict[float, HesitancySummary]


def p1_align(
    runner: BatchRunner,
    config: SimulationConfig,
    grid: Sequence[float] = DEFAULT_TEMPERATURE_GRID,
    target: float = TARGET_HESITANCY,
    seeds: Sequence[int] = DEFAULT_SEEDS,
) -> AlignmentResult:
    """
    Pick the modulation temperature whose post-warmup hesitancy is closest to ``target``.

    Each grid point runs a warmup-only, no-policy batch. Errors are signed
    (H_W - target); the best T minimizes the absolute error, ties going to
    the smaller T.
    """

    if not grid:
        raise ProtocolError("temperature grid is empty")

    warmup_steps = max(config.warmup, 1)
    errors: Dict[float, float] = {}
    summaries: Dict[float, HesitancySummary] = {}
    for temperature in grid:
        trial = with_overrides(config, temperature=temperature, policy=None, steps=warmup_steps, warmup=config.warmup)
        batch = runner(trial, seeds)
        records = [record for record in batch if not record.aborted]
        if len(records) < len(batch):
            logger.warning("Alignment T=%.2f: %d of %d runs aborted", temperature, len(batch) - len(records), len(batch))
        if len(records) < MIN_SURVIVING_SEEDS:
            raise ProtocolError(
                f"T={temperature}: only {len(records)} of {len(seeds)} runs finished (need {MIN_SURVIVING_SEEDS})"
            )
        measured = [warmup_hesitancy(record) for record in records]
        errors[temperature] = sum(value - target for value in measured) / len(measured)
        summaries[temperature] = summarize_batch(records, label=f"T={temperature}")
        logger.info("Alignment T=%.2f: H_W %.3f (error %+.3f)", temperature, target + errors[temperature], errors[temperature])

    best = min(errors, key=lambda temperature: (abs(errors[temperature]), temperature))
    return AlignmentResult(best_temperature=best, errors=errors, summaries=summaries)


@dataclass(frozen=True)
class EffortGapResult:
    category: PolicyCategory
    gap: float
    delta_weak: float
    delta_strong: float
    baseline: HesitancySummary
    weak: HesitancySummary
    strong: HesitancySummary

    @property
    def passed(self) -> bool:
        return self.gap >= EFFORT_GAP_PASS


def p2_effort_gap(
    runner: BatchRunner,
    config: SimulationConfig,
    category: PolicyCategory,
    seeds: Sequence[int] = DEFAULT_SEEDS,
    catalog: Optional[Sequence[Policy]] = None,
) -> EffortGapResult:
    """Does a strong-effort policy reduce hesitancy more than its weak variant?"""

    summaries = {}
    for name, policy in (
        ("baseline", None),
        ("weak", get_policy(category, PolicyEffort.WEAK, catalog)),
        ("strong", get_policy(category, PolicyEffort.STRONG, catalog)),
    ):
        summaries[name] = summarize_batch(runner(with_overrides(config, policy=policy), seeds))

    delta_weak = delta_h(summaries["baseline"], summaries["weak"])
    delta_strong = delta_h(summaries["baseline"], summaries["strong"])
    gap = delta_strong - delta_weak
    logger.info("Effort gap for %s: %.3f (weak %.3f, strong %.3f)", category.value, gap, delta_weak, delta_strong)
    return EffortGapResult(
        category=category,
        gap=gap,
        delta_weak=delta_weak,
        delta_strong=delta_strong,
        baseline=summaries["baseline"],
        weak=summaries["weak"],
        strong=summaries["strong"],
    )


def drift(summary: HesitancySummary) -> float:
    """End hesitancy minus post-warmup hesitancy within one batch."""

    if summary.warmup_mean is None:
        raise ComparisonError(f"{summary.label}: no warmup hesitancy recorded")
    return summary.mean - summary.warmup_mean


@dataclass(frozen=True)
class StanceGapResult:
    gap: float
    drift_pos: float
    drift_neg: float
    positive: HesitancySummary
    negative: HesitancySummary


def p3_stance_gap(
    runner: BatchRunner,
    config: SimulationConfig,
    seeds: Sequence[int] = DEFAULT_SEEDS,
) -> StanceGapResult:
    """Drift under only discouraging news minus drift under only encouraging news (expected > 0)."""

    positive = summarize_batch(runner(with_overrides(config, policy=None, news_mix=1.0), seeds), label="encouraging news")
    negative = summarize_batch(runner(with_overrides(config, policy=None, news_mix=0.0), seeds), label="discouraging news")
    if positive.steps != negative.steps or sorted(positive.seeds) != sorted(negative.seeds):
        raise ComparisonError("stance batches differ in steps or seeds")
    drift_pos, drift_neg = drift(positive), drift(negative)
    logger.info("Stance gap %.3f (drift pos %+.3f, neg %+.3f)", drift_neg - drift_pos, drift_pos, drift_neg)
    return StanceGapResult(
        gap=drift_neg - drift_pos, drift_pos=drift_pos, drift_neg=drift_neg, positive=positive, negative=negative
    )


# --- LLM judge -----------------------------------------------------------------------------


@dataclass(frozen=True)
class Episode:
    source: str
    agent_id: int
    step: int
    text: str


def _render_turns(turns, condense: bool = False) -> str:
    lines = []
    for turn in turns:
        prompt = turn.prompt
        if condense:
            for boilerplate in (RATING_EXP, JSON_LESSON_PROMPT):
                prompt = prompt.split(boilerplate, 1)[0].rstrip()
        lines.append(f"[user] {prompt}\n[agent] {turn.response}")
    return "\n".join(lines)


def _sample_agents(log_paths: Sequence[Union[str, Path]], n_agents: int, seed: int, purpose: str):
    """(log path, record, persona) triples for ``n_agents`` seeded picks across the logs."""

    pool = []
    for path in log_paths:
        record = load_run_log(path)
        for persona in load_run_personas(path):
            pool.append((str(path), record, persona))
    if len(pool) <= n_agents:
        return pool
    rng = derive_rng(seed, purpose)
    picks = sorted(int(i) for i in rng.choice(len(pool), size=n_agents, replace=False))
    return [pool[i] for i in picks]


def judge_episodes(
    log_paths: Sequence[Union[str, Path]],
    category: JudgeCategory,
    n_agents_sampled: int = 25,
    episodes_per_agent: int = 10,
    seed: int = 0,
) -> List[Episode]:
    episodes: List[Episode] = []
    for path, record, persona in _sample_agents(log_paths, n_agents_sampled, seed, "judge-agents"):
        system = AGENT_SYSTEM.render(profile=profile_string(persona, record.config.include_race_in_profile))
        candidates = []
        for step in record.steps:
            for agent in step.agents:
                if agent.agent_id != persona.agent_id:
                    continue
                turns = [turn for turn in agent.conversations if turn.kind in _JUDGE_TURNS[category]]
                if turns:
                    candidates.append((step.step, f"[system] {system}\n{_render_turns(turns)}"))
        if len(candidates) > episodes_per_agent:
            rng = derive_rng(seed, "judge-episodes", category.value, path, persona.agent_id)
            keep = sorted(int(i) for i in rng.choice(len(candidates), size=episodes_per_agent, replace=False))
            candidates = [candidates[i] for i in keep]
        episodes.extend(Episode(path, persona.agent_id, step, text) for step, text in candidates)
    return episodes


def p4_judge(
    log_paths: Sequence[Union[str, Path]],
    provider: ChatProvider,
    n_agents_sampled: int = 25,
    episodes_per_category: int = 10,
    seed: int = 0,
    temperature: float = 0.0,
    parallelism: int = 8,
    max_retries: int = 3,
    retry_base_delay: float = 1.5,
) -> Dict[JudgeCategory, JudgeReport]:
    """Rate sampled episodes 1-5 per category; unparseable verdicts are counted, not averaged."""

    reports: Dict[JudgeCategory, JudgeReport] = {}
    for category in JudgeCategory:
        episodes = judge_episodes(log_paths, category, n_agents_sampled, episodes_per_category, seed)
        if not episodes:
            raise ProtocolError(f"no {category.value} conversations in the run logs (was log_conversations off?)")
        system = _JUDGE_PROMPTS[category].render()

        def _rate(index: int, episode: Episode) -> Optional[int]:
            params = CompletionParams(temperature=temperature, seed=derive_seed(seed, "judge", category.value, index))
            text = complete_detailed(
                provider,
                [{"role": "system", "content": system}, {"role": "user", "content": episode.text}],
                params,
                max_retries,
                retry_base_delay,
            ).text
            try:
                return extract_judge_rating(text)[1]
            except JudgeParseError as exc:
                logger.warning("Judge verdict for agent %d step %d unparseable: %s", episode.agent_id, episode.step, exc)
                return None

        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            verdicts = list(pool.map(_rate, range(len(episodes)), episodes))

        ratings = [rating for rating in verdicts if rating is not None]
        report = JudgeReport(category=category, ratings=ratings, parse_failures=len(verdicts) - len(ratings))
        if report.failed:
            logger.error("Judge category %s failed: no parseable ratings", category.value)
        else:
            logger.info("Judge %s: mean %.2f over %d episodes", category.value, report.mean, len(ratings))
        reports[category] = report
    return reports


# --- Rankings ------------------------------------------------------------------------------


def _positions(ranking: Ranking) -> Dict[str, float]:
    """Averaged 1-based positions; tied items share the mean of the positions they occupy."""

    ordered = sorted(ranking.ranks.items(), key=lambda pair: (pair[1], pair[0]))
    positions: Dict[str, float] = {}
    index = 0
    while index < len(ordered):
        end = index
        while end + 1 < len(ordered) and ordered[end + 1][1] == ordered[index][1]:
            end += 1
        shared = (index + 1 + end + 1) / 2.0
        for item, _ in ordered[index : end + 1]:
            positions[item] = shared
        index = end + 1
    return positions


def _ranks_from_scores(scores: Mapping[str, float], higher_is_better: bool = True) -> Ranking:
    """Competition ranks (1, 2, 2, 4); equal scores share a rank."""

    sign = -1.0 if higher_is_better else 1.0
    ranks = {}
    for item, score in scores.items():
        ranks[item] = 1 + sum(1 for other in scores.values() if sign * other < sign * score and abs(other - score) > 1e-12)
    return Ranking(ranks=ranks)


def borda_points(ranking: Ranking) -> Dict[str, float]:
    n = len(ranking.ranks)
    return {item: n - position for item, position in _positions(ranking).items()}


def borda_aggregate(rankings: Sequence[Ranking]) -> Ranking:
    """Sum of (n - position) points per item, ties sharing averaged points."""

    if not rankings:
        raise AggregationError("no rankings to aggregate")
    items = set(rankings[0].ranks)
    for ranking in rankings[1:]:
        if set(ranking.ranks) != items:
            raise AggregationError(f"item sets differ: {sorted(items)} vs {sorted(ranking.ranks)}")

    totals = {item: 0.0 for item in items}
    for ranking in rankings:
        for item, points in borda_points(ranking).items():
            totals[item] += points
    return _ranks_from_scores(totals)


def _paired(r1: Ranking, r2: Ranking) -> Tuple[List[int], List[int]]:
    if set(r1.ranks) != set(r2.ranks):
        raise ComparisonError(f"rankings cover different items: {sorted(r1.ranks)} vs {sorted(r2.ranks)}")
    if len(r1.ranks) < 2:
        raise ComparisonError("rank correlation needs at least two items")
    items = sorted(r1.ranks)
    return [r1.ranks[item] for item in items], [r2.ranks[item] for item in items]


def _kendall(x: Sequence[float], y: Sequence[float]) -> Tuple[float, float]:
    """scipy's tau-b and its tie-corrected asymptotic p-value (NaN when the variance vanishes)."""

    with np.errstate(divide="ignore", invalid="ignore"):
        try:
            result = kendalltau(x, y, variant="b", method="asymptotic")
            tau, p_value = float(result.statistic), float(result.pvalue)
        except ZeroDivisionError:
            # two items leave the asymptotic variance at 0/0
            tau, p_value = float(kendalltau(x, y, variant="b", method="exact").statistic), math.nan
    if math.isnan(tau):
        raise ComparisonError("tau-b is undefined when a ranking puts every item in one tie")
    return tau, p_value


def kendall_tau_b(r1: Ranking, r2: Ranking) -> float:
    x, y = _paired(r1, r2)
    return _kendall(x, y)[0]


def tau_exact_pvalue(r1: Ranking, r2: Ranking, approximate: bool = False) -> float:
    """
    Two-sided p-value for tau-b = 0 by enumerating every arrangement of ``r2``.

    Enumeration is limited to 8 items; pass ``approximate=True`` to fall
    back to the asymptotic test beyond that.
    """

    x, y = _paired(r1, r2)
    if len(x) > EXACT_PVALUE_MAX_ITEMS:
        if not approximate:
            raise ComparisonError(
                f"exact p-value enumerates {len(x)}! arrangements; pass approximate=True for n > {EXACT_PVALUE_MAX_ITEMS}"
            )
        return tau_asymptotic_pvalue(r1, r2)

    observed = abs(_kendall(x, y)[0])
    extreme = 0
    total = 0
    for arrangement in itertools.permutations(y):
        total += 1
        if abs(_kendall(x, arrangement)[0]) >= observed - 1e-12:
            extreme += 1
    return extreme / total


def tau_asymptotic_pvalue(r1: Ranking, r2: Ranking) -> float:
    x, y = _paired(r1, r2)
    p_value = _kendall(x, y)[1]
    if math.isnan(p_value):
        raise ComparisonError(f"asymptotic p-value is undefined for {len(x)} items")
    return float(p_value)


def tau_pvalue(r1: Ranking, r2: Ranking, method: str = "auto") -> Tuple[float, str]:
    """(p-value, method used). ``auto`` enumerates when both rankings are untied and n <= 8."""

    if method == "exact":
        return tau_exact_pvalue(r1, r2), "exact"
    if method == "asymptotic":
        return tau_asymptotic_pvalue(r1, r2), "asymptotic"
    if method != "auto":
        raise ConfigError(f"unknown p-value method {method!r}")

    x, y = _paired(r1, r2)
    untied = len(set(x)) == len(x) and len(set(y)) == len(y)
    if untied and len(x) <= EXACT_PVALUE_MAX_ITEMS:
        return tau_exact_pvalue(r1, r2), "exact"
    return tau_asymptotic_pvalue(r1, r2), "asymptotic"


@dataclass(frozen=True)
class RankingsTable:
    items: List[str]
    rankings: Dict[str, Ranking]
    reference_name: str
    reference: Ranking


def load_rankings_table(path: Union[str, Path, None] = None) -> RankingsTable:
    """
    ``{"items": [...], "rankings": {name: [rank per item]}, "reference": name, ...}``.

    The reference is either ``reference_ranking`` (one row) or
    ``reference_votes`` (several rows, Borda-aggregated).
    """

    target = Path(path) if path is not None else RANKINGS_TABLE
    try:
        payload = json.loads(target.read_text(encoding="utf-8"))
    except (FileNotFoundError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read rankings table {target}: {exc}")

    items = payload.get("items")
    rows = payload.get("rankings")
    if not isinstance(items, list) or not isinstance(rows, dict) or not rows:
        raise ConfigError(f"{target}: expected 'items' list and 'rankings' mapping")

    def _row(name: str, ranks) -> Ranking:
        if not isinstance(ranks, list) or len(ranks) != len(items):
            raise ConfigError(f"{target}: {name} must rank all {len(items)} items")
        return Ranking(ranks=dict(zip(items, ranks)))

    rankings = {name: _row(name, ranks) for name, ranks in rows.items()}
    if "reference_ranking" in payload:
        reference = _row("reference_ranking", payload["reference_ranking"])
    elif "reference_votes" in payload:
        reference = borda_aggregate([_row("reference_votes", votes) for votes in payload["reference_votes"]])
    else:
        raise ConfigError(f"{target}: needs 'reference_ranking' or 'reference_votes'")
    return RankingsTable(
        items=items, rankings=rankings, reference_name=payload.get("reference", "Reference"), reference=reference
    )


def compare_rankings(rankings: Mapping[str, Ranking], reference: Ranking, method: str = "auto") -> pd.DataFrame:
    rows = []
    for name, ranking in rankings.items():
        p_value, used = tau_pvalue(ranking, reference, method)
        rows.append({"ranking": name, "tau_b": kendall_tau_b(ranking, reference), "p_value": p_value, "p_method": used})
    return pd.DataFrame(rows, columns=["ranking", "tau_b", "p_value", "p_method"])


def rank_by_reduction(baseline: HesitancySummary, treated: Sequence[HesitancySummary]) -> Ranking:
    """Rank 1 goes to the largest hesitancy reduction; equal reductions share a rank."""

    if not treated:
        raise AggregationError("no treated summaries to rank")
    return _ranks_from_scores({summary.label: delta_h(baseline, summary) for summary in treated})


@dataclass(frozen=True)
class PolicySweep:
    baseline: HesitancySummary
    treated: List[HesitancySummary]
    ranking: Ranking


def sweep_policies(
    runner: BatchRunner,
    config: SimulationConfig,
    seeds: Sequence[int] = DEFAULT_SEEDS,
    catalog: Optional[Sequence[Policy]] = None,
) -> PolicySweep:
    """No-policy batch plus one batch per catalog policy, ranked by hesitancy reduction."""

    baseline = summarize_batch(runner(with_overrides(config, policy=None), seeds))
    treated = []
    for category in PolicyCategory:
        for effort in PolicyEffort:
            policy = get_policy(category, effort, catalog)
            treated.append(summarize_batch(runner(with_overrides(config, policy=policy), seeds)))
    return PolicySweep(baseline=baseline, treated=treated, ranking=rank_by_reduction(baseline, treated))


# --- Trajectories and tables ---------------------------------------------------------------


def load_reference_series(path: Union[str, Path]) -> pd.Series:
    """``week,hesitancy_percent`` CSV as a Series indexed by week."""

    try:
        frame = pd.read_csv(path)
    except FileNotFoundError:
        raise ConfigError(f"reference series not found: {path}")
    if list(frame.columns[:2]) != ["week", "hesitancy_percent"]:
        raise ConfigError(f"{path}: expected header 'week,hesitancy_percent'")
    return frame.set_index("week")["hesitancy_percent"].astype(float).sort_index()


def mae_vs_reference(trajectory: Sequence[float], reference: Union[pd.Series, Mapping[int, float]]) -> float:
    """
    Mean absolute error in percentage points between a simulated trajectory
    (fractions per step) and a reference series (percent per week).

    Steps inside the reference's week range read the nearest reference week
    (the earlier one on a tie).
    """

    series = reference if isinstance(reference, pd.Series) else pd.Series(dict(reference), dtype=float)
    series = series.sort_index()
    if series.empty:
        raise ComparisonError("reference series is empty")
    weeks = [int(week) for week in series.index]
    low, high = weeks[0], weeks[-1]

    diffs = []
    for step, fraction in enumerate(trajectory):
        if step < low or step > high:
            continue
        nearest = min(weeks, key=lambda week: (abs(week - step), week))
        diffs.append(abs(100.0 * fraction - float(series.loc[nearest])))
    if not diffs:
        raise ComparisonError(f"no overlap between steps 0..{len(trajectory) - 1} and weeks {low}..{high}")
    return sum(diffs) / len(diffs)


def metrics_table(
    baseline: HesitancySummary,
    treated: Sequence[HesitancySummary],
    path: Union[str, Path, None] = None,
) -> pd.DataFrame:
    """One row per (policy, seed) with end/warmup hesitancy and the per-seed reduction."""

    baseline_by_seed = dict(zip(baseline.seeds, baseline.per_seed))
    rows = []
    for summary in [baseline, *treated]:
        effort, _, category = summary.label.partition(" ") if summary is not baseline else ("", "", "")
        warmups = summary.warmup_per_seed or [None] * len(summary.seeds)
        for seed, value, warm in zip(summary.seeds, summary.per_seed, warmups):
            rows.append(
                {
                    "policy": summary.label,
                    "category": category.lower(),
                    "effort": effort.lower(),
                    "news_mix": summary.news_mix,
                    "seed": seed,
                    "end_hesitancy": value,
                    "warmup_hesitancy": warm,
                    "delta_h": baseline_by_seed[seed] - value if seed in baseline_by_seed else None,
                }
            )
    frame = pd.DataFrame(
        rows,
        columns=["policy", "category", "effort", "news_mix", "seed", "end_hesitancy", "warmup_hesitancy", "delta_h"],
    )
    if path is not None:
        frame.to_csv(path, index=False)
    return frame


def trajectory_table(records: Sequence[RunRecord], path: Union[str, Path, None] = None) -> pd.DataFrame:
    rows = [
        {
            "policy": record.config.policy.label if record.config.policy is not None else "No Policy",
            "news_mix": record.config.news_mix,
            "seed": record.config.seed,
            "step": step.step,
            "hesitancy": step.hesitancy,
            "hesitant_mass": step.hesitant_mass,
        }
        for record in records
        for step in record.steps
    ]
    frame = pd.DataFrame(rows, columns=["policy", "news_mix", "seed", "step", "hesitancy", "hesitant_mass"])
    if path is not None:
        frame.to_csv(path, index=False)
    return frame


def end_hesitancy_table(records: Sequence[RunRecord]) -> pd.DataFrame:
    return pd.DataFrame(
        [{"seed": record.config.seed, "end_hesitancy": end_hesitancy(record), "aborted": record.aborted} for record in records],
        columns=["seed", "end_hesitancy", "aborted"],
    )


# --- Qualitative analysis ------------------------------------------------------------------


@dataclass
class ReportSection:
    title: str
    provenance: str
    text: str
    failed: bool = False


@dataclass
class AnalysisReport:
    sections: List[ReportSection] = field(default_factory=list)
    calls: int = 0

    @property
    def partial(self) -> bool:
        return any(section.failed for section in self.sections)

    def render(self) -> str:
        return "\n\n".join(
            f"## {section.title}\n_Source: {section.provenance}_\n\n{section.text}" for section in self.sections
        )


def analysis_report(
    log_paths: Sequence[Union[str, Path]],
    provider: ChatProvider,
    scope: str = "meta",
    n_agents: int = 25,
    seed: int = 0,
    temperature: float = 0.0,
    max_tokens: int = 2048,
    parallelism: int = 8,
    max_retries: int = 3,
    retry_base_delay: float = 1.5,
) -> AnalysisReport:
    """
    Per-agent analyses of attitude trajectories, then (scope ``meta``) one
    meta-analysis over them. A failed call leaves a marked section and the
    report is returned as partial.
    """

    if scope not in ("per_agent", "meta"):
        raise ConfigError(f"unknown analysis scope {scope!r}")
    report = AnalysisReport()
    sampled = _sample_agents(log_paths, n_agents, seed, "analysis-agents") if n_agents > 0 else []
    if not sampled:
        return report

    def _ask(system: str, user: str, purpose: str) -> Tuple[str, bool]:
        params = CompletionParams(temperature=temperature, max_tokens=max_tokens, seed=derive_seed(seed, purpose))
        try:
            text = complete_detailed(
                provider,
                [{"role": "system", "content": system}, {"role": "user", "content": user}],
                params,
                max_retries,
                retry_base_delay,
            ).text
            return text, False
        except ProviderError as exc:
            logger.error("Analysis call %s failed: %s", purpose, exc)
            return f"[analysis failed: {exc}]", True

    def _agent_section(entry) -> ReportSection:
        path, record, persona = entry
        weeks = []
        for step in record.steps:
            for agent in step.agents:
                if agent.agent_id == persona.agent_id and agent.conversations:
                    weeks.append((step.step, f"### Week {step.step + 1}\n{_render_turns(agent.conversations, condense=True)}"))
        dataset = f"Agent profile: {profile_string(persona, record.config.include_race_in_profile)}\n" + "\n".join(
            text for _, text in weeks
        )
        text, failed = _ask(ANALYSIS_AGENT.render(), dataset, f"analysis:{path}:{persona.agent_id}")
        steps = f"steps {weeks[0][0]}-{weeks[-1][0]}" if weeks else "no steps"
        return ReportSection(
            title=f"Agent {persona.agent_id}",
            provenance=f"{Path(path).name}, {steps}",
            text=text,
            failed=failed,
        )

    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        report.sections = list(pool.map(_agent_section, sampled))
    report.calls = len(report.sections)

    if scope == "meta":
        summaries = "\n\n".join(f"## {section.title}\n{section.text}" for section in report.sections if not section.failed)
        text, failed = _ask(ANALYSIS_META.render(), summaries, "analysis:meta")
        report.calls += 1
        report.sections.append(
            ReportSection(
                title="Meta-analysis",
                provenance=", ".join(section.title for section in report.sections if not section.failed),
                text=text,
                failed=failed,
            )
        )
    return report
