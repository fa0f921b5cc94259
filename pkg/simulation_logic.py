"""
Discrete-time simulation engine.

Each step every agent reads recommended news, the government policy (only
after the warmup), the weekly risk update and tweets from earlier steps,
stores takeaways in memory, posts one tweet and reports its vaccine attitude.

Agents within a step run concurrently against a snapshot of the previous
step. Their writes (lessons, tweet, attitude) merge at the step barrier in
agent-id order, so the run log does not depend on thread scheduling.
"""

import json
import logging
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError

from attitude_logic import format_distribution, hesitancy_fraction, hesitant_mass, modulate, repair_attitude, sample_attitude
from content_logic import (
    CorpusView,
    build_corpus_view,
    generate_corpus,
    load_exemplars,
    load_risk_series,
    read_news_corpus,
    resolve_policy,
    risk_at,
    risk_sentence,
    synthetic_risk_series,
)
from errors import ConfigError, ContractError, ProtocolError, ProviderError
from llm_gateway import (
    ChatProvider,
    CompletionParams,
    build_chat_provider,
    complete_detailed,
    configure_parallelism,
    extract_attitude,
    extract_lessons,
)
from memory_logic import make_lesson, render_lessons, top_k_salient
from models import (
    AgentStepRecord,
    AttitudeDistribution,
    ConversationTurn,
    DemographicMarginals,
    FollowGraph,
    HesitancySummary,
    Lesson,
    LessonSource,
    MemoryStore,
    NewsItem,
    Persona,
    ProviderConfig,
    RiskSeries,
    RunRecord,
    SimulationConfig,
    StepRecord,
    Tweet,
    policy_key,
)
from persona_logic import load_marginals, load_personas, profile_string, sample_population
from prompt_templates import (
    AGENT_SYSTEM,
    ATTITUDE_UPDATE,
    INITIAL_ATTITUDE,
    NEWS_LESSON,
    POLICY_LESSON,
    RISK_LESSON,
    TWEET_LESSON,
    TWEET_POST,
)
from recommend_logic import EmbeddingCache, ScoredCandidate, build_embedder, sample_candidate_pool, score_news, score_tweet, top_k
from seeding import derive_rng, derive_seed
from socialnet_logic import generate_network, load_edges

logger = logging.getLogger(__name__)

DEFAULT_SEEDS: Tuple[int, ...] = (0, 1, 2, 3, 4)
END_WINDOW = 3

ProviderFactory = Callable[[ProviderConfig, int], ChatProvider]
BatchRunner = Callable[[SimulationConfig, Sequence[int]], List[RunRecord]]


def with_overrides(config: SimulationConfig, **updates: Any) -> SimulationConfig:
    """Validated copy of ``config`` with top-level keys replaced."""

    payload = config.model_dump(mode="json")
    for key, value in updates.items():
        payload[key] = value.model_dump(mode="json") if hasattr(value, "model_dump") else value
    try:
        return SimulationConfig.model_validate(payload)
    except ValidationError as exc:
        raise ConfigError(f"invalid configuration override: {exc.errors()[0]['msg']}") from exc


def policy_label(config: SimulationConfig) -> str:
    return config.policy.label if config.policy is not None else "No Policy"


def run_label(config: SimulationConfig) -> str:
    return f"{policy_key(config.policy)}_mix{config.news_mix:.2f}_seed{config.seed}"


# --- Run log -------------------------------------------------------------------------------


class RunLogWriter:
    """Single-writer JSONL log: header, agent_step and step_summary lines, then end or abort."""

    def __init__(self, path: Union[str, Path, None]):
        self.path = Path(path) if path is not None else None
        self._handle = None
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._handle = self.path.open("w", encoding="utf-8", newline="\n")

    def write(self, record_type: str, payload: Dict[str, Any]) -> None:
        if self._handle is None:
            return
        line = json.dumps({"type": record_type, **payload}, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
        self._handle.write(line + "\n")

    def close(self) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None

    def __enter__(self) -> "RunLogWriter":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def _read_log_lines(path: Union[str, Path]) -> List[Dict[str, Any]]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"run log not found: {path}")
    entries = []
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            entries.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{number}: corrupt run log line: {exc}") from exc
    if not entries or entries[0].get("type") != "header":
        raise ConfigError(f"{path}: run log has no header line")
    return entries


def load_run_log(path: Union[str, Path]) -> RunRecord:
    entries = _read_log_lines(path)
    config = SimulationConfig.model_validate(entries[0]["config"])

    pending: Dict[int, List[AgentStepRecord]] = {}
    steps: List[StepRecord] = []
    record = RunRecord(config=config)
    for entry in entries[1:]:
        kind = entry.get("type")
        if kind == "agent_step":
            payload = {key: value for key, value in entry.items() if key not in ("type", "step")}
            pending.setdefault(entry["step"], []).append(AgentStepRecord.model_validate(payload))
        elif kind == "step_summary":
            step = entry["step"]
            steps.append(
                StepRecord(
                    step=step,
                    agents=pending.pop(step, []),
                    hesitancy=entry["hesitancy"],
                    hesitant_mass=entry["hesitant_mass"],
                )
            )
        elif kind in ("end", "abort"):
            record.event_counts = dict(entry.get("event_counts", {}))
            record.aborted = kind == "abort"
            record.abort_reason = entry.get("reason")
    record.steps = steps
    return record


def load_run_personas(path: Union[str, Path]) -> List[Persona]:
    header = _read_log_lines(path)[0]
    return [Persona.model_validate(persona) for persona in header.get("personas", [])]


def write_run_meta(record: RunRecord, path: Union[str, Path]) -> None:
    """Wall-clock data lives beside the log so the log itself stays reproducible."""

    payload = {
        "label": run_label(record.config),
        "started_at": record.started_at,
        "finished_at": record.finished_at,
        "wall_seconds": record.wall_seconds,
        "aborted": record.aborted,
        "abort_reason": record.abort_reason,
        "steps_completed": len(record.steps),
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


# --- One run -------------------------------------------------------------------------------


@dataclass
class AgentState:
    persona: Persona
    memory: MemoryStore
    tweet_vectors: List[np.ndarray] = field(default_factory=list)
    previous: Optional[AttitudeDistribution] = None

    def history(self, dimension: int) -> np.ndarray:
        if not self.tweet_vectors:
            return np.zeros((0, dimension), dtype=float)
        return np.vstack(self.tweet_vectors)


@dataclass(frozen=True)
class StepSnapshot:
    step: int
    tweets: Tuple[Tweet, ...]
    tweet_vectors: Dict[str, np.ndarray]
    risk: float
    policy_text: Optional[str]


@dataclass
class AgentOutcome:
    record: AgentStepRecord
    lessons: List[Lesson]
    tweet: Tweet
    tweet_vector: np.ndarray
    repaired: AttitudeDistribution
    modulated: AttitudeDistribution
    events: Counter


@dataclass
class RunContext:
    config: SimulationConfig
    graph: FollowGraph
    corpus: Tuple[NewsItem, ...]
    provider: ChatProvider
    cache: EmbeddingCache
    news_index: Dict[str, int]

    @property
    def dimension(self) -> int:
        return self.cache.provider.dimension


def _readable_tweets(tweets_by_step: Dict[int, List[Tweet]], step: int, window: int) -> Tuple[Tweet, ...]:
    """Tweets posted in the previous min(window, step) steps, newest first."""

    pool = [
        tweet
        for posted in range(max(0, step - window), step)
        for tweet in tweets_by_step.get(posted, [])
    ]
    return tuple(sorted(pool, key=lambda tweet: (-tweet.posted_at, tweet.author_id)))


def _agent_step(ctx: RunContext, state: AgentState, snapshot: StepSnapshot) -> AgentOutcome:
    config = ctx.config
    provider_config = config.provider
    step = snapshot.step
    agent_id = state.persona.agent_id
    events: Counter = Counter()
    turns: List[ConversationTurn] = []
    history = state.history(ctx.dimension)
    system = AGENT_SYSTEM.render(profile=profile_string(state.persona, config.include_race_in_profile))

    def ask(kind: str, user: str) -> str:
        params = CompletionParams(
            temperature=provider_config.agent_temperature,
            max_tokens=provider_config.max_tokens,
            seed=derive_seed(config.seed, kind, agent_id, step),
        )
        completion = complete_detailed(
            ctx.provider,
            [{"role": "system", "content": system}, {"role": "user", "content": user}],
            params,
            provider_config.max_retries,
            provider_config.retry_base_delay,
        )
        events["provider_calls"] += 1
        events["retries"] += completion.attempts - 1
        if config.log_conversations:
            turns.append(ConversationTurn(kind=kind, prompt=user, response=completion.text))
        return completion.text

    def learn(kind: str, user: str, source: LessonSource) -> List[Lesson]:
        extracted = extract_lessons(ask(kind, user))
        if not extracted:
            events["lesson_parse_failures"] += 1
        return [make_lesson(text, importance, step, source) for text, importance in extracted]

    lessons: List[Lesson] = []

    # news: pool of candidates, ranked by similarity to the agent's own tweets
    news_rng = derive_rng(config.seed, "news", agent_id, step)
    pool = sample_candidate_pool(ctx.corpus, config.news_pool, news_rng)
    scores = [score_news(history, vector) for vector in ctx.cache.embed([item.text for item in pool])]
    chosen_news = top_k(
        [ScoredCandidate(item.id, float(score), ctx.news_index[item.id]) for item, score in zip(pool, scores)],
        config.k_news,
        news_rng,
    )
    by_id = {item.id: item for item in pool}
    news = [by_id[candidate.item_id] for candidate in chosen_news]
    lessons += learn(
        "news_lesson",
        NEWS_LESSON.render(news="\n\n".join(item.text for item in news), k=config.k_takeaways),
        LessonSource.NEWS,
    )

    if snapshot.policy_text is not None:
        lessons += learn(
            "policy_lesson",
            POLICY_LESSON.render(policy=snapshot.policy_text, k=config.k_takeaways),
            LessonSource.POLICY,
        )

    lessons += learn(
        "risk_lesson",
        RISK_LESSON.render(risk=risk_sentence(snapshot.risk), k=config.k_takeaways),
        LessonSource.RISK,
    )

    readable = [tweet for tweet in snapshot.tweets if tweet.author_id != agent_id]
    if len(readable) > config.tweet_pool_cap:
        events["tweet_pool_capped"] += 1
        readable = readable[: config.tweet_pool_cap]
    tweets_read: List[Tweet] = []
    if readable:
        candidates = [
            ScoredCandidate(
                tweet.id,
                score_tweet(
                    history,
                    snapshot.tweet_vectors[tweet.id],
                    step - tweet.posted_at,
                    ctx.graph.follows(agent_id, tweet.author_id),
                    config.tweet_decay,
                    config.follow_bias,
                ),
                index,
            )
            for index, tweet in enumerate(readable)
        ]
        chosen = top_k(candidates, config.n_tweets_read, derive_rng(config.seed, "tweets", agent_id, step))
        by_tweet_id = {tweet.id: tweet for tweet in readable}
        tweets_read = [by_tweet_id[candidate.item_id] for candidate in chosen]
        lessons += learn(
            "tweet_lesson",
            TWEET_LESSON.render(tweets="\n".join(f"- {tweet.text}" for tweet in tweets_read), k=config.k_takeaways),
            LessonSource.TWEET,
        )

    memory = MemoryStore(agent_id=agent_id, lessons=state.memory.lessons + lessons, decay_rate=config.lesson_decay)
    remembered = render_lessons(top_k_salient(memory, step, config.k_lessons))

    tweet_text = ask("tweet", TWEET_POST.render(lessons=remembered)).strip()
    tweet = Tweet(id=f"{step}-{agent_id}", author_id=agent_id, text=tweet_text, posted_at=step)
    tweet_vector = ctx.cache.embed([tweet_text])[0]

    if step == 0 or state.previous is None:
        attitude_prompt = INITIAL_ATTITUDE.render()
    else:
        attitude_prompt = ATTITUDE_UPDATE.render(
            week=step + 1,
            risk=risk_sentence(snapshot.risk),
            lessons=remembered,
            previous=format_distribution(state.previous),
        )
    parsed = extract_attitude(ask("attitude", attitude_prompt))
    reasoning, raw = parsed if parsed is not None else ("", None)
    repaired, repair_event = repair_attitude(raw, state.previous)
    if repair_event:
        events[repair_event] += 1
    modulated = modulate(repaired, config.temperature)
    sample = sample_attitude(modulated, derive_rng(config.seed, "attitude", agent_id, step))

    record = AgentStepRecord(
        agent_id=agent_id,
        news_shown=[item.id for item in news],
        policy_shown=snapshot.policy_text is not None,
        risk_value=snapshot.risk,
        tweets_read=[tweet.id for tweet in tweets_read],
        tweet_posted=tweet.id,
        tweet_text=tweet_text,
        lessons_added=lessons,
        reasoning=reasoning,
        raw_distribution=list(raw) if raw is not None else None,
        repaired_distribution=list(repaired.p),
        modulated_distribution=list(modulated.p),
        attitude=sample.value,
        hesitant=sample.hesitant,
        repair_event=repair_event,
        conversations=turns,
    )
    return AgentOutcome(
        record=record,
        lessons=lessons,
        tweet=tweet,
        tweet_vector=tweet_vector,
        repaired=repaired,
        modulated=modulated,
        events=events,
    )


def _header(config: SimulationConfig, personas: Sequence[Persona], graph: FollowGraph, corpus: Sequence[NewsItem], risk: RiskSeries) -> Dict[str, Any]:
    return {
        "config": config.model_dump(mode="json"),
        "personas": [persona.model_dump(mode="json") for persona in personas],
        "edges": len(graph.edges),
        "corpus_size": len(corpus),
        "risk": [[point.week, point.rate] for point in risk.points],
    }


def run(
    config: SimulationConfig,
    personas: Sequence[Persona],
    graph: FollowGraph,
    corpus: Union[CorpusView, Sequence[NewsItem]],
    risk: RiskSeries,
    provider: ChatProvider,
    cache: Optional[EmbeddingCache] = None,
    log_path: Union[str, Path, None] = None,
) -> RunRecord:
    """
    Simulate ``config.steps`` weeks and return the run record.

    A provider that stays down after its retries aborts the run: the steps
    finished so far are kept, the record is marked aborted and an abort line
    closes the log.
    """

    if len(personas) != config.n_agents:
        raise ContractError(f"expected {config.n_agents} personas, got {len(personas)}")
    if graph.n_agents != config.n_agents:
        raise ContractError(f"follow graph covers {graph.n_agents} agents, config has {config.n_agents}")
    items = tuple(corpus.items if isinstance(corpus, CorpusView) else corpus)
    policy = resolve_policy(config.policy)

    ctx = RunContext(
        config=config,
        graph=graph,
        corpus=items,
        provider=provider,
        cache=cache if cache is not None else EmbeddingCache(build_embedder(config.provider)),
        news_index={item.id: index for index, item in enumerate(items)},
    )
    configure_parallelism(config.provider.parallelism)

    states = [
        AgentState(persona=persona, memory=MemoryStore(agent_id=persona.agent_id, decay_rate=config.lesson_decay))
        for persona in sorted(personas, key=lambda persona: persona.agent_id)
    ]
    tweets_by_step: Dict[int, List[Tweet]] = {}
    tweet_vectors: Dict[str, np.ndarray] = {}
    events: Counter = Counter()

    started = time.monotonic()
    record = RunRecord(config=config, started_at=datetime.now(timezone.utc).isoformat())

    with RunLogWriter(log_path) as log:
        log.write("header", _header(config, [state.persona for state in states], graph, items, risk))
        for step in range(config.steps):
            snapshot = StepSnapshot(
                step=step,
                tweets=_readable_tweets(tweets_by_step, step, config.tweet_window),
                tweet_vectors=dict(tweet_vectors),
                risk=risk_at(risk, step),
                policy_text=policy.description if policy is not None and step >= config.warmup else None,
            )

            outcomes: List[AgentOutcome] = []
            failure: Optional[ProviderError] = None
            with ThreadPoolExecutor(max_workers=config.provider.parallelism) as pool:
                futures = [pool.submit(_agent_step, ctx, state, snapshot) for state in states]
                for future in futures:
                    try:
                        outcomes.append(future.result())
                    except ProviderError as exc:
                        failure = failure or exc

            if failure is not None:
                record.aborted = True
                record.abort_reason = f"step {step}: {failure}"
                logger.error("Run %s aborted at step %d: %s", run_label(config), step, failure)
                break

            for state, outcome in zip(states, outcomes):
                state.memory.lessons.extend(outcome.lessons)
                state.tweet_vectors.append(outcome.tweet_vector)
                state.previous = outcome.repaired
                tweets_by_step.setdefault(step, []).append(outcome.tweet)
                tweet_vectors[outcome.tweet.id] = outcome.tweet_vector
                events.update(outcome.events)
                log.write("agent_step", {"step": step, **outcome.record.model_dump(mode="json")})

            summary = StepRecord(
                step=step,
                agents=[outcome.record for outcome in outcomes],
                hesitancy=hesitancy_fraction([outcome.record for outcome in outcomes]),
                hesitant_mass=hesitant_mass([outcome.modulated for outcome in outcomes]),
            )
            record.steps.append(summary)
            log.write("step_summary", {"step": step, "hesitancy": summary.hesitancy, "hesitant_mass": summary.hesitant_mass})
            logger.info(
                "%s step %d/%d: hesitancy %.3f (mass %.3f)",
                run_label(config),
                step + 1,
                config.steps,
                summary.hesitancy,
                summary.hesitant_mass,
            )

        record.event_counts = dict(sorted(events.items()))
        if record.aborted:
            log.write("abort", {"reason": record.abort_reason, "event_counts": record.event_counts})
        else:
            log.write("end", {"event_counts": record.event_counts})

    record.finished_at = datetime.now(timezone.utc).isoformat()
    record.wall_seconds = round(time.monotonic() - started, 3)
    return record


# --- Hesitancy metrics ---------------------------------------------------------------------


def end_hesitancy(record: RunRecord) -> float:
    """Mean hesitancy over the last three steps (all steps when the run is shorter)."""

    trajectory = record.trajectory()
    if not trajectory:
        raise ContractError("end hesitancy of a run with no steps")
    if len(trajectory) < END_WINDOW:
        logger.warning("Run has %d steps; averaging all of them for end hesitancy", len(trajectory))
    window = trajectory[-END_WINDOW:]
    return sum(window) / len(window)


def warmup_hesitancy(record: RunRecord) -> float:
    """Mean hesitancy over the last min(3, W) warmup steps; step 0 when W is 0."""

    trajectory = record.trajectory()
    if not trajectory:
        raise ContractError("warmup hesitancy of a run with no steps")
    warmup = record.config.warmup
    if warmup == 0:
        return trajectory[0]
    window = trajectory[max(0, warmup - END_WINDOW) : warmup]
    if not window:
        raise ContractError(f"run stopped before its warmup window (warmup {warmup})")
    return sum(window) / len(window)


def batch_is_partial(records: Sequence[RunRecord]) -> bool:
    return any(record.aborted for record in records)


def summarize_batch(records: Sequence[RunRecord], label: Optional[str] = None) -> HesitancySummary:
    """Aborted runs are left out with a warning; a batch with none left is a protocol failure."""

    if not records:
        raise ProtocolError("cannot summarize an empty batch")
    kept = [record for record in records if not record.aborted and record.steps]
    dropped = len(records) - len(kept)
    if dropped:
        logger.warning("Excluding %d aborted run(s) from the %s summary", dropped, label or policy_label(records[0].config))
    if not kept:
        raise ProtocolError("every run in the batch aborted")

    config = kept[0].config
    return HesitancySummary(
        label=label or policy_label(config),
        news_mix=config.news_mix,
        steps=config.steps,
        seeds=[record.config.seed for record in kept],
        per_seed=[end_hesitancy(record) for record in kept],
        warmup_per_seed=[warmup_hesitancy(record) for record in kept],
    )


# --- Batches -------------------------------------------------------------------------------


@dataclass
class SharedInputs:
    """Inputs reused by every run of a batch."""

    marginals: DemographicMarginals
    news: List[NewsItem]
    risk: RiskSeries
    base_seed: int = 0
    pinned: Dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class RunInputs:
    personas: List[Persona]
    graph: FollowGraph
    corpus: CorpusView
    risk: RiskSeries


def prepare_shared(config: SimulationConfig, provider_factory: ProviderFactory = build_chat_provider) -> SharedInputs:
    marginals = load_marginals(config.marginals_path)

    if config.corpus_path:
        news = read_news_corpus(config.corpus_path)
    else:
        provider_config = config.provider
        logger.info("No corpus file configured; generating %d articles", config.corpus_size)
        news = generate_corpus(
            provider_factory(provider_config, config.seed),
            config.corpus_size,
            load_exemplars(config.few_shot_path),
            temperature=provider_config.news_temperature,
            seed=config.seed,
            parallelism=provider_config.parallelism,
            max_retries=provider_config.max_retries,
            retry_base_delay=provider_config.retry_base_delay,
            max_tokens=provider_config.max_tokens,
        )

    risk = load_risk_series(config.risk_path) if config.risk_path else synthetic_risk_series(max(config.steps, 1))
    return SharedInputs(marginals=marginals, news=news, risk=risk, base_seed=config.seed)


def prepare_run(config: SimulationConfig, shared: SharedInputs, provider_factory: ProviderFactory = build_chat_provider) -> RunInputs:
    """
    Personas and follow graph for ``config.seed`` (or the pinned population), plus the corpus view.

    ``personas_path`` and ``network_path`` pin either half to a saved file;
    whatever is not pinned is sampled or generated as usual.
    """

    pinned = not config.resample_population_per_seed
    seed = config.seed if not pinned else shared.base_seed
    key = f"population:{seed}:{config.n_agents}"
    if pinned and key in shared.pinned:
        personas, graph = shared.pinned[key]
    else:
        if config.personas_path is not None:
            personas = load_personas(config.personas_path)
            if len(personas) != config.n_agents:
                raise ConfigError(f"{config.personas_path} holds {len(personas)} personas but n_agents is {config.n_agents}")
        else:
            personas = sample_population(shared.marginals, config.n_agents, seed)

        if config.network_path is not None:
            graph = load_edges(config.network_path, config.n_agents)
        elif config.n_agents < 2:
            graph = FollowGraph(n_agents=config.n_agents)
        else:
            provider_config = config.provider
            graph, _ = generate_network(
                personas,
                provider_factory(provider_config, seed),
                seed=seed,
                temperature=provider_config.agent_temperature,
                parallelism=provider_config.parallelism,
                max_retries=provider_config.max_retries,
                retry_base_delay=provider_config.retry_base_delay,
                include_race=config.include_race_in_profile,
            )
        if pinned:
            shared.pinned[key] = (personas, graph)

    corpus = build_corpus_view(shared.news, config.news_mix, derive_rng(config.seed, "corpus-view"))
    return RunInputs(personas=personas, graph=graph, corpus=corpus, risk=shared.risk)


def run_batch(
    config: SimulationConfig,
    seeds: Sequence[int] = DEFAULT_SEEDS,
    provider_factory: ProviderFactory = build_chat_provider,
    output_dir: Union[str, Path, None] = None,
    shared: Optional[SharedInputs] = None,
    cache: Optional[EmbeddingCache] = None,
) -> List[RunRecord]:
    """Independent runs, one per seed; logs go to ``output_dir/logs`` when given."""

    seeds = list(seeds)
    if not seeds:
        raise ConfigError("a batch needs at least one seed")
    if len(set(seeds)) != len(seeds):
        raise ConfigError(f"batch seeds must be distinct (got {seeds})")

    shared = shared if shared is not None else prepare_shared(config, provider_factory)
    cache = cache if cache is not None else EmbeddingCache(build_embedder(config.provider))
    log_dir = Path(output_dir) / "logs" if output_dir is not None else None

    records: List[RunRecord] = []
    for seed in seeds:
        run_config = with_overrides(config, seed=seed)
        inputs = prepare_run(run_config, shared, provider_factory)
        label = run_label(run_config)
        record = run(
            run_config,
            inputs.personas,
            inputs.graph,
            inputs.corpus,
            inputs.risk,
            provider_factory(run_config.provider, seed),
            cache,
            log_dir / f"{label}.jsonl" if log_dir is not None else None,
        )
        if log_dir is not None:
            write_run_meta(record, log_dir / f"{label}.meta.json")
        records.append(record)

    if log_dir is not None:
        cache.save(log_dir / "embeddings.json")
    if batch_is_partial(records):
        logger.warning("Batch %s is partial: %d of %d runs aborted", policy_label(config), sum(r.aborted for r in records), len(records))
    return records


def make_batch_runner(
    provider_factory: ProviderFactory = build_chat_provider,
    output_dir: Union[str, Path, None] = None,
) -> BatchRunner:
    """Runner for the evaluation protocols; shared inputs and embeddings are reused across batches."""

    shared_by_key: Dict[Tuple, SharedInputs] = {}
    caches: Dict[str, EmbeddingCache] = {}

    def runner(config: SimulationConfig, seeds: Sequence[int]) -> List[RunRecord]:
        key = (
            config.marginals_path,
            config.corpus_path,
            config.corpus_size,
            config.few_shot_path,
            config.risk_path,
            config.steps if not config.risk_path else None,
            config.seed,
            config.provider.model_dump_json(),
        )
        if key not in shared_by_key:
            shared_by_key[key] = prepare_shared(config, provider_factory)
        cache_key = config.provider.model_dump_json()
        if cache_key not in caches:
            caches[cache_key] = EmbeddingCache(build_embedder(config.provider))
        batch_dir = Path(output_dir) / f"temperature_{config.temperature:g}" if output_dir is not None else None
        return run_batch(config, seeds, provider_factory, batch_dir, shared_by_key[key], caches[cache_key])

    return runner
