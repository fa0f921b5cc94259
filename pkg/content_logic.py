"""
Broadcast information sources: the news corpus, the policy catalog and the
perceived-risk series.

News stances split into two groups. Vaccine benefits and heavy disruption
encourage vaccination (pos); vaccine concerns and light disruption discourage
it (neg). Runs read a view of the corpus with a configured pos fraction.
"""

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import TypeAdapter, ValidationError

from errors import ConfigError, ContractError, CorpusError, PartialCorpusError, ProviderError, RiskSeriesLoadError
from llm_gateway import ChatProvider, CompletionParams, complete_detailed
from models import NewsGroup, NewsItem, Policy, PolicyCategory, PolicyEffort, RiskPoint, RiskSeries, StanceType
from prompt_templates import NEWS_GENERATION, NEWS_GENERATION_SYSTEM, RISK_SENTENCE, STANCE_INSTRUCTIONS
from seeding import derive_rng, derive_seed

logger = logging.getLogger(__name__)

PLACEHOLDER_EXEMPLARS = Path(__file__).parent / "data" / "placeholder_news_exemplars.json"

EXAMPLES_PER_PROMPT = 3


# --- News corpus ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorpusView:
    items: Tuple[NewsItem, ...]
    mix: float
    pos: int
    neg: int

    def __len__(self) -> int:
        return len(self.items)


def read_news_corpus(path: Union[str, Path]) -> List[NewsItem]:
    """One ``{id, stance_type, text}`` record per line."""

    target = Path(path)
    try:
        lines = target.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise CorpusError(f"news corpus not found: {target}")

    items: List[NewsItem] = []
    seen = set()
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            item = NewsItem.model_validate_json(line)
        except ValidationError as exc:
            raise CorpusError(f"{target}:{number}: invalid news record: {exc.errors()[0]['msg']}")
        if item.id in seen:
            raise CorpusError(f"{target}:{number}: duplicate news id {item.id!r}")
        seen.add(item.id)
        items.append(item)
    return items


def save_news_corpus(items: Sequence[NewsItem], path: Union[str, Path]) -> None:
    lines = [
        json.dumps({"id": item.id, "stance_type": item.stance_type.value, "text": item.text}, ensure_ascii=False)
        for item in items
    ]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def build_corpus_view(items: Sequence[NewsItem], mix: float, rng: np.random.Generator) -> CorpusView:
    """
    Largest subsample of ``items`` whose encouraging fraction equals ``mix``.

    ``mix`` 1.0 keeps only encouraging news and 0.0 only discouraging news.
    For a 60/40 corpus of 1000 and mix 0.5 this yields 400 + 400.
    """

    if not 0.0 <= mix <= 1.0:
        raise ConfigError(f"news mix must lie in [0, 1] (got {mix})")
    pos_items = [item for item in items if item.group == NewsGroup.POS]
    neg_items = [item for item in items if item.group == NewsGroup.NEG]
    n_pos, n_neg = len(pos_items), len(neg_items)

    if mix == 1.0:
        want_pos, want_neg = n_pos, 0
    elif mix == 0.0:
        want_pos, want_neg = 0, n_neg
    else:
        total = min(n_pos / mix, n_neg / (1.0 - mix))
        want_pos = min(n_pos, int(round(mix * total)))
        want_neg = min(n_neg, int(round((1.0 - mix) * total)))

    if (mix > 0 and want_pos == 0) or (mix < 1 and want_neg == 0):
        raise CorpusError(
            f"news mix {mix} is unattainable: corpus has {n_pos} encouraging and {n_neg} discouraging items"
        )

    def _subsample(pool: List[NewsItem], k: int) -> List[NewsItem]:
        if k >= len(pool):
            return list(pool)
        keep = np.sort(rng.choice(len(pool), size=k, replace=False))
        return [pool[int(i)] for i in keep]

    chosen = {item.id for item in _subsample(pos_items, want_pos) + _subsample(neg_items, want_neg)}
    view = tuple(item for item in items if item.id in chosen)
    logger.info("Corpus view: %d encouraging + %d discouraging (mix %.2f)", want_pos, want_neg, mix)
    return CorpusView(items=view, mix=mix, pos=want_pos, neg=want_neg)


def load_news_corpus(path: Union[str, Path], mix: float = 0.5, rng: Optional[np.random.Generator] = None, seed: int = 0) -> CorpusView:
    items = read_news_corpus(path)
    if not items:
        raise CorpusError(f"news corpus {path} is empty")
    return build_corpus_view(items, mix, rng if rng is not None else derive_rng(seed, "corpus-view", mix))


def placeholder_exemplars() -> List[str]:
    payload = json.loads(PLACEHOLDER_EXEMPLARS.read_text(encoding="utf-8"))
    return list(payload["exemplars"])


def load_exemplars(path: Union[str, Path, None]) -> List[str]:
    """Few-shot articles from a JSON list (or ``{"exemplars": [...]}``); placeholders when no path."""

    if path is None:
        return placeholder_exemplars()
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (FileNotFoundError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read few-shot exemplars {path}: {exc}")
    exemplars = payload.get("exemplars") if isinstance(payload, dict) else payload
    if not isinstance(exemplars, list) or not all(isinstance(e, str) and e.strip() for e in exemplars):
        raise ConfigError(f"{path}: exemplars must be a list of non-empty strings")
    return exemplars


def news_messages(stance_type: StanceType, examples: Sequence[str]) -> List[Dict[str, str]]:
    return [
        {"role": "system", "content": NEWS_GENERATION_SYSTEM},
        {
            "role": "user",
            "content": NEWS_GENERATION.render(
                stance_instruction=STANCE_INSTRUCTIONS[stance_type],
                examples="\n---\n".join(examples),
            ),
        },
    ]


def generate_news(
    provider: ChatProvider,
    stance_type: StanceType,
    count: int,
    few_shot: Sequence[str],
    temperature: float = 1.5,
    seed: int = 0,
    parallelism: int = 8,
    max_retries: int = 3,
    retry_base_delay: float = 1.5,
    max_tokens: int = 512,
) -> List[NewsItem]:
    if count < 0:
        raise ContractError(f"count must be >= 0 (got {count})")
    if count == 0:
        return []
    if not few_shot:
        raise ContractError("news generation needs at least one few-shot exemplar")

    def _one(index: int) -> NewsItem:
        rng = derive_rng(seed, "news-examples", stance_type.value, index)
        k = min(EXAMPLES_PER_PROMPT, len(few_shot))
        examples = [few_shot[int(i)] for i in rng.choice(len(few_shot), size=k, replace=False)]
        params = CompletionParams(
            temperature=temperature,
            max_tokens=max_tokens,
            seed=derive_seed(seed, "news", stance_type.value, index),
        )
        text = complete_detailed(provider, news_messages(stance_type, examples), params, max_retries, retry_base_delay).text
        return NewsItem(id=f"{stance_type.value}-{index:05d}", text=text.strip(), stance_type=stance_type)

    items: List[NewsItem] = []
    failure: Optional[ProviderError] = None
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        for future in [pool.submit(_one, index) for index in range(count)]:
            try:
                items.append(future.result())
            except ProviderError as exc:
                failure = failure or exc
    if failure is not None:
        raise PartialCorpusError(
            f"news generation for {stance_type.value} stopped after {len(items)} of {count}: {failure}",
            items=items,
            attempts=failure.attempts,
        ) from failure
    logger.info("Generated %d %s articles", len(items), stance_type.value)
    return items


def generate_corpus(
    provider: ChatProvider,
    size: int,
    few_shot: Sequence[str],
    output_path: Optional[Union[str, Path]] = None,
    **kwargs,
) -> List[NewsItem]:
    """``size`` articles split as evenly as possible over the four stances."""

    stances = list(StanceType)
    base, extra = divmod(size, len(stances))
    corpus: List[NewsItem] = []
    try:
        for position, stance in enumerate(stances):
            corpus.extend(generate_news(provider, stance, base + (1 if position < extra else 0), few_shot, **kwargs))
    except PartialCorpusError as exc:
        corpus.extend(exc.items)
        if output_path is not None:
            save_news_corpus(corpus, output_path)
            logger.error("Partial corpus of %d items saved to %s", len(corpus), output_path)
        raise PartialCorpusError(str(exc), items=corpus, attempts=exc.attempts) from exc

    if output_path is not None:
        save_news_corpus(corpus, output_path)
    return corpus


# --- Policies ------------------------------------------------------------------------------

_BUILTIN_POLICY_TEXT: Dict[Tuple[PolicyCategory, PolicyEffort], str] = {
    (PolicyCategory.AMBASSADOR, PolicyEffort.WEAK): (
        "Our community is introducing the 'VaxUp Neighbors' program to raise basic awareness about vaccines. Volunteers "
        "will be available at community events, such as school gatherings or park meetups, to provide general information "
        "on vaccines. This effort, in collaboration with the County Health Department and PTA, encourages casual "
        "conversations to dispel myths and offer simple, reliable information about vaccinations. Participation is "
        "voluntary, and no formal training is required for volunteers, but they will have access to informational resources."
    ),
    (PolicyCategory.AMBASSADOR, PolicyEffort.STRONG): (
        "Our community is launching the 'VaxUp Neighbors' program, where fully trained volunteers will facilitate in-depth "
        "conversations about vaccines in various familiar settings like schools, parks, and community centers. In "
        "partnership with the County Health Department and PTA, these volunteers will complete a comprehensive training "
        "program, covering all aspects of vaccine safety, benefits, and myth-busting. They will lead interactive "
        "workshops, host Q&A sessions, and provide fact-based resources. This initiative aims to improve vaccine literacy "
        "and public health outcomes by equipping the community with the tools to make well-informed vaccination decisions."
    ),
    (PolicyCategory.INCENTIVE, PolicyEffort.WEAK): (
        "The state government offers a $10 cash card to adults who receive their first dose of vaccination. This "
        "limited-time incentive is available while supplies last."
    ),
    (PolicyCategory.INCENTIVE, PolicyEffort.STRONG): (
        "The state government guarantees a $50 cash card to all adults who either receive or transport someone to "
        "receive their first dose of vaccination. Additionally, targeted outreach will ensure residents in underserved "
        "areas are aware of and can access this enhanced incentive."
    ),
    (PolicyCategory.MANDATE, PolicyEffort.WEAK): (
        "Starting today, our state government strongly recommends that employees and students be vaccinated before "
        "entering workplaces or schools. Compliance is encouraged, but enforcement will be minimal, and institutions "
        "will have discretion in enforcing this policy."
    ),
    (PolicyCategory.MANDATE, PolicyEffort.STRONG): (
        "Starting today, our state government mandates that all employees, students, and individuals entering "
        "workplaces, schools, public venues, and transportation hubs be vaccinated. This policy will be strictly "
        "enforced by local health departments, with state oversight and penalties for non-compliance across all "
        "sectors, including public transportation and government buildings."
    ),
}

_POLICY_LIST = TypeAdapter(List[Policy])


def builtin_policies() -> List[Policy]:
    return [
        Policy(category=category, effort=effort, description=text)
        for (category, effort), text in _BUILTIN_POLICY_TEXT.items()
    ]


def load_policies(path: Union[str, Path]) -> List[Policy]:
    """Catalog override: JSON list of ``{category, effort, description}`` records."""

    try:
        policies = _POLICY_LIST.validate_json(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"policy file not found: {path}")
    except ValidationError as exc:
        raise ConfigError(f"invalid policy file {path}: {exc.errors()[0]['msg']}")

    seen = set()
    for policy in policies:
        key = (policy.category, policy.effort)
        if not policy.description:
            raise ConfigError(f"{path}: {policy.label} has no description")
        if key in seen:
            raise ConfigError(f"{path}: duplicate entry for {policy.label}")
        seen.add(key)
    return policies


def save_policies(policies: Sequence[Policy], path: Union[str, Path]) -> None:
    payload = [policy.model_dump(mode="json") for policy in policies]
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def get_policy(
    category: PolicyCategory,
    effort: PolicyEffort,
    catalog: Optional[Sequence[Policy]] = None,
) -> Policy:
    for policy in catalog if catalog is not None else builtin_policies():
        if policy.category == category and policy.effort == effort:
            return policy
    raise ConfigError(f"no policy for {effort.value} {category.value} in the catalog")


def resolve_policy(policy: Optional[Policy], catalog: Optional[Sequence[Policy]] = None) -> Optional[Policy]:
    """Fill a missing description from the catalog."""

    if policy is None or policy.description:
        return policy
    return get_policy(policy.category, policy.effort, catalog)


# --- Perceived risk ------------------------------------------------------------------------


def load_risk_series(path: Union[str, Path]) -> RiskSeries:
    """``week,rate`` CSV, with or without a header row."""

    try:
        frame = pd.read_csv(path, header=None, dtype=str, comment="#", skip_blank_lines=True)
    except FileNotFoundError:
        raise RiskSeriesLoadError(f"risk series not found: {path}")
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as exc:
        raise RiskSeriesLoadError(f"cannot parse risk series {path}: {exc}")

    if frame.shape[1] != 2:
        raise RiskSeriesLoadError(f"{path}: expected two columns (week, rate), found {frame.shape[1]}")
    if pd.to_numeric(frame.iloc[0], errors="coerce").isna().any():
        frame = frame.iloc[1:]  # header row
    if frame.empty:
        raise RiskSeriesLoadError(f"{path}: no data rows")

    weeks = pd.to_numeric(frame.iloc[:, 0], errors="coerce")
    rates = pd.to_numeric(frame.iloc[:, 1], errors="coerce")
    if weeks.isna().any() or rates.isna().any():
        raise RiskSeriesLoadError(f"{path}: non-numeric week or rate")
    if ((weeks % 1) != 0).any():
        raise RiskSeriesLoadError(f"{path}: weeks must be integers")
    if (rates < 0).any():
        raise RiskSeriesLoadError(f"{path}: negative rate")
    if not all(math.isfinite(rate) for rate in rates):
        raise RiskSeriesLoadError(f"{path}: non-finite rate")

    try:
        return RiskSeries(
            points=[RiskPoint(week=int(week), rate=float(rate)) for week, rate in zip(weeks, rates)]
        )
    except ValidationError as exc:
        raise RiskSeriesLoadError(f"{path}: {exc.errors()[0]['msg']}")


def save_risk_series(series: RiskSeries, path: Union[str, Path]) -> None:
    frame = pd.DataFrame(
        {"week": [point.week for point in series.points], "rate": [point.rate for point in series.points]}
    )
    frame.to_csv(path, index=False)


def synthetic_risk_series(
    steps: int,
    peak_week: Optional[int] = None,
    height: float = 8.0,
    width: float = 3.0,
    baseline: float = 1.0,
    noise: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> RiskSeries:
    """Single-peak weekly ED-visit percentage curve for offline runs."""

    if steps < 1:
        raise ContractError(f"steps must be >= 1 (got {steps})")
    if width <= 0:
        raise ContractError(f"width must be > 0 (got {width})")
    peak = int(round(0.4 * (steps - 1))) if peak_week is None else peak_week

    weeks = np.arange(steps)
    rates = baseline + height * np.exp(-((weeks - peak) ** 2) / (2.0 * width ** 2))
    if noise > 0:
        if rng is None:
            raise ContractError("noisy synthetic series need an rng")
        rates = rates + rng.normal(0.0, noise, size=steps)
    rates = np.round(np.clip(rates, 0.0, None), 4)
    return RiskSeries(points=[RiskPoint(week=int(w), rate=float(r)) for w, r in zip(weeks, rates)])


def risk_at(series: RiskSeries, week: int) -> float:
    """Rate for ``week``: the latest point at or before it, clamped to the first/last point."""

    points = series.points
    if week > points[-1].week:
        logger.info("Risk series ends at week %d; reusing its last rate for week %d", points[-1].week, week)
        return points[-1].rate
    rate = points[0].rate
    for point in points:
        if point.week > week:
            break
        rate = point.rate
    return rate


def risk_sentence(rate: float) -> str:
    return RISK_SENTENCE.render(rate=rate)
