import math
from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator, model_validator


DEMOGRAPHIC_ATTRIBUTES: Tuple[str, ...] = (
    "age_group",
    "education",
    "gender",
    "race_ethnicity",
    "occupation",
    "political_belief",
    "religion",
)

DISTRIBUTION_TOLERANCE = 1e-9


# Enum for news stance types
class StanceType(Enum):
    VACCINE_BENEFIT = "vaccine_benefit"
    VACCINE_CONCERN = "vaccine_concern"
    LOW_DISRUPTION = "low_disruption"
    HIGH_DISRUPTION = "high_disruption"


# Enum for the encouraging / discouraging news groups
class NewsGroup(Enum):
    POS = "pos"
    NEG = "neg"


class LessonSource(Enum):
    NEWS = "news"
    TWEET = "tweet"
    POLICY = "policy"
    RISK = "risk"


class PolicyCategory(Enum):
    INCENTIVE = "incentive"
    AMBASSADOR = "ambassador"
    MANDATE = "mandate"


class PolicyEffort(Enum):
    WEAK = "weak"
    STRONG = "strong"


class JudgeCategory(Enum):
    ATTITUDE = "attitude"
    MEMORY = "memory"
    CONVERSATION = "conversation"


class BackendKind(Enum):
    HTTP = "http"
    SCRIPTED = "scripted"


class EmbeddingBackend(Enum):
    HTTP = "http"
    HASHING = "hashing"


# --- Personas -------------------------------------------------------------------------------


class CategoryWeight(BaseModel):
    category: str
    probability: float = Field(..., ge=0.0)

    model_config = ConfigDict(frozen=True)


class DemographicMarginals(BaseModel):
    age_group: List[CategoryWeight] = Field(..., min_length=1)
    education: List[CategoryWeight] = Field(..., min_length=1)
    gender: List[CategoryWeight] = Field(..., min_length=1)
    race_ethnicity: List[CategoryWeight] = Field(..., min_length=1)
    occupation: List[CategoryWeight] = Field(..., min_length=1)
    political_belief: List[CategoryWeight] = Field(..., min_length=1)
    religion: List[CategoryWeight] = Field(..., min_length=1)
    raw_sums: Dict[str, float] = Field(
        default_factory=dict,
        description="Per-attribute probability sums as read from the file, before normalization",
    )

    model_config = ConfigDict(frozen=True)

    def attribute(self, name: str) -> List[CategoryWeight]:
        return getattr(self, name)

    def categories(self, name: str) -> List[str]:
        return [weight.category for weight in self.attribute(name)]

    def probabilities(self, name: str) -> List[float]:
        return [weight.probability for weight in self.attribute(name)]


class Persona(BaseModel):
    agent_id: int = Field(..., ge=0)
    gender: str
    age: int = Field(..., ge=0, description="Exact age drawn uniformly inside the age-group bucket")
    age_group: str
    education: str
    race_ethnicity: str
    occupation: str
    political_belief: str
    religion: str

    model_config = ConfigDict(frozen=True)


# --- Memory ---------------------------------------------------------------------------------


class Lesson(BaseModel):
    text: str
    importance: float = Field(..., ge=0.0, le=1.0)
    created_at: int = Field(..., ge=0, description="Step (week) index the lesson was learned")
    source: LessonSource

    model_config = ConfigDict(frozen=True)


class MemoryStore(BaseModel):
    agent_id: int = Field(..., ge=0)
    lessons: List[Lesson] = Field(default_factory=list)
    decay_rate: float = Field(default=0.995, gt=0.0, le=1.0)


# --- Attitudes ------------------------------------------------------------------------------


class AttitudeDistribution(BaseModel):
    p: Tuple[float, float, float, float]

    model_config = ConfigDict(frozen=True)

    @field_validator("p")
    @classmethod
    def _check_probabilities(cls, value: Tuple[float, float, float, float]):
        if any(not math.isfinite(x) or x < 0.0 for x in value):
            raise ValueError("attitude probabilities must be finite and non-negative")
        if abs(sum(value) - 1.0) > DISTRIBUTION_TOLERANCE:
            raise ValueError(f"attitude probabilities must sum to 1 (got {sum(value)!r})")
        return value

    @property
    def hesitant_mass(self) -> float:
        return self.p[0] + self.p[1]


class AttitudeSample(BaseModel):
    value: int = Field(..., ge=1, le=4)
    hesitant: bool

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _check_hesitant_flag(self):
        if self.hesitant != (self.value in (1, 2)):
            raise ValueError("hesitant must be true exactly for attitudes 1 and 2")
        return self

    @classmethod
    def from_value(cls, value: int) -> "AttitudeSample":
        return cls(value=value, hesitant=value in (1, 2))


# --- Content --------------------------------------------------------------------------------


class NewsItem(BaseModel):
    id: str
    text: str
    stance_type: StanceType

    model_config = ConfigDict(frozen=True)

    @property
    def group(self) -> NewsGroup:
        return group_of(self.stance_type)


class Policy(BaseModel):
    category: PolicyCategory
    effort: PolicyEffort
    description: Optional[str] = Field(
        default=None,
        description="Announcement text shown to agents; filled from the catalog when omitted",
    )

    model_config = ConfigDict(frozen=True)

    @property
    def label(self) -> str:
        return f"{self.effort.value.title()} {self.category.value.title()}"


class RiskPoint(BaseModel):
    week: int = Field(..., ge=0)
    rate: float = Field(..., ge=0.0)

    model_config = ConfigDict(frozen=True)


class RiskSeries(BaseModel):
    points: List[RiskPoint] = Field(..., min_length=1)

    model_config = ConfigDict(frozen=True)

    @field_validator("points")
    @classmethod
    def _check_weeks_increasing(cls, points: List[RiskPoint]):
        for previous, current in zip(points, points[1:]):
            if current.week <= previous.week:
                raise ValueError(
                    f"weeks must be strictly increasing (week {current.week} after {previous.week})"
                )
        return points


# --- Social network -------------------------------------------------------------------------


class FollowGraph(BaseModel):
    n_agents: int = Field(..., ge=0)
    edges: List[Tuple[int, int]] = Field(
        default_factory=list,
        description="Sorted, deduplicated (follower_id, followee_id) pairs",
    )

    model_config = ConfigDict(frozen=True)

    _following: Optional[Dict[int, frozenset]] = PrivateAttr(default=None)

    @model_validator(mode="after")
    def _check_edges(self):
        normalised = sorted(set((int(a), int(b)) for a, b in self.edges))
        for follower, followee in normalised:
            if follower == followee:
                raise ValueError(f"self-loop on agent {follower}")
            if not (0 <= follower < self.n_agents and 0 <= followee < self.n_agents):
                raise ValueError(f"edge ({follower}, {followee}) outside [0, {self.n_agents})")
        object.__setattr__(self, "edges", normalised)
        return self

    def following(self, agent_id: int) -> frozenset:
        if self._following is None:
            table: Dict[int, set] = {}
            for follower, followee in self.edges:
                table.setdefault(follower, set()).add(followee)
            self._following = {key: frozenset(value) for key, value in table.items()}
        return self._following.get(agent_id, frozenset())

    def follows(self, follower: int, followee: int) -> bool:
        return followee in self.following(follower)


# --- Engine ---------------------------------------------------------------------------------


class ProviderConfig(BaseModel):
    backend: BackendKind = BackendKind.SCRIPTED
    model: str = "meta-llama/Llama-3.1-8B-Instruct"
    base_url: Optional[str] = None
    api_key_env: str = "VACSIM_API_KEY"
    agent_temperature: float = Field(default=0.7, ge=0.0)
    news_temperature: float = Field(default=1.5, ge=0.0)
    judge_temperature: float = Field(default=0.0, ge=0.0)
    max_tokens: int = Field(default=512, ge=1)
    max_retries: int = Field(default=3, ge=1)
    retry_base_delay: float = Field(default=1.5, ge=0.0)
    parallelism: int = Field(default=8, ge=1)
    embedding_backend: EmbeddingBackend = EmbeddingBackend.HASHING
    embedding_model: str = "sentence-transformers/all-MiniLM-L6-v2"
    embedding_base_url: Optional[str] = None
    embedding_api_key_env: str = "VACSIM_EMBEDDING_API_KEY"
    embedding_dim: int = Field(default=384, ge=8)

    model_config = ConfigDict(extra="forbid")


class SimulationConfig(BaseModel):
    n_agents: int = Field(default=100, ge=1)
    steps: int = Field(default=20, ge=0, description="Total steps L")
    warmup: int = Field(default=5, ge=0, description="Warmup steps W before the policy is shown")
    temperature: float = Field(default=1.0, gt=0.0, description="Attitude modulation temperature T")
    policy: Optional[Policy] = None
    news_mix: float = Field(default=0.5, ge=0.0, le=1.0, description="Fraction of encouraging news")
    corpus_path: Optional[str] = None
    corpus_size: int = Field(default=1000, ge=1)
    marginals_path: Optional[str] = None
    risk_path: Optional[str] = None
    few_shot_path: Optional[str] = None
    network_path: Optional[str] = Field(default=None, description="Pinned follow graph (edge list); generated per run when unset")
    personas_path: Optional[str] = Field(default=None, description="Pinned population (personas.jsonl); sampled per run when unset")
    k_lessons: int = Field(default=5, ge=1)
    k_news: int = Field(default=3, ge=1)
    news_pool: int = Field(default=9, ge=1)
    n_tweets_read: int = Field(default=3, ge=1)
    k_takeaways: int = Field(default=3, ge=1)
    tweet_window: int = Field(default=3, ge=1)
    tweet_pool_cap: int = Field(default=200, ge=1)
    lesson_decay: float = Field(default=0.995, gt=0.0, le=1.0)
    tweet_decay: float = Field(default=0.9, gt=0.0, le=1.0)
    follow_bias: float = Field(default=0.3, ge=0.0)
    seed: int = 0
    include_race_in_profile: bool = False
    resample_population_per_seed: bool = True
    log_conversations: bool = True
    provider: ProviderConfig = Field(default_factory=ProviderConfig)

    model_config = ConfigDict(extra="forbid", frozen=True)

    @model_validator(mode="after")
    def _check_warmup(self):
        if self.warmup > self.steps:
            raise ValueError(f"warmup ({self.warmup}) must not exceed steps ({self.steps})")
        return self


class Tweet(BaseModel):
    id: str
    author_id: int = Field(..., ge=0)
    text: str
    posted_at: int = Field(..., ge=0, description="Step the tweet was posted; readable from posted_at + 1")

    model_config = ConfigDict(frozen=True)


class ConversationTurn(BaseModel):
    kind: str
    prompt: str
    response: str


class AgentStepRecord(BaseModel):
    agent_id: int
    news_shown: List[str] = Field(default_factory=list)
    policy_shown: bool = False
    risk_value: float = 0.0
    tweets_read: List[str] = Field(default_factory=list)
    tweet_posted: Optional[str] = None
    tweet_text: Optional[str] = None
    lessons_added: List[Lesson] = Field(default_factory=list)
    reasoning: str = ""
    raw_distribution: Optional[List[float]] = None
    repaired_distribution: List[float]
    modulated_distribution: List[float]
    attitude: int = Field(..., ge=1, le=4)
    hesitant: bool
    repair_event: Optional[str] = None
    conversations: List[ConversationTurn] = Field(default_factory=list)


class StepRecord(BaseModel):
    step: int = Field(..., ge=0)
    agents: List[AgentStepRecord]
    hesitancy: float = Field(..., ge=0.0, le=1.0)
    hesitant_mass: float = Field(default=0.0, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _check_hesitancy(self):
        if self.agents:
            expected = sum(1 for agent in self.agents if agent.hesitant) / len(self.agents)
            if abs(expected - self.hesitancy) > 1e-12:
                raise ValueError("step hesitancy does not match its attitude samples")
        return self


class RunRecord(BaseModel):
    config: SimulationConfig
    steps: List[StepRecord] = Field(default_factory=list)
    event_counts: Dict[str, int] = Field(default_factory=dict)
    aborted: bool = False
    abort_reason: Optional[str] = None
    started_at: Optional[str] = None
    finished_at: Optional[str] = None
    wall_seconds: Optional[float] = None

    def trajectory(self) -> List[float]:
        return [step.hesitancy for step in self.steps]


# --- Evaluation -----------------------------------------------------------------------------


class HesitancySummary(BaseModel):
    label: str
    news_mix: float
    steps: int
    seeds: List[int]
    per_seed: List[float]
    warmup_per_seed: List[float] = Field(default_factory=list)
    mean: float = 0.0
    warmup_mean: Optional[float] = None

    @model_validator(mode="after")
    def _hydrate_means(self):
        if len(self.per_seed) != len(self.seeds):
            raise ValueError("per_seed and seeds must have equal length")
        if self.per_seed:
            self.mean = sum(self.per_seed) / len(self.per_seed)
        if self.warmup_per_seed:
            self.warmup_mean = sum(self.warmup_per_seed) / len(self.warmup_per_seed)
        return self


class Ranking(BaseModel):
    ranks: Dict[str, int] = Field(..., min_length=1)

    @field_validator("ranks")
    @classmethod
    def _check_ranks(cls, ranks: Dict[str, int]):
        for item, rank in ranks.items():
            if rank < 1:
                raise ValueError(f"rank of {item!r} must be >= 1")
        return ranks

    @property
    def items(self) -> List[str]:
        return sorted(self.ranks)


class JudgeReport(BaseModel):
    category: JudgeCategory
    ratings: List[int] = Field(default_factory=list)
    mean: Optional[float] = None
    parse_failures: int = 0
    failed: bool = False

    @model_validator(mode="after")
    def _hydrate_mean(self):
        if any(rating < 1 or rating > 5 for rating in self.ratings):
            raise ValueError("judge ratings must lie in [1, 5]")
        if self.ratings:
            self.mean = sum(self.ratings) / len(self.ratings)
        else:
            self.failed = True
        return self


# --- Helpers to hydrate derived fields -----------------------------------------------------

_POSITIVE_STANCES = frozenset({StanceType.VACCINE_BENEFIT, StanceType.HIGH_DISRUPTION})


def group_of(stance_type: StanceType) -> NewsGroup:
    """Encouraging news shows vaccine benefits or heavy disruption; the rest discourages."""

    return NewsGroup.POS if stance_type in _POSITIVE_STANCES else NewsGroup.NEG


def policy_key(policy: Optional[Policy]) -> str:
    if policy is None:
        return "no_policy"
    return f"{policy.effort.value}_{policy.category.value}"
