"""
Deterministic rule-based chat provider for offline runs and tests.

Each request is classified by the prompt it carries (follow list, lessons,
tweet, attitude, judge, analysis, news) and answered by the first matching
rule. Replies are pure functions of (messages, provider seed, request seed).

The default rule set is policy-sensitive: strong-effort policy wording moves
attitudes towards acceptance faster than weak-effort wording, and encouraging
or discouraging news markers nudge attitudes in their direction.
"""

import json
import logging
import math
import re
import threading
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from errors import ContractError
from llm_gateway import CompletionParams, Message
from models import NewsGroup, PolicyCategory, PolicyEffort, StanceType, group_of
from persona_logic import parse_profile_string
from prompt_templates import LESSONS_HEADER, PREVIOUS_HEADER
from seeding import stable_unit

logger = logging.getLogger(__name__)


class RequestKind(Enum):
    FOLLOW = "follow"
    LESSONS = "lessons"
    TWEET = "tweet"
    ATTITUDE = "attitude"
    JUDGE = "judge"
    ANALYSIS = "analysis"
    NEWS = "news"
    GENERIC = "generic"


# Phrases lifted from the built-in policy texts; one per (category, effort).
POLICY_KEYWORDS: Dict[Tuple[PolicyCategory, PolicyEffort], str] = {
    (PolicyCategory.INCENTIVE, PolicyEffort.WEAK): "$10 cash card",
    (PolicyCategory.INCENTIVE, PolicyEffort.STRONG): "$50 cash card",
    (PolicyCategory.AMBASSADOR, PolicyEffort.WEAK): "raise basic awareness",
    (PolicyCategory.AMBASSADOR, PolicyEffort.STRONG): "fully trained volunteers",
    (PolicyCategory.MANDATE, PolicyEffort.WEAK): "strongly recommends",
    (PolicyCategory.MANDATE, PolicyEffort.STRONG): "strictly enforced",
}

# Phrases carried by the news-generation instructions for each stance.
STANCE_MARKERS: Dict[StanceType, str] = {
    StanceType.VACCINE_BENEFIT: "vaccines prevent severe illness",
    StanceType.VACCINE_CONCERN: "reports of serious vaccine side effects",
    StanceType.LOW_DISRUPTION: "daily life is barely disrupted",
    StanceType.HIGH_DISRUPTION: "hospitals are overwhelmed",
}

STRONG_POLICY_SHIFT = 0.2
WEAK_POLICY_SHIFT = 0.06
STANCE_SHIFT = 0.08
RISK_SHIFT = 0.01
BASE_HESITANCY = 0.45
LOGIT_LIMIT = 4.0

_POLITICAL_OFFSET = {"Republican": 0.1, "Democrats": -0.1}

_PROFILE_IN_SYSTEM = re.compile(r"Pretend you are (.*?)\. You (?:are joining|live in)", re.DOTALL)
_OTHERS_IN_USER = re.compile(r"separated by semicolon: (.*)\. Please ONLY provide", re.DOTALL)
_PREVIOUS_DIST = re.compile(re.escape(PREVIOUS_HEADER) + r"\s*\[([^\]]*)\]")
_TAKEAWAY_COUNT = re.compile(r"Summarize (?:at most )?(\d+)")
_RISK_RATE = re.compile(r"(\d+(?:\.\d+)?)% of emergency department visits")
_LESSON_LINE = re.compile(r"^\s*\d+\.\s*(.*?)(?:\s*\(saliency: [0-9.]+\))?\s*$")


@dataclass(frozen=True)
class ScriptedRequest:
    kind: RequestKind
    system: str
    user: str
    seed: int
    params: CompletionParams

    def unit(self, *parts: object) -> float:
        """Deterministic float in [0, 1) keyed by this request."""

        return stable_unit(self.seed, self.params.seed, self.system, self.user, *parts)


@dataclass(frozen=True)
class ScriptedRule:
    kind: RequestKind
    name: str
    respond: Callable[[ScriptedRequest], str]
    predicate: Callable[[ScriptedRequest], bool] = field(default=lambda request: True)
    fallback: bool = False


@dataclass(frozen=True)
class ScriptedRuleSet:
    rules: Tuple[ScriptedRule, ...]

    def __post_init__(self):
        covered = {rule.kind for rule in self.rules if rule.fallback}
        missing = [kind.value for kind in RequestKind if kind not in covered]
        if missing:
            raise ContractError(f"scripted rule set has no default rule for {missing}")

    def with_rules(self, *extra: ScriptedRule) -> "ScriptedRuleSet":
        """Custom rules take precedence over the existing ones."""

        return ScriptedRuleSet(tuple(extra) + self.rules)

    def match(self, request: ScriptedRequest) -> ScriptedRule:
        for rule in self.rules:
            if rule.kind == request.kind and rule.predicate(request):
                return rule
        raise ContractError(f"no scripted rule for {request.kind.value}")  # unreachable for a total set


def detect_kind(system: str, user: str) -> RequestKind:
    if "You are joining a social network" in system:
        return RequestKind.FOLLOW
    if "impartial judge" in system:
        return RequestKind.JUDGE
    if "diligent researcher" in system:
        return RequestKind.ANALYSIS
    if "journalist" in system:
        return RequestKind.NEWS
    if "attitude_dist" in user:
        return RequestKind.ATTITUDE
    if "takeaways" in user:
        return RequestKind.LESSONS
    if "Post a tweet" in user:
        return RequestKind.TWEET
    return RequestKind.GENERIC


class ScriptedProvider:
    def __init__(self, rules: ScriptedRuleSet, seed: int = 0):
        self.rules = rules
        self.seed = seed
        self.provider_id = f"scripted:{seed}"
        self.calls: Counter = Counter()
        self._lock = threading.Lock()

    def complete(self, messages: Sequence[Message], params: CompletionParams) -> str:
        system = "\n".join(m["content"] for m in messages if m.get("role") == "system")
        users = [m["content"] for m in messages if m.get("role") == "user"]
        user = users[-1] if users else ""
        request = ScriptedRequest(detect_kind(system, user), system, user, self.seed, params)
        with self._lock:
            self.calls[request.kind] += 1
        return self.rules.match(request).respond(request)

    @property
    def total_calls(self) -> int:
        with self._lock:
            return sum(self.calls.values())


def scripted_backend(rules: Optional[ScriptedRuleSet] = None, seed: int = 0) -> ScriptedProvider:
    return ScriptedProvider(rules or default_rules(), seed)


# --- Feature helpers -----------------------------------------------------------------------


def find_policy_keywords(text: str) -> List[Tuple[PolicyCategory, PolicyEffort]]:
    lowered = text.lower()
    return [key for key, phrase in POLICY_KEYWORDS.items() if phrase.lower() in lowered]


def find_stance_markers(text: str) -> List[StanceType]:
    lowered = text.lower()
    return [stance for stance, marker in STANCE_MARKERS.items() if marker in lowered]


def _profile_of(request: ScriptedRequest) -> Optional[Dict[str, object]]:
    match = _PROFILE_IN_SYSTEM.search(request.system)
    if not match:
        return None
    try:
        return parse_profile_string(match.group(1))
    except ValueError:
        return None


def _section(text: str, start: str, end: str) -> str:
    if start not in text:
        return text
    tail = text.split(start, 1)[1]
    return tail.split(end, 1)[0] if end in tail else tail


def _logit(p: float) -> float:
    p = min(max(p, 1e-6), 1 - 1e-6)
    return math.log(p / (1 - p))


def _sigmoid(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x))


def hesitancy_to_distribution(h: float) -> List[float]:
    """Left/right-skewed four-point distribution with mass ``h`` on answers 1-2."""

    first = [round(0.6 * h, 4), round(0.4 * h, 4), round(0.4 * (1 - h), 4)]
    return first + [round(1.0 - sum(first), 4)]


def baseline_hesitancy(request: ScriptedRequest) -> float:
    profile = _profile_of(request) or {}
    u = stable_unit(request.seed, "baseline", profile.get("agent_id"), request.system)
    offset = _POLITICAL_OFFSET.get(str(profile.get("political_belief")), 0.0)
    return min(0.95, max(0.05, BASE_HESITANCY + 0.3 * (u - 0.5) + offset))


# --- Default responders --------------------------------------------------------------------


def _respond_follow(request: ScriptedRequest) -> str:
    """Homophily: follow everyone listed who shares the agent's political belief."""

    me = _profile_of(request)
    match = _OTHERS_IN_USER.search(request.user)
    if me is None or not match:
        return ""
    picks = []
    for entry in match.group(1).split("; "):
        try:
            other = parse_profile_string(entry)
        except ValueError:
            continue
        if other.get("political_belief") == me.get("political_belief"):
            picks.append(str(other["agent_id"]))
    return ", ".join(picks)


def _respond_lessons(request: ScriptedRequest) -> str:
    content = request.user.split("Summarize", 1)[0]
    count = _TAKEAWAY_COUNT.search(request.user)
    k = int(count.group(1)) if count else 3

    lessons: List[List[object]] = []
    for key in find_policy_keywords(content):
        lessons.append([f"The government announced a policy: {POLICY_KEYWORDS[key]}", 0.9])
    for stance in find_stance_markers(content):
        lessons.append([f"I read that {STANCE_MARKERS[stance]}", 0.7])
    risk = _RISK_RATE.search(content)
    if risk:
        lessons.append([f"{risk.group(1)}% of emergency department visits are related to COVID-19", 0.4])
    if not lessons:
        lessons.append(["Nothing I read this week changes how I think about vaccines", 0.5])
    return json.dumps(lessons[:k])


def _respond_tweet(request: ScriptedRequest) -> str:
    block = _section(request.user, "learned recently:", "Post a tweet")
    for line in block.strip().splitlines():
        match = _LESSON_LINE.match(line)
        if match and match.group(1):
            return f"Thinking about this week: {match.group(1)}"
    return "Another week of COVID-19 news. Staying informed."


def _respond_attitude(request: ScriptedRequest) -> str:
    lesson_block = _section(request.user, LESSONS_HEADER, PREVIOUS_HEADER)

    previous = _PREVIOUS_DIST.search(request.user)
    if previous:
        values = [float(v) for v in re.findall(r"-?\d+(?:\.\d+)?", previous.group(1))]
        start = sum(values[:2]) if len(values) == 4 else baseline_hesitancy(request)
    else:
        start = baseline_hesitancy(request)

    efforts = {effort for _, effort in find_policy_keywords(lesson_block)}
    shift = 0.0
    if PolicyEffort.STRONG in efforts:
        shift += STRONG_POLICY_SHIFT
    elif PolicyEffort.WEAK in efforts:
        shift += WEAK_POLICY_SHIFT

    lines = [line for line in lesson_block.splitlines() if line.strip()] or [lesson_block]
    balance = 0
    for line in lines:
        groups = {group_of(stance) for stance in find_stance_markers(line)}
        balance += (NewsGroup.POS in groups) - (NewsGroup.NEG in groups)
    shift += STANCE_SHIFT * balance

    risk = _RISK_RATE.search(request.user)
    if risk:
        shift += RISK_SHIFT * float(risk.group(1))

    jitter = 0.05 * (request.unit("jitter") - 0.5)
    logit = max(-LOGIT_LIMIT, min(LOGIT_LIMIT, _logit(start) - shift + jitter))
    h = _sigmoid(logit)

    if PolicyEffort.STRONG in efforts or PolicyEffort.WEAK in efforts:
        reasoning = "The government policy makes me more willing to get vaccinated"
    elif balance < 0:
        reasoning = "What I read makes me worry about the vaccine"
    elif balance > 0:
        reasoning = "What I read shows the vaccine is worth it"
    else:
        reasoning = "Nothing has changed my mind much"
    return json.dumps({"reasoning": reasoning, "attitude_dist": hesitancy_to_distribution(h)})


def _respond_judge(request: ScriptedRequest) -> str:
    return json.dumps({"reasoning": "The agent behaves consistently with its profile.", "rating": "4"})


def _respond_analysis(request: ScriptedRequest) -> str:
    turns = request.user.count("[agent]")
    return (
        f"Scripted analysis of {turns} agent turns. Attitudes move gradually; policy announcements and "
        "news exposure are the main drivers of change."
    )


def _respond_news(request: ScriptedRequest) -> str:
    stances = find_stance_markers(request.user)
    marker = STANCE_MARKERS[stances[0]] if stances else "officials continue to monitor COVID-19"
    number = int(request.unit("article") * 100000)
    return (
        f"Title: COVID-19 update #{number:05d}\n\n"
        f"Reports this week say that {marker}. Local officials and residents describe what this means for the "
        f"community, and health workers answer common questions about the weeks ahead."
    )


def _respond_generic(request: ScriptedRequest) -> str:
    return "OK."


def default_rules() -> ScriptedRuleSet:
    return ScriptedRuleSet(
        (
            ScriptedRule(RequestKind.FOLLOW, "homophily", _respond_follow, fallback=True),
            ScriptedRule(RequestKind.LESSONS, "echo-features", _respond_lessons, fallback=True),
            ScriptedRule(RequestKind.TWEET, "echo-top-lesson", _respond_tweet, fallback=True),
            ScriptedRule(RequestKind.ATTITUDE, "policy-sensitive", _respond_attitude, fallback=True),
            ScriptedRule(RequestKind.JUDGE, "constant-rating", _respond_judge, fallback=True),
            ScriptedRule(RequestKind.ANALYSIS, "summary", _respond_analysis, fallback=True),
            ScriptedRule(RequestKind.NEWS, "stance-echo", _respond_news, fallback=True),
            ScriptedRule(RequestKind.GENERIC, "ack", _respond_generic, fallback=True),
        )
    )
