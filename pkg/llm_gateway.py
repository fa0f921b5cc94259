"""
Chat provider contract, retries, and lenient JSON extraction for LLM replies.

Every model call in the simulator goes through :func:`complete_detailed`, which
applies the process-wide parallelism limit and exponential-backoff retries.
Replies are parsed with a fixed repair pipeline (no model-based repair):

1. strip Markdown code fences
2. cut the first JSON value, tracking strings and nesting
3. drop trailing commas; trim stray quotes/brackets and re-balance delimiters
4. fall back to ``ast.literal_eval`` for Python-style literals
"""

import ast
import json
import logging
import math
import os
import re
import threading
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Protocol, Sequence, Tuple

import backoff
from dotenv import load_dotenv
from openai import OpenAI, OpenAIError
from pydantic import ValidationError

from errors import ContractError, JudgeParseError, ProviderError
from memory_logic import clamp_importance
from models import BackendKind, ProviderConfig
from models_raw import AttitudeReplyRaw, JudgeReplyRaw, LessonRaw

load_dotenv()

logger = logging.getLogger(__name__)

Message = Dict[str, str]


@dataclass(frozen=True)
class CompletionParams:
    temperature: float = 0.7
    max_tokens: int = 512
    seed: Optional[int] = None


class ChatProvider(Protocol):
    provider_id: str

    def complete(self, messages: Sequence[Message], params: CompletionParams) -> str:
        ...


class OpenAIChatProvider:
    """Any server speaking the chat-completions shape (hosted APIs, vLLM, Ollama, ...)."""

    def __init__(self, model: str, base_url: Optional[str] = None, api_key: Optional[str] = None, timeout: float = 120.0):
        self.model = model
        self.provider_id = f"http:{model}"
        self._client = OpenAI(api_key=api_key or "not-needed", base_url=base_url, timeout=timeout, max_retries=0)

    def complete(self, messages: Sequence[Message], params: CompletionParams) -> str:
        request: Dict[str, Any] = {
            "model": self.model,
            "messages": list(messages),
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        }
        if params.seed is not None:
            request["seed"] = params.seed
        try:
            completion = self._client.chat.completions.create(**request)
        except OpenAIError as exc:
            raise ProviderError(f"chat completion failed: {exc}") from exc

        content = completion.choices[0].message.content if completion.choices else None
        if not content:
            raise ProviderError("Empty response from chat.completions")
        return content


def build_chat_provider(config: ProviderConfig, seed: int = 0) -> ChatProvider:
    if config.backend == BackendKind.SCRIPTED:
        from scripted_backend import default_rules, scripted_backend

        return scripted_backend(default_rules(), seed)

    api_key = os.environ.get(config.api_key_env) or os.environ.get("OPENAI_API_KEY")
    base_url = config.base_url or os.environ.get("VACSIM_BASE_URL")
    return OpenAIChatProvider(config.model, base_url=base_url, api_key=api_key)


# --- Parallelism and retries ---------------------------------------------------------------

_limiter = threading.BoundedSemaphore(8)


def configure_parallelism(limit: int) -> None:
    """Replace the global in-flight request bound."""

    global _limiter
    if limit < 1:
        raise ContractError(f"parallelism must be >= 1 (got {limit})")
    _limiter = threading.BoundedSemaphore(limit)


@dataclass(frozen=True)
class Completion:
    text: str
    attempts: int


def _log_backoff(details: Dict[str, Any]) -> None:
    logger.warning(
        "Provider call failed (attempt %d): %s; retrying in %.1fs",
        details["tries"],
        details.get("exception"),
        details.get("wait") or 0.0,
    )


def complete_detailed(
    provider: ChatProvider,
    messages: Sequence[Message],
    params: CompletionParams,
    max_retries: int = 3,
    base_delay: float = 1.5,
) -> Completion:
    if max_retries < 1:
        raise ContractError(f"max_retries must be >= 1 (got {max_retries})")

    attempts = 0

    @backoff.on_exception(
        backoff.expo,
        Exception,
        max_tries=max_retries,
        factor=base_delay,
        jitter=None,
        giveup=lambda exc: isinstance(exc, ContractError),
        on_backoff=_log_backoff,
    )
    def _call() -> str:
        nonlocal attempts
        attempts += 1
        with _limiter:
            return provider.complete(messages, params)

    try:
        text = _call()
    except ContractError:
        raise
    except Exception as exc:
        logger.error("Provider %s gave up after %d attempts: %s", provider.provider_id, attempts, exc)
        raise ProviderError(
            f"{provider.provider_id} failed after {attempts} attempts: {exc}", attempts=attempts
        ) from exc
    if attempts > 1:
        logger.info("Provider %s succeeded on attempt %d", provider.provider_id, attempts)
    return Completion(text=text, attempts=attempts)


def complete_with_retry(
    provider: ChatProvider,
    messages: Sequence[Message],
    params: CompletionParams,
    max_retries: int = 3,
    base_delay: float = 1.5,
) -> str:
    return complete_detailed(provider, messages, params, max_retries, base_delay).text


# --- JSON extraction and repair ------------------------------------------------------------

_FENCE = re.compile(r"```[a-zA-Z0-9_-]*\s*\n?(.*?)(?:```|$)", re.DOTALL)
_TRAILING_COMMA = re.compile(r",\s*([\]}])")
_TRAILING_GARBAGE = " \t\r\n\"'`,]}"
_CLOSERS = {"[": "]", "{": "}"}


def strip_fences(text: str) -> str:
    match = _FENCE.search(text)
    if match:
        return match.group(1)
    return text


def _first_value(text: str) -> Optional[str]:
    """Slice from the first '[' or '{' to its matching closer (or to the end if unbalanced)."""

    starts = [i for i in (text.find("["), text.find("{")) if i != -1]
    if not starts:
        return None
    start = min(starts)

    stack: List[str] = []
    in_string = False
    escaped = False
    for i in range(start, len(text)):
        char = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif char == "\\":
                escaped = True
            elif char == '"':
                in_string = False
            continue
        if char == '"':
            in_string = True
        elif char in _CLOSERS:
            stack.append(_CLOSERS[char])
        elif char in "]}":
            if not stack or stack[-1] != char:
                return text[start:i]
            stack.pop()
            if not stack:
                return text[start : i + 1]
    return text[start:]


def _balance(fragment: str) -> str:
    """Close an unterminated string and any open brackets."""

    stack: List[str] = []
    in_string = False
    escaped = False
    for char in fragment:
        if in_string:
            if escaped:
                escaped = False
            elif char == "\\":
                escaped = True
            elif char == '"':
                in_string = False
            continue
        if char == '"':
            in_string = True
        elif char in _CLOSERS:
            stack.append(_CLOSERS[char])
        elif char in "]}" and stack and stack[-1] == char:
            stack.pop()
    if escaped:
        fragment = fragment[:-1]
    if in_string:
        fragment += '"'
    return fragment + "".join(reversed(stack))


def _try_json(candidate: str) -> Tuple[bool, Any]:
    try:
        return True, json.loads(candidate)
    except (ValueError, RecursionError):
        return False, None


def _try_literal(candidate: str) -> Tuple[bool, Any]:
    try:
        return True, ast.literal_eval(candidate)
    except (ValueError, SyntaxError, TypeError, OverflowError, MemoryError, RecursionError):
        return False, None


def parse_json_lenient(text: str) -> Any:
    """Parse the first JSON value in ``text``, repairing common LLM formatting slips."""

    if not isinstance(text, str):
        raise ValueError("reply is not text")
    stripped = strip_fences(text).strip()

    ok, value = _try_json(stripped)
    if ok:
        return value

    candidate = _first_value(stripped)
    if candidate is None:
        raise ValueError("no JSON object or array found")

    uncomma = _TRAILING_COMMA.sub(r"\1", candidate)
    repaired = _balance(_TRAILING_COMMA.sub(r"\1", candidate.rstrip(_TRAILING_GARBAGE)))
    for attempt in (candidate, uncomma, repaired):
        ok, value = _try_json(attempt)
        if ok:
            return value
    for attempt in (candidate, repaired):
        ok, value = _try_literal(attempt)
        if ok:
            return value
    raise ValueError(f"unrecoverable JSON: {text[:120]!r}")


def _lesson_item(item: Any) -> Optional[LessonRaw]:
    if isinstance(item, dict):
        payload = {"lesson": item.get("lesson", item.get("text")), "importance": item.get("importance")}
    elif isinstance(item, (list, tuple)) and len(item) == 2:
        payload = {"lesson": item[0], "importance": item[1]}
    else:
        return None
    try:
        lesson = LessonRaw.model_validate(payload)
    except ValidationError:
        return None
    if not math.isfinite(lesson.importance):
        return None
    return lesson


def extract_lessons(text: str) -> List[Tuple[str, float]]:
    """``[[lesson, importance], ...]`` with importances clamped to [0, 1]; empty when unrecoverable."""

    try:
        value = parse_json_lenient(text)
    except ValueError:
        logger.warning("Could not parse lessons from reply: %r", text[:300])
        return []

    if isinstance(value, dict):
        value = [value]
    if isinstance(value, list) and len(value) == 2 and isinstance(value[0], str):
        value = [value]
    if not isinstance(value, list):
        logger.warning("Lesson reply is not a list: %r", text[:300])
        return []

    lessons: List[Tuple[str, float]] = []
    skipped = 0
    for item in value:
        parsed = _lesson_item(item)
        if parsed is None:
            skipped += 1
            continue
        lessons.append((parsed.lesson, clamp_importance(parsed.importance, parsed.lesson[:40])))
    if skipped:
        logger.warning("Skipped %d malformed lesson entries", skipped)
    return lessons


_DIST_FALLBACK = re.compile(r"attitude_dist['\"]?\s*[:=]\s*\[([^\]\[]*)\]")
_REASONING_FALLBACK = re.compile(r"reasoning['\"]?\s*:\s*['\"]([^'\"]*)")
_NUMBER = re.compile(r"-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?")


def extract_attitude(text: str) -> Optional[Tuple[str, List[float]]]:
    """
    ``(reasoning, [p1, p2, p3, p4])`` from an attitude reply.

    Returns None when no four-number distribution can be recovered; the
    caller then falls back to the previous distribution.
    """

    reasoning = ""
    values: Optional[List[float]] = None
    try:
        parsed = parse_json_lenient(text)
    except ValueError:
        parsed = None

    if isinstance(parsed, dict):
        try:
            reply = AttitudeReplyRaw.model_validate(parsed)
        except ValidationError:
            reply = None
        if reply is not None:
            reasoning, values = reply.reasoning, list(reply.attitude_dist)
    elif isinstance(parsed, list) and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in parsed):
        values = [float(v) for v in parsed]

    if values is None and isinstance(text, str):
        match = _DIST_FALLBACK.search(text)
        if match:
            values = [float(number) for number in _NUMBER.findall(match.group(1))]
            reason = _REASONING_FALLBACK.search(text)
            reasoning = reason.group(1) if reason else ""

    if values is None or len(values) != 4:
        logger.warning("Attitude reply has no usable distribution: %r", str(text)[:300])
        return None
    return reasoning, values


def extract_judge_rating(text: str) -> Tuple[str, int]:
    try:
        parsed = parse_json_lenient(text)
    except ValueError as exc:
        raise JudgeParseError(f"judge reply is not JSON: {exc}") from exc
    if not isinstance(parsed, dict):
        raise JudgeParseError("judge reply is not a JSON object")
    if "rating" not in parsed:
        raise JudgeParseError("judge reply has no 'rating'")
    try:
        reply = JudgeReplyRaw.model_validate(
            {"reasoning": str(parsed.get("reasoning", "")), "rating": parsed["rating"]}
        )
    except ValidationError as exc:
        raise JudgeParseError(f"invalid judge rating {parsed.get('rating')!r}") from exc
    return reply.reasoning, reply.rating
