"""
Agent lesson memory with recency-decayed importance.

Saliency of a lesson learned at week d_i, queried at week d:

    gamma = importance + decay ** (d - d_i)

Retrieval min-max normalizes gamma over every lesson the agent holds and
returns the K most salient. Lessons are never evicted.
"""

import logging
from typing import Iterable, List, Mapping, Tuple, Union

from errors import ContractError
from models import Lesson, LessonSource, MemoryStore

logger = logging.getLogger(__name__)


def add_lessons(store: MemoryStore, lessons: Iterable[Union[Lesson, Mapping]]) -> MemoryStore:
    """
    Append lessons in order.

    Accepts validated ``Lesson`` objects or plain mappings with the same
    keys; a mapping's out-of-range importance is clamped into [0, 1].
    """

    for lesson in lessons:
        if not isinstance(lesson, Lesson):
            lesson = make_lesson(
                str(lesson["text"]),
                float(lesson["importance"]),
                int(lesson["created_at"]),
                LessonSource(lesson["source"]),
            )
        store.lessons.append(lesson)
    return store


def clamp_importance(value: float, context: str = "") -> float:
    if value != value:  # NaN
        logger.warning("Lesson importance is NaN%s; storing 0.0", f" ({context})" if context else "")
        return 0.0
    if value < 0.0 or value > 1.0:
        clamped = min(1.0, max(0.0, value))
        logger.warning(
            "Lesson importance %.3f outside [0, 1]%s; clamped to %.1f",
            value,
            f" ({context})" if context else "",
            clamped,
        )
        return clamped
    return value


def make_lesson(text: str, importance: float, created_at: int, source) -> Lesson:
    return Lesson(text=text, importance=clamp_importance(float(importance), text[:40]), created_at=created_at, source=source)


def saliency(lesson: Lesson, now: int, decay: float) -> float:
    if now < lesson.created_at:
        raise ContractError(
            f"saliency queried at week {now} for a lesson created at week {lesson.created_at}"
        )
    return lesson.importance + decay ** (now - lesson.created_at)


def top_k_salient(store: MemoryStore, now: int, k: int = 5) -> List[Tuple[Lesson, float]]:
    if k < 1:
        raise ContractError(f"k must be >= 1 (got {k})")
    if not store.lessons:
        return []

    gammas = [saliency(lesson, now, store.decay_rate) for lesson in store.lessons]
    low, high = min(gammas), max(gammas)
    span = high - low

    # gamma desc, then newer first, then insertion order
    order = sorted(
        range(len(store.lessons)),
        key=lambda i: (-gammas[i], -store.lessons[i].created_at, i),
    )
    selected = []
    for i in order[:k]:
        normalized = 1.0 if span == 0 else (gammas[i] - low) / span
        selected.append((store.lessons[i], normalized))
    return selected


def render_lessons(selection: List[Tuple[Lesson, float]]) -> str:
    """Lesson block for the attitude prompt, most salient first."""

    if not selection:
        return "(no lessons yet)"
    return "\n".join(
        f"{i}. {lesson.text} (saliency: {score:.2f})" for i, (lesson, score) in enumerate(selection, start=1)
    )
