"""
Persona sampling from marginal demographic distributions.

The bundled marginals transcribe a national survey table. Each attribute is
drawn independently; the occupation column in the source sums above 100%, so
every attribute is normalized at load time and its raw sum kept for reporting.
"""

import json
import logging
import math
import re
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np
from pydantic import ValidationError

from errors import (
    EmptyCategoryError,
    MarginalsLoadError,
    MissingAttributeError,
    NegativeProbabilityError,
    PersonaLoadError,
)
from models import DEMOGRAPHIC_ATTRIBUTES, CategoryWeight, DemographicMarginals, Persona
from seeding import derive_rng

logger = logging.getLogger(__name__)

BUNDLED_MARGINALS = Path(__file__).parent / "data" / "demographic_marginals.json"

OPEN_AGE_BUCKET_MAX = 90

_AGE_RANGE = re.compile(r"^\s*(\d+)\s*[-–]\s*(\d+)\s*$")
_AGE_OPEN = re.compile(r"^\s*(\d+)\s*\+\s*$")

# Sampling order is part of the reproducibility contract; do not reorder.
_DRAW_ORDER: Tuple[str, ...] = DEMOGRAPHIC_ATTRIBUTES

_PROFILE_FIELDS: Tuple[Tuple[str, str], ...] = (
    ("Age", "age"),
    ("Race/Ethnicity", "race_ethnicity"),
    ("Education", "education"),
    ("Occupation", "occupation"),
    ("Political belief", "political_belief"),
    ("Religion", "religion"),
)


def age_bounds(age_group: str) -> Tuple[int, int]:
    """Inclusive integer bounds for an age-group label such as ``"25-34"`` or ``"75+"``."""

    match = _AGE_RANGE.match(age_group)
    if match:
        low, high = int(match.group(1)), int(match.group(2))
        if low > high:
            raise MarginalsLoadError(f"age group {age_group!r} has inverted bounds")
        return low, high
    match = _AGE_OPEN.match(age_group)
    if match:
        low = int(match.group(1))
        return low, max(low, OPEN_AGE_BUCKET_MAX)
    raise MarginalsLoadError(f"age group {age_group!r} is not a range like '25-34' or '75+'")


def _read_attribute(name: str, block: Union[dict, list]) -> Tuple[List[Tuple[str, float]], float]:
    if isinstance(block, dict):
        pairs = list(block.items())
    elif isinstance(block, list):
        pairs = []
        for entry in block:
            if isinstance(entry, dict):
                pairs.append((entry.get("category"), entry.get("probability")))
            elif isinstance(entry, (list, tuple)) and len(entry) == 2:
                pairs.append((entry[0], entry[1]))
            else:
                raise MarginalsLoadError(f"{name}: malformed category entry {entry!r}")
    else:
        raise MarginalsLoadError(f"{name}: expected a mapping or list of categories")

    if not pairs:
        raise EmptyCategoryError(f"{name}: empty category list")

    parsed: List[Tuple[str, float]] = []
    for category, weight in pairs:
        if not isinstance(category, str) or not category:
            raise MarginalsLoadError(f"{name}: category names must be non-empty strings")
        try:
            value = float(weight)
        except (TypeError, ValueError):
            raise MarginalsLoadError(f"{name}/{category}: probability {weight!r} is not a number")
        if not math.isfinite(value):
            raise MarginalsLoadError(f"{name}/{category}: probability must be finite")
        if value < 0:
            raise NegativeProbabilityError(f"{name}/{category}: negative probability {value}")
        parsed.append((category, value))

    total = sum(value for _, value in parsed)
    if total <= 0:
        raise MarginalsLoadError(f"{name}: probabilities sum to zero")
    return parsed, total


def marginals_from_mapping(data: dict) -> DemographicMarginals:
    """Validate and normalize an in-memory marginals mapping."""

    if not isinstance(data, dict):
        raise MarginalsLoadError("marginals must be a mapping of attribute -> categories")

    attributes: Dict[str, List[CategoryWeight]] = {}
    raw_sums: Dict[str, float] = {}
    for name in DEMOGRAPHIC_ATTRIBUTES:
        if name not in data:
            raise MissingAttributeError(f"missing attribute {name!r}")
        parsed, total = _read_attribute(name, data[name])
        raw_sums[name] = total
        attributes[name] = [
            CategoryWeight(category=category, probability=value / total) for category, value in parsed
        ]
        if abs(total - 1.0) > 1e-9:
            logger.info("Normalized %s marginals (raw sum %.4f)", name, total)

    for category in attributes["age_group"]:
        age_bounds(category.category)

    return DemographicMarginals(**attributes, raw_sums=raw_sums)


def load_marginals(path: Union[str, Path, None] = None) -> DemographicMarginals:
    """Load a marginals file (JSON, one block per attribute); defaults to the bundled table."""

    target = Path(path) if path is not None else BUNDLED_MARGINALS
    try:
        data = json.loads(target.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise MarginalsLoadError(f"marginals file not found: {target}")
    except json.JSONDecodeError as exc:
        raise MarginalsLoadError(f"marginals file {target} is not valid JSON: {exc}")
    return marginals_from_mapping(data)


def normalize_marginals(marginals: DemographicMarginals) -> DemographicMarginals:
    """Renormalize every attribute; a no-op on already normalized marginals."""

    data = {
        name: [(weight.category, weight.probability) for weight in marginals.attribute(name)]
        for name in DEMOGRAPHIC_ATTRIBUTES
    }
    normalized = marginals_from_mapping(data)
    return normalized.model_copy(update={"raw_sums": dict(marginals.raw_sums) or normalized.raw_sums})


def _draw(marginals: DemographicMarginals, name: str, rng: np.random.Generator) -> str:
    categories = marginals.categories(name)
    probabilities = np.asarray(marginals.probabilities(name), dtype=float)
    index = int(rng.choice(len(categories), p=probabilities / probabilities.sum()))
    return categories[index]


def sample_persona(marginals: DemographicMarginals, agent_id: int, rng: np.random.Generator) -> Persona:
    drawn = {name: _draw(marginals, name, rng) for name in _DRAW_ORDER}
    low, high = age_bounds(drawn["age_group"])
    age = int(rng.integers(low, high + 1))
    return Persona(agent_id=agent_id, age=age, **drawn)


def sample_population(marginals: DemographicMarginals, n: int, seed: int) -> List[Persona]:
    """One persona per agent id; each agent draws from its own seeded stream."""

    return [sample_persona(marginals, agent_id, derive_rng(seed, "persona", agent_id)) for agent_id in range(n)]


def profile_string(persona: Persona, include_race: bool = False) -> str:
    fields = [f"{persona.agent_id}. {persona.gender}"]
    for label, attr in _PROFILE_FIELDS:
        if attr == "race_ethnicity" and not include_race:
            continue
        fields.append(f"{label}: {getattr(persona, attr)}")
    return "\t".join(fields)


def parse_profile_string(text: str) -> Dict[str, Union[int, str]]:
    """Inverse of :func:`profile_string`; returns the rendered fields keyed by persona attribute."""

    parts = text.strip("\n").split("\t")
    head = re.match(r"^\s*(\d+)\.\s+(.+?)\s*$", parts[0])
    if not head:
        raise ValueError(f"profile string does not start with 'ID. Gender': {parts[0]!r}")

    parsed: Dict[str, Union[int, str]] = {"agent_id": int(head.group(1)), "gender": head.group(2)}
    labels = {label: attr for label, attr in _PROFILE_FIELDS}
    for part in parts[1:]:
        label, sep, value = part.partition(": ")
        if not sep or label not in labels:
            raise ValueError(f"unrecognised profile field {part!r}")
        attr = labels[label]
        parsed[attr] = int(value) if attr == "age" else value
    return parsed


def save_personas(personas: List[Persona], path: Union[str, Path]) -> None:
    Path(path).write_text("".join(persona.model_dump_json() + "\n" for persona in personas), encoding="utf-8")


def load_personas(path: Union[str, Path]) -> List[Persona]:
    """Read a population saved by :func:`save_personas`; ids must run 0..n-1 in file order."""

    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise PersonaLoadError(f"personas file not found: {path}")

    personas: List[Persona] = []
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            persona = Persona.model_validate_json(line)
        except ValidationError as exc:
            raise PersonaLoadError(f"{path} line {number}: {exc.errors()[0]['msg']}")
        if persona.agent_id != len(personas):
            raise PersonaLoadError(f"{path} line {number}: expected agent id {len(personas)}, got {persona.agent_id}")
        personas.append(persona)
    return personas
