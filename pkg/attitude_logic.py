"""
Vaccine-attitude distributions: repair, temperature modulation, sampling.

Poll scale (1..4): definitely not, probably not, probably yes, definitely yes.
Answers 1 and 2 count as vaccine-hesitant.
"""

import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import softmax

from errors import ContractError
from models import DISTRIBUTION_TOLERANCE, AttitudeDistribution, AttitudeSample

logger = logging.getLogger(__name__)

EPSILON = 1e-9
UNIFORM = (0.25, 0.25, 0.25, 0.25)

# repair event labels, also used as run-record counter keys
REPAIR_RENORMALIZED = "renormalized"
REPAIR_CLAMPED = "clamped_negative"
REPAIR_FALLBACK_PREVIOUS = "fallback_previous"
REPAIR_FALLBACK_UNIFORM = "fallback_uniform"

ATTITUDE_WORDING = {
    1: "I will definitely not get vaccinated",
    2: "I will probably not get vaccinated",
    3: "I will probably get vaccinated",
    4: "I will definitely get vaccinated",
}


def _exact(values: Sequence[float]) -> AttitudeDistribution:
    total = math.fsum(values)
    return AttitudeDistribution(p=tuple(v / total for v in values))


def repair_attitude(
    raw: Optional[Sequence[float]],
    fallback: Optional[AttitudeDistribution] = None,
) -> Tuple[AttitudeDistribution, Optional[str]]:
    """Return a valid distribution and the repair event applied (None when the input was valid)."""

    def _fallback(reason: str) -> Tuple[AttitudeDistribution, str]:
        if fallback is not None:
            logger.warning("Attitude reply unusable (%s); reusing previous distribution", reason)
            return fallback, REPAIR_FALLBACK_PREVIOUS
        logger.warning("Attitude reply unusable (%s); falling back to uniform", reason)
        return AttitudeDistribution(p=UNIFORM), REPAIR_FALLBACK_UNIFORM

    if raw is None:
        return _fallback("missing")
    try:
        values = [float(v) for v in raw]
    except (TypeError, ValueError):
        return _fallback("non-numeric entries")
    if len(values) != 4:
        return _fallback(f"{len(values)} entries")
    if not all(math.isfinite(v) for v in values):
        return _fallback("non-finite entries")

    event = None
    if any(v < 0 for v in values):
        values = [max(0.0, v) for v in values]
        event = REPAIR_CLAMPED

    total = math.fsum(values)
    if abs(total - 1.0) <= DISTRIBUTION_TOLERANCE:
        return _exact(values), event
    if 0.5 <= total <= 1.5:
        logger.info("Renormalized attitude distribution (sum %.4f)", total)
        return _exact(values), event or REPAIR_RENORMALIZED
    return _fallback(f"sum {total:.4f} outside [0.5, 1.5]")


def validate_and_repair(
    raw: Optional[Sequence[float]],
    fallback: Optional[AttitudeDistribution] = None,
) -> AttitudeDistribution:
    return repair_attitude(raw, fallback)[0]


def modulate(distribution: AttitudeDistribution, temperature: float) -> AttitudeDistribution:
    """Sharpen (T < 1) or flatten (T > 1): p_i ** (1/T), renormalized."""

    if not temperature > 0:
        raise ContractError(f"modulation temperature must be > 0 (got {temperature})")
    logits = np.log(np.maximum(np.asarray(distribution.p, dtype=float), EPSILON)) / temperature
    probabilities = softmax(logits)
    return _exact(probabilities.tolist())


def sample_attitude(distribution: AttitudeDistribution, rng: np.random.Generator) -> AttitudeSample:
    p = np.asarray(distribution.p, dtype=float)
    value = int(rng.choice(4, p=p / p.sum())) + 1
    return AttitudeSample.from_value(value)


def hesitancy_fraction(samples: Sequence[AttitudeSample]) -> float:
    if not samples:
        raise ContractError("hesitancy fraction of an empty population")
    return sum(1 for sample in samples if sample.hesitant) / len(samples)


def hesitant_mass(distributions: Sequence[AttitudeDistribution]) -> float:
    """Mean probability mass on answers 1-2; the expectation of the sampled fraction."""

    if not distributions:
        raise ContractError("hesitant mass of an empty population")
    return math.fsum(d.hesitant_mass for d in distributions) / len(distributions)


def describe_attitude(value: int) -> str:
    try:
        return ATTITUDE_WORDING[value]
    except KeyError:
        raise ContractError(f"attitude value must be in 1..4 (got {value})")


def format_distribution(distribution: AttitudeDistribution) -> List[float]:
    return [round(p, 4) for p in distribution.p]
