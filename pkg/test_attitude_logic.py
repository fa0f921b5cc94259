#!/usr/bin/env python3
"""
Attitude distributions: repair rules, temperature modulation, sampling and
the hesitancy fraction.
"""

import numpy as np
import pytest

from attitude_logic import (
    REPAIR_CLAMPED,
    REPAIR_FALLBACK_PREVIOUS,
    REPAIR_FALLBACK_UNIFORM,
    REPAIR_RENORMALIZED,
    UNIFORM,
    describe_attitude,
    format_distribution,
    hesitancy_fraction,
    hesitant_mass,
    modulate,
    repair_attitude,
    sample_attitude,
    validate_and_repair,
)
from errors import ContractError
from models import AttitudeDistribution, AttitudeSample


def test_valid_distribution_passes_through():
    dist, event = repair_attitude([0.1, 0.2, 0.3, 0.4])
    assert event is None
    assert dist.p == pytest.approx((0.1, 0.2, 0.3, 0.4))


def test_near_unit_sum_is_renormalized():
    dist, event = repair_attitude([0.2, 0.2, 0.2, 0.3])
    assert event == REPAIR_RENORMALIZED
    assert sum(dist.p) == pytest.approx(1.0)
    assert dist.p[3] == pytest.approx(0.3 / 0.9)


def test_negative_entries_are_clamped():
    dist, event = repair_attitude([-0.1, 0.3, 0.4, 0.4])
    assert event == REPAIR_CLAMPED
    assert dist.p[0] == 0.0
    assert sum(dist.p) == pytest.approx(1.0)


@pytest.mark.parametrize(
    "raw",
    [None, [0.5, 0.5], [1, 1, 1, 1, 1], [0.9, 0.9, 0.9, 0.9], [float("nan"), 0.3, 0.3, 0.4], ["a", "b", "c", "d"]],
)
def test_unusable_replies_fall_back(raw):
    dist, event = repair_attitude(raw)
    assert event == REPAIR_FALLBACK_UNIFORM
    assert dist.p == UNIFORM

    previous = AttitudeDistribution(p=(0.7, 0.1, 0.1, 0.1))
    dist, event = repair_attitude(raw, fallback=previous)
    assert event == REPAIR_FALLBACK_PREVIOUS
    assert dist == previous


def test_validate_and_repair_returns_the_repaired_distribution():
    previous = AttitudeDistribution(p=(0.7, 0.1, 0.1, 0.1))
    assert validate_and_repair([0.1, 0.2, 0.3, 0.4]).p == pytest.approx((0.1, 0.2, 0.3, 0.4))
    assert validate_and_repair([0.2, 0.2, 0.2, 0.3]).p[3] == pytest.approx(0.3 / 0.9)
    assert validate_and_repair([0.5, 0.5]).p == UNIFORM
    assert validate_and_repair(None, fallback=previous) == previous
    for raw in ([-0.1, 0.3, 0.4, 0.4], [3.0, 0.0, 0.0, 0.0]):
        assert validate_and_repair(raw, previous) == repair_attitude(raw, previous)[0]


def test_modulation_identity_and_sharpening():
    base = AttitudeDistribution(p=(0.1, 0.2, 0.3, 0.4))
    assert modulate(base, 1.0).p == pytest.approx(base.p)

    sharp = modulate(base, 0.5)
    assert sharp.p == pytest.approx((1 / 30, 4 / 30, 9 / 30, 16 / 30))

    flat = modulate(base, 50.0)
    assert max(flat.p) - min(flat.p) < 0.05


def _random_distributions(seed, count=200):
    rng = np.random.default_rng(seed)
    # keep every entry well above the log floor
    for weights in rng.dirichlet(np.ones(4), size=count):
        yield AttitudeDistribution(p=tuple(0.02 + 0.92 * weights)), rng


def test_modulation_keeps_argmax_and_order():
    for dist, rng in _random_distributions(21):
        temperature = float(rng.uniform(0.2, 5.0))
        modulated = modulate(dist, temperature).p
        assert int(np.argmax(modulated)) == int(np.argmax(dist.p))
        for i in range(4):
            for j in range(4):
                if dist.p[i] > dist.p[j]:
                    assert modulated[i] >= modulated[j]


def test_modulation_composes_multiplicatively():
    for dist, rng in _random_distributions(22):
        t1, t2 = (float(value) for value in rng.uniform(0.5, 2.0, size=2))
        assert modulate(modulate(dist, t1), t2).p == pytest.approx(modulate(dist, t1 * t2).p, rel=1e-6, abs=1e-9)


def test_modulation_flattens_to_uniform():
    for dist, _ in _random_distributions(23, count=50):
        assert modulate(dist, 1e6).p == pytest.approx(UNIFORM, abs=1e-5)


def test_modulation_handles_zero_mass_and_rejects_bad_temperature():
    dist = modulate(AttitudeDistribution(p=(1.0, 0.0, 0.0, 0.0)), 2.0)
    assert sum(dist.p) == pytest.approx(1.0)
    assert dist.p[0] > 0.99
    with pytest.raises(ContractError):
        modulate(dist, 0.0)


def test_sampling_is_seeded_and_matches_distribution():
    dist = AttitudeDistribution(p=(0.1, 0.2, 0.3, 0.4))
    first = [sample_attitude(dist, np.random.default_rng(3)).value for _ in range(5)]
    second = [sample_attitude(dist, np.random.default_rng(3)).value for _ in range(5)]
    assert first == second

    rng = np.random.default_rng(0)
    samples = [sample_attitude(dist, rng) for _ in range(20000)]
    assert hesitancy_fraction(samples) == pytest.approx(0.3, abs=0.015)


def test_point_mass_sampling():
    rng = np.random.default_rng(1)
    sample = sample_attitude(AttitudeDistribution(p=(0.0, 0.0, 0.0, 1.0)), rng)
    assert sample == AttitudeSample(value=4, hesitant=False)


def test_hesitancy_helpers():
    samples = [AttitudeSample.from_value(v) for v in (1, 2, 3, 4)]
    assert hesitancy_fraction(samples) == 0.5
    dists = [AttitudeDistribution(p=(0.5, 0.0, 0.5, 0.0)), AttitudeDistribution(p=(0.0, 0.0, 0.0, 1.0))]
    assert hesitant_mass(dists) == pytest.approx(0.25)
    with pytest.raises(ContractError):
        hesitancy_fraction([])
    with pytest.raises(ContractError):
        hesitant_mass([])


def test_sample_flag_is_consistent():
    with pytest.raises(ValueError):
        AttitudeSample(value=3, hesitant=True)


def test_wording_and_formatting():
    assert describe_attitude(1) == "I will definitely not get vaccinated"
    with pytest.raises(ContractError):
        describe_attitude(5)
    assert format_distribution(AttitudeDistribution(p=(0.12344, 0.2, 0.3, 0.37656))) == [0.1234, 0.2, 0.3, 0.3766]


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
