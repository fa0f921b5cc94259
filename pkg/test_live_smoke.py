#!/usr/bin/env python3
"""
Live smoke test against a real chat-completions server.

Skipped unless VACSIM_LIVE_BASE_URL is set (a .env file works too), e.g.
    VACSIM_LIVE_BASE_URL=http://localhost:8000/v1 VACSIM_LIVE_MODEL=meta-llama/Llama-3.1-8B-Instruct \
        python test_live_smoke.py
"""

import os

import pytest
from dotenv import load_dotenv

from attitude_logic import REPAIR_FALLBACK_PREVIOUS, REPAIR_FALLBACK_UNIFORM
from models import BackendKind, ProviderConfig, SimulationConfig
from simulation_logic import run_batch

load_dotenv()

LIVE_BASE_URL = os.environ.get("VACSIM_LIVE_BASE_URL")

pytestmark = pytest.mark.skipif(not LIVE_BASE_URL, reason="VACSIM_LIVE_BASE_URL not set")


def test_short_run_with_live_model(tmp_path):
    provider = ProviderConfig(
        backend=BackendKind.HTTP,
        model=os.environ.get("VACSIM_LIVE_MODEL", ProviderConfig().model),
        base_url=LIVE_BASE_URL,
        parallelism=4,
    )
    config = SimulationConfig(n_agents=10, steps=8, warmup=3, corpus_size=16, provider=provider)
    records = run_batch(config, seeds=[0], output_dir=tmp_path)

    record = records[0]
    assert not record.aborted, record.abort_reason
    assert len(record.steps) == 8
    assert record.event_counts["provider_calls"] > 0
    # a usable model answers most attitude prompts without a fallback
    fallbacks = record.event_counts.get(REPAIR_FALLBACK_UNIFORM, 0) + record.event_counts.get(REPAIR_FALLBACK_PREVIOUS, 0)
    assert fallbacks <= record.config.n_agents
    assert (tmp_path / "logs").is_dir()


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
