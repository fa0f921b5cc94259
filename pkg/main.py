import logging
import os
from typing import Dict, List, Optional

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, ConfigDict, Field

from errors import ConfigError, ContractError, ProviderError, VacSimError
from eval_logic import compare_rankings, load_rankings_table
from models import BackendKind, Policy, Ranking, SimulationConfig
from simulation_logic import run_batch, summarize_batch, with_overrides


logger = logging.getLogger(__name__)

# Requests run synchronously inside the API; bigger studies belong to the CLI.
MAX_API_AGENTS = 50
MAX_API_STEPS = 30
MAX_API_SEEDS = 5


class RankCompareRequest(BaseModel):
    rankings: Optional[Dict[str, Dict[str, int]]] = None
    reference: Optional[Dict[str, int]] = None
    method: str = "auto"

    model_config = ConfigDict(extra="forbid")


class RankAgreement(BaseModel):
    ranking: str
    tau_b: float
    p_value: float
    p_method: str


class RankCompareResponse(BaseModel):
    reference: str
    results: List[RankAgreement]


class SimulateRequest(BaseModel):
    n_agents: int = Field(default=10, ge=1, le=MAX_API_AGENTS)
    steps: int = Field(default=6, ge=0, le=MAX_API_STEPS)
    warmup: int = Field(default=2, ge=0)
    temperature: float = Field(default=1.0, gt=0.0)
    news_mix: float = Field(default=0.5, ge=0.0, le=1.0)
    corpus_size: int = Field(default=40, ge=4, le=400)
    policy: Optional[Policy] = None
    seeds: List[int] = Field(default_factory=lambda: [0], min_length=1, max_length=MAX_API_SEEDS)
    backend: BackendKind = BackendKind.SCRIPTED

    model_config = ConfigDict(extra="forbid")


class SimulatedRun(BaseModel):
    seed: int
    trajectory: List[float]
    aborted: bool
    abort_reason: Optional[str] = None


class SimulateResponse(BaseModel):
    label: str
    end_hesitancy: float
    per_seed: List[float]
    runs: List[SimulatedRun]


app = FastAPI(title="VacSim API")


def _determine_allowed_origins() -> list[str]:
    """Return the list of origins permitted to call the API."""

    env_value = os.environ.get("ALLOWED_ORIGINS", "")
    if env_value:
        origins = [origin.strip() for origin in env_value.split(",") if origin.strip()]
        if origins:
            return origins

    return [
        "http://127.0.0.1:3000",
        "http://localhost:3000",
    ]


app.add_middleware(
    CORSMiddleware,
    allow_origins=_determine_allowed_origins(),
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


def _http_error(exc: VacSimError) -> HTTPException:
    if isinstance(exc, (ConfigError, ContractError)):
        return HTTPException(status_code=400, detail=str(exc))
    if isinstance(exc, ProviderError):
        return HTTPException(status_code=502, detail=str(exc))
    return HTTPException(status_code=422, detail=str(exc))


@app.post("/rank-compare", response_model=RankCompareResponse)
async def rank_compare(request: RankCompareRequest) -> RankCompareResponse:
    """Kendall tau-b of each ranking against the reference; defaults to the bundled table."""

    try:
        table = load_rankings_table()
        rankings = table.rankings
        reference, reference_name = table.reference, table.reference_name
        if request.rankings is not None:
            rankings = {name: Ranking(ranks=ranks) for name, ranks in request.rankings.items()}
        if request.reference is not None:
            reference, reference_name = Ranking(ranks=request.reference), "request"
        frame = compare_rankings(rankings, reference, request.method)
    except VacSimError as exc:
        raise _http_error(exc) from exc
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc

    return RankCompareResponse(
        reference=reference_name,
        results=[RankAgreement(**row) for row in frame.to_dict(orient="records")],
    )


@app.post("/simulate", response_model=SimulateResponse)
def simulate(request: SimulateRequest) -> SimulateResponse:
    """Run a small seeded batch and return its hesitancy trajectories."""

    try:
        config = SimulationConfig(
            n_agents=request.n_agents,
            steps=request.steps,
            warmup=request.warmup,
            temperature=request.temperature,
            news_mix=request.news_mix,
            corpus_size=request.corpus_size,
            policy=request.policy,
        )
        config = with_overrides(config, provider=config.provider.model_copy(update={"backend": request.backend}))
        records = run_batch(config, request.seeds)
        summary = summarize_batch(records)
    except VacSimError as exc:
        logger.exception("Simulation request failed")
        raise _http_error(exc) from exc
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    except Exception as exc:  # pragma: no cover - unexpected path
        logger.exception("Unexpected error while simulating")
        raise HTTPException(
            status_code=500,
            detail="Simulation failed. Check server logs for details.",
        ) from exc

    return SimulateResponse(
        label=summary.label,
        end_hesitancy=summary.mean,
        per_seed=summary.per_seed,
        runs=[
            SimulatedRun(
                seed=seed,
                trajectory=record.trajectory(),
                aborted=record.aborted,
                abort_reason=record.abort_reason,
            )
            for seed, record in zip(request.seeds, records)
        ],
    )


@app.get("/health")
@app.head("/health")
async def healthcheck() -> Dict[str, str]:
    """Lightweight health endpoint for readiness probes."""

    return {"status": "ok"}


def create_app() -> FastAPI:
    """Provide an app factory for tooling (e.g., uvicorn workers)."""

    return app
