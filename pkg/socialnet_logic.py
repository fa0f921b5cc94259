"""
Follow-graph generation by prompting each agent with everyone else's profile.

Every listed ID becomes an edge (agent -> listed ID): the prompted agent
follows the people it names. The graph is built once before step 0.
"""

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Set, Tuple, Union

from errors import ContractError, EdgeListLoadError, PartialNetworkError, ProviderError
from llm_gateway import ChatProvider, CompletionParams, complete_detailed
from models import FollowGraph, Persona
from persona_logic import profile_string
from prompt_templates import SOCIAL_NETWORK_SYSTEM, SOCIAL_NETWORK_USER
from seeding import derive_seed

logger = logging.getLogger(__name__)

_ID_TOKEN = re.compile(r"^\d+$")


@dataclass
class NetworkReport:
    n_agents: int = 0
    edges: int = 0
    dropped_tokens: Dict[int, int] = field(default_factory=dict)
    retries: int = 0

    @property
    def total_dropped(self) -> int:
        return sum(self.dropped_tokens.values())


def parse_follow_list(text: str, self_id: int, n_agents: int) -> Tuple[List[int], int]:
    """
    Parse ``"ID, ID, ..."`` into followee ids.

    Returns (ids in first-seen order, number of dropped tokens). Non-numeric
    tokens, duplicates, out-of-range ids and the agent's own id are dropped.
    """

    followees: List[int] = []
    seen: Set[int] = set()
    dropped = 0
    for raw in text.split(","):
        token = raw.strip().rstrip(".")
        if not token:
            continue
        if not _ID_TOKEN.match(token):
            dropped += 1
            continue
        followee = int(token)
        if followee == self_id or followee >= n_agents or followee in seen:
            dropped += 1
            continue
        seen.add(followee)
        followees.append(followee)
    return followees, dropped


def follow_messages(persona: Persona, personas: Sequence[Persona], include_race: bool = False) -> List[Dict[str, str]]:
    others = [profile_string(other, include_race) for other in personas if other.agent_id != persona.agent_id]
    return [
        {"role": "system", "content": SOCIAL_NETWORK_SYSTEM.render(profile=profile_string(persona, include_race))},
        {"role": "user", "content": SOCIAL_NETWORK_USER.render(others="; ".join(others))},
    ]


def generate_network(
    personas: Sequence[Persona],
    provider: ChatProvider,
    seed: int = 0,
    temperature: float = 0.7,
    parallelism: int = 8,
    max_retries: int = 3,
    retry_base_delay: float = 1.5,
    include_race: bool = False,
    artifact_path: Optional[Union[str, Path]] = None,
) -> Tuple[FollowGraph, NetworkReport]:
    if len(personas) < 2:
        raise ContractError("a social network needs at least two personas")

    n = len(personas)
    report = NetworkReport(n_agents=n)

    def _ask(persona: Persona) -> Tuple[int, str, int]:
        params = CompletionParams(temperature=temperature, seed=derive_seed(seed, "follow", persona.agent_id))
        completion = complete_detailed(
            provider, follow_messages(persona, personas, include_race), params, max_retries, retry_base_delay
        )
        return persona.agent_id, completion.text, completion.attempts

    edges: List[Tuple[int, int]] = []
    failure: Optional[ProviderError] = None
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        futures = [pool.submit(_ask, persona) for persona in personas]
        for future in futures:
            try:
                agent_id, text, attempts = future.result()
            except ProviderError as exc:
                failure = failure or exc
                continue
            followees, dropped = parse_follow_list(text, agent_id, n)
            edges.extend((agent_id, followee) for followee in followees)
            report.retries += attempts - 1
            if dropped:
                report.dropped_tokens[agent_id] = dropped
                logger.info("Agent %d: dropped %d follow tokens", agent_id, dropped)

    graph = FollowGraph(n_agents=n, edges=edges)
    report.edges = len(graph.edges)

    if failure is not None:
        if artifact_path is not None:
            save_edges(graph, artifact_path)
            logger.error("Network generation aborted; partial edge list written to %s", artifact_path)
        raise PartialNetworkError(
            f"network generation aborted: {failure}", graph=graph, attempts=failure.attempts
        ) from failure

    logger.info(
        "Generated follow graph: %d agents, %d edges, %d dropped tokens",
        n,
        report.edges,
        report.total_dropped,
    )
    return graph, report


def save_edges(graph: FollowGraph, path: Union[str, Path]) -> None:
    lines = [f"{follower},{followee}\n" for follower, followee in graph.edges]
    Path(path).write_text("".join(lines), encoding="utf-8")


def load_edges(path: Union[str, Path], n_agents: Optional[int] = None) -> FollowGraph:
    """Read ``follower,followee`` lines; ``n_agents`` defaults to one past the largest id."""

    edges: List[Tuple[int, int]] = []
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise EdgeListLoadError(f"edge list not found: {path}")

    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        parts = stripped.split(",")
        if len(parts) != 2 or not all(_ID_TOKEN.match(part.strip()) for part in parts):
            raise EdgeListLoadError(f"expected 'follower,followee', got {stripped!r}", line_number=number)
        follower, followee = (int(part) for part in parts)
        if follower == followee:
            raise EdgeListLoadError(f"self-loop on agent {follower}", line_number=number)
        if n_agents is not None and max(follower, followee) >= n_agents:
            raise EdgeListLoadError(f"agent id outside [0, {n_agents})", line_number=number)
        edges.append((follower, followee))

    if n_agents is None:
        n_agents = max((max(edge) for edge in edges), default=-1) + 1
    return FollowGraph(n_agents=n_agents, edges=edges)
