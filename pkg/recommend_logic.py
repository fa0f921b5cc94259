"""
News and tweet recommendation by MaxSim over an agent's own tweets.

    news score  = max_j cos(emb(news), emb(tweet_j))
    tweet score = maxsim * tweet_decay ** age + follow_bias * [reader follows author]

Embeddings come from an OpenAI-compatible embeddings endpoint or, offline,
from a deterministic token-hashing embedder. Both are cached by text hash.
"""

import hashlib
import json
import logging
import os
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Protocol, Sequence, Union

import numpy as np
from openai import OpenAI, OpenAIError
from redis import Redis
from redis.exceptions import RedisError

from errors import ContractError, CorpusError, ProviderError
from models import EmbeddingBackend, NewsItem, ProviderConfig

logger = logging.getLogger(__name__)

DEFAULT_DIMENSION = 384

_TOKEN = re.compile(r"[a-z0-9']+")


class EmbeddingProvider(Protocol):
    provider_id: str
    dimension: int

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        """Unit-norm rows, one per text."""


def _normalize_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return matrix / norms


class HashingEmbedder:
    """Bag-of-tokens hashed into a fixed dimension, signed, L2-normalized."""

    def __init__(self, dimension: int = DEFAULT_DIMENSION):
        self.dimension = dimension
        self.provider_id = f"hashing-{dimension}"

    def _bucket(self, token: str):
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        value = int.from_bytes(digest, "big")
        return value % self.dimension, 1.0 if (value >> 63) & 1 else -1.0

    def embed_one(self, text: str) -> np.ndarray:
        vector = np.zeros(self.dimension, dtype=float)
        tokens = _TOKEN.findall(text.lower())
        for token in tokens:
            index, sign = self._bucket(token)
            vector[index] += sign
        if not tokens or not vector.any():
            # empty text still needs a stable unit vector
            index, sign = self._bucket(f"\x00{text}")
            vector[index] = sign
        return vector / np.linalg.norm(vector)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dimension), dtype=float)
        return np.vstack([self.embed_one(text) for text in texts])


class OpenAIEmbedder:
    """Embeddings endpoint client (input list of strings -> list of float vectors)."""

    def __init__(self, model: str, base_url: Optional[str] = None, api_key: Optional[str] = None, dimension: int = DEFAULT_DIMENSION):
        self.model = model
        self.dimension = dimension
        self.provider_id = f"http-{model}"
        self._client = OpenAI(api_key=api_key or "not-needed", base_url=base_url)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dimension), dtype=float)
        try:
            response = self._client.embeddings.create(model=self.model, input=list(texts))
        except OpenAIError as exc:
            raise ProviderError(f"embedding request failed: {exc}", attempts=1) from exc
        matrix = np.asarray([item.embedding for item in response.data], dtype=float)
        if matrix.shape != (len(texts), self.dimension):
            raise ProviderError(
                f"embedding endpoint returned shape {matrix.shape}, expected ({len(texts)}, {self.dimension})"
            )
        return _normalize_rows(matrix)


def build_embedder(config: ProviderConfig) -> EmbeddingProvider:
    if config.embedding_backend == EmbeddingBackend.HASHING:
        return HashingEmbedder(config.embedding_dim)
    base_url = config.embedding_base_url or os.environ.get("VACSIM_EMBEDDING_BASE_URL")
    api_key = os.environ.get(config.embedding_api_key_env) or os.environ.get("VACSIM_API_KEY")
    return OpenAIEmbedder(config.embedding_model, base_url=base_url, api_key=api_key, dimension=config.embedding_dim)


_redis_client: Optional[Redis] = None
_REDIS_DISABLED = False


def _get_redis() -> Optional[Redis]:
    """Singleton Redis client when REDIS_URL is set and reachable."""

    global _redis_client, _REDIS_DISABLED

    if _REDIS_DISABLED:
        return None
    if _redis_client is not None:
        return _redis_client

    redis_url = os.environ.get("REDIS_URL")
    if not redis_url:
        _REDIS_DISABLED = True
        return None
    try:
        client = Redis.from_url(redis_url, decode_responses=True)
        client.ping()
    except RedisError as exc:  # pragma: no cover - network dependent
        logger.warning("Redis embedding cache disabled: %s", exc)
        _REDIS_DISABLED = True
        return None

    _redis_client = client
    return _redis_client


def text_key(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class EmbeddingCache:
    """
    Read-mostly text-hash -> vector map shared by all agents.

    Inserts are insert-if-absent under a lock, so concurrent workers embedding
    the same text always observe one vector.
    """

    def __init__(self, provider: EmbeddingProvider, use_redis: bool = True):
        self.provider = provider
        self._vectors: Dict[str, np.ndarray] = {}
        self._lock = threading.Lock()
        self._redis = _get_redis() if use_redis else None
        self.hits = 0
        self.misses = 0

    def _redis_key(self, key: str) -> str:
        return f"vacsim:emb:{self.provider.provider_id}:{key}"

    def _from_redis(self, key: str) -> Optional[np.ndarray]:
        if self._redis is None:
            return None
        try:
            cached = self._redis.get(self._redis_key(key))
        except RedisError as exc:  # pragma: no cover - network dependent
            logger.warning("Redis cache read failed: %s", exc)
            return None
        return np.asarray(json.loads(cached), dtype=float) if cached else None

    def _to_redis(self, key: str, vector: np.ndarray) -> None:
        if self._redis is None:
            return
        try:
            self._redis.set(self._redis_key(key), json.dumps(vector.tolist()))
        except RedisError as exc:  # pragma: no cover - network dependent
            logger.warning("Redis cache write failed: %s", exc)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        keys = [text_key(text) for text in texts]
        pending: Dict[str, str] = {}
        with self._lock:
            for key, text in zip(keys, texts):
                if key in self._vectors:
                    self.hits += 1
                else:
                    pending.setdefault(key, text)

        # Redis round trips happen outside the lock
        remote = {key: self._from_redis(key) for key in pending}
        found = {key: vector for key, vector in remote.items() if vector is not None}
        missing = {key: text for key, text in pending.items() if key not in found}
        fresh = dict(zip(missing, self.provider.embed(list(missing.values())))) if missing else {}

        stored: List[str] = []
        with self._lock:
            for key, vector in found.items():
                self._vectors.setdefault(key, vector)
                self.hits += 1
            for key, vector in fresh.items():
                if key not in self._vectors:
                    self._vectors[key] = vector
                    self.misses += 1
                    stored.append(key)
            rows = [self._vectors[key] for key in keys]

        for key in stored:
            self._to_redis(key, fresh[key])
        if not rows:
            return np.zeros((0, self.provider.dimension), dtype=float)
        return np.vstack(rows)

    def save(self, path: Union[str, Path]) -> None:
        with self._lock:
            payload = {
                "provider": self.provider.provider_id,
                "vectors": {key: [round(float(x), 8) for x in vector] for key, vector in sorted(self._vectors.items())},
            }
        Path(path).write_text(json.dumps(payload, separators=(",", ":")), encoding="utf-8")

    def load(self, path: Union[str, Path]) -> int:
        target = Path(path)
        if not target.exists():
            return 0
        payload = json.loads(target.read_text(encoding="utf-8"))
        if payload.get("provider") != self.provider.provider_id:
            logger.warning(
                "Ignoring embedding cache %s built by %s", target, payload.get("provider")
            )
            return 0
        with self._lock:
            for key, values in payload.get("vectors", {}).items():
                self._vectors.setdefault(key, np.asarray(values, dtype=float))
        return len(payload.get("vectors", {}))


def max_sim(history: Union[np.ndarray, Sequence[np.ndarray]], candidate: np.ndarray) -> float:
    history = np.asarray(history, dtype=float)
    if history.size == 0:
        return 0.0
    if history.ndim == 1:
        history = history[None, :]
    candidate = np.asarray(candidate, dtype=float)
    if history.shape[1] != candidate.shape[-1]:
        raise ContractError(
            f"embedding dimension mismatch: history {history.shape[1]} vs candidate {candidate.shape[-1]}"
        )
    return float(np.max(history @ candidate))


def score_news(history: np.ndarray, news: np.ndarray) -> float:
    return max_sim(history, news)


def score_tweet(
    history: np.ndarray,
    tweet: np.ndarray,
    tweet_age: int,
    follows_author: bool,
    decay: float = 0.9,
    follow_bias: float = 0.3,
) -> float:
    if tweet_age < 0:
        raise ContractError(f"tweet age must be >= 0 (got {tweet_age})")
    return max_sim(history, tweet) * decay ** tweet_age + (follow_bias if follows_author else 0.0)


@dataclass(frozen=True)
class ScoredCandidate:
    item_id: str
    score: float
    tie_break_key: int


def sample_candidate_pool(corpus: Sequence[NewsItem], pool_size: int, rng: np.random.Generator) -> List[NewsItem]:
    if not corpus:
        raise CorpusError("news corpus is empty")
    if pool_size >= len(corpus):
        return list(corpus)
    indices = rng.choice(len(corpus), size=pool_size, replace=False)
    return [corpus[int(i)] for i in indices]


def top_k(
    candidates: Sequence[ScoredCandidate],
    k: int,
    rng: Optional[np.random.Generator] = None,
) -> List[ScoredCandidate]:
    if k < 1:
        raise ContractError(f"k must be >= 1 (got {k})")
    if not candidates:
        return []
    for candidate in candidates:
        if not np.isfinite(candidate.score):
            raise ContractError(f"non-finite score for {candidate.item_id}")

    if rng is not None and all(candidate.score == 0 for candidate in candidates):
        # cold start: nothing to rank against
        ordered = sorted(candidates, key=lambda c: c.tie_break_key)
        if len(ordered) <= k:
            return ordered
        picks = rng.choice(len(ordered), size=k, replace=False)
        return [ordered[int(i)] for i in picks]

    return sorted(candidates, key=lambda c: (-c.score, c.tie_break_key))[:k]
