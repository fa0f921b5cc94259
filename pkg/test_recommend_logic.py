#!/usr/bin/env python3
"""
Recommendation: hashing embedder, embedding cache, MaxSim scoring, top-K
selection and its cold-start sampling.
"""

import threading

import numpy as np
import pytest
from scipy.spatial import distance

from errors import ContractError, CorpusError
from models import NewsItem, StanceType
from recommend_logic import (
    EmbeddingCache,
    HashingEmbedder,
    ScoredCandidate,
    max_sim,
    sample_candidate_pool,
    score_news,
    score_tweet,
    text_key,
    top_k,
)


class CountingEmbedder(HashingEmbedder):
    def __init__(self):
        super().__init__(dimension=32)
        self.calls = 0
        self.texts = []

    def embed(self, texts):
        self.calls += 1
        self.texts.extend(texts)
        return super().embed(texts)


def test_hashing_embedder_is_deterministic_and_unit_norm():
    embedder = HashingEmbedder(dimension=64)
    first = embedder.embed(["Vaccines are safe", "", "Vaccines are safe"])
    assert first.shape == (3, 64)
    assert np.allclose(np.linalg.norm(first, axis=1), 1.0)
    assert np.allclose(first[0], first[2])
    assert np.allclose(HashingEmbedder(dimension=64).embed(["Vaccines are safe"])[0], first[0])


def test_similar_texts_score_higher():
    embedder = HashingEmbedder()
    history = embedder.embed(["the vaccine clinic opened downtown"])
    near, far = embedder.embed(["vaccine clinic downtown", "football scores tonight"])
    assert max_sim(history, near) > max_sim(history, far)


def test_cache_embeds_each_text_once():
    embedder = CountingEmbedder()
    cache = EmbeddingCache(embedder, use_redis=False)
    cache.embed(["a b", "c d"])
    cache.embed(["a b", "c d", "e f"])
    assert embedder.texts == ["a b", "c d", "e f"]
    assert cache.hits == 2
    assert cache.misses == 3
    assert cache.embed([]).shape == (0, 32)


def test_cache_concurrent_inserts_agree():
    cache = EmbeddingCache(CountingEmbedder(), use_redis=False)
    results = []

    def worker():
        results.append(cache.embed(["shared text"])[0])

    threads = [threading.Thread(target=worker) for _ in range(8)]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
    assert all(np.array_equal(results[0], row) for row in results)


class LockCheckingRedis:
    """In-memory stand-in for the Redis client that records calls made under the cache lock."""

    def __init__(self, store):
        self.store = store
        self.cache = None
        self.calls_under_lock = 0

    def get(self, key):
        self.calls_under_lock += self.cache._lock.locked()
        return self.store.get(key)

    def set(self, key, value):
        self.calls_under_lock += self.cache._lock.locked()
        self.store[key] = value


def _with_redis(cache, store):
    client = LockCheckingRedis(store)
    client.cache = cache
    cache._redis = client
    return client


def test_cache_talks_to_redis_outside_the_lock():
    store = {}
    writer = EmbeddingCache(HashingEmbedder(dimension=32), use_redis=False)
    writer_client = _with_redis(writer, store)
    vectors = writer.embed(["a b", "c d", "a b"])
    assert len(store) == 2
    assert writer.misses == 2

    reader = EmbeddingCache(CountingEmbedder(), use_redis=False)
    reader_client = _with_redis(reader, store)
    assert np.allclose(reader.embed(["c d", "a b"]), vectors[[1, 0]])
    assert reader.provider.calls == 0
    assert reader.hits == 2
    assert writer_client.calls_under_lock == reader_client.calls_under_lock == 0


def test_cache_save_and_load(tmp_path):
    cache = EmbeddingCache(HashingEmbedder(dimension=32), use_redis=False)
    vector = cache.embed(["persisted"])[0]
    path = tmp_path / "embeddings.json"
    cache.save(path)

    fresh = EmbeddingCache(CountingEmbedder(), use_redis=False)
    assert fresh.load(path) == 1
    assert np.allclose(fresh.embed(["persisted"])[0], vector, atol=1e-7)
    assert fresh.provider.calls == 0

    other = EmbeddingCache(HashingEmbedder(dimension=16), use_redis=False)
    assert other.load(path) == 0
    assert other.load(tmp_path / "missing.json") == 0


def test_text_key_is_sha256():
    assert text_key("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"


def test_news_score_is_max_sim_and_empty_history():
    history = np.array([[1.0, 0.0], [0.0, 1.0]])
    candidates = np.array([[0.6, 0.8], [-1.0, 0.0]])
    assert [score_news(history, c) for c in candidates] == pytest.approx([0.8, 0.0])
    assert score_news(np.zeros((0, 2)), candidates[0]) == 0.0
    assert max_sim(np.zeros((0, 2)), candidates[0]) == 0.0
    with pytest.raises(ContractError):
        score_news(history, np.ones(3))


def _unit_rows(rng, rows, dimension=16):
    vectors = rng.normal(size=(rows, dimension))
    return vectors / np.linalg.norm(vectors, axis=1, keepdims=True)


def test_scores_match_pairwise_cosine():
    rng = np.random.default_rng(5)
    for _ in range(20):
        history = _unit_rows(rng, int(rng.integers(1, 6)))
        for candidate in _unit_rows(rng, 5):
            best = max(1.0 - distance.cosine(row, candidate) for row in history)
            age = int(rng.integers(0, 4))
            follows = bool(rng.integers(0, 2))
            assert score_news(history, candidate) == pytest.approx(best)
            assert score_tweet(history, candidate, age, follows) == pytest.approx(best * 0.9**age + (0.3 if follows else 0.0))


def test_tweet_score_decay_and_follow_bias():
    history = np.array([[1.0, 0.0]])
    tweet = np.array([1.0, 0.0])
    assert score_tweet(history, tweet, 1, False, decay=0.9, follow_bias=0.3) == pytest.approx(0.9)
    assert score_tweet(history, tweet, 2, True, decay=0.9, follow_bias=0.3) == pytest.approx(0.81 + 0.3)
    # a followed author with no history overlap still earns the bias
    assert score_tweet(np.zeros((0, 2)), tweet, 1, True) == pytest.approx(0.3)
    with pytest.raises(ContractError):
        score_tweet(history, tweet, -1, False)


def test_top_k_orders_by_score_then_tie_break():
    candidates = [
        ScoredCandidate("a", 0.5, 2),
        ScoredCandidate("b", 0.9, 3),
        ScoredCandidate("c", 0.5, 1),
    ]
    assert [c.item_id for c in top_k(candidates, 2)] == ["b", "c"]
    assert [c.item_id for c in top_k(candidates, 10)] == ["b", "c", "a"]
    assert top_k([], 3) == []
    with pytest.raises(ContractError):
        top_k(candidates, 0)
    with pytest.raises(ContractError):
        top_k([ScoredCandidate("x", float("nan"), 0)], 1)


def test_top_k_matches_a_full_sort():
    rng = np.random.default_rng(11)
    # coarse scores force plenty of ties
    scores = rng.integers(0, 20, size=200) / 20.0
    keys = rng.permutation(200)
    candidates = [ScoredCandidate(f"c{i}", float(score), int(key)) for i, (score, key) in enumerate(zip(scores, keys))]
    oracle = sorted(candidates, key=lambda c: (-c.score, c.tie_break_key))
    for k in (1, 3, 50, 200, 250):
        assert top_k(candidates, k) == oracle[:k]


@pytest.mark.parametrize("scale, shift", [(2.5, 0.0), (0.1, 3.0), (1000.0, -7.0)])
def test_top_k_ignores_positive_rescaling(scale, shift):
    rng = np.random.default_rng(12)
    candidates = [ScoredCandidate(f"c{i}", float(score), i) for i, score in enumerate(rng.normal(size=200))]
    rescaled = [ScoredCandidate(c.item_id, c.score * scale + shift, c.tie_break_key) for c in candidates]
    assert [c.item_id for c in top_k(rescaled, 10)] == [c.item_id for c in top_k(candidates, 10)]


def test_cold_start_samples_with_rng():
    candidates = [ScoredCandidate(str(i), 0.0, i) for i in range(10)]
    first = top_k(candidates, 3, np.random.default_rng(4))
    second = top_k(candidates, 3, np.random.default_rng(4))
    assert [c.item_id for c in first] == [c.item_id for c in second]
    assert len({c.item_id for c in first}) == 3
    assert [c.item_id for c in top_k(candidates, 3)] == ["0", "1", "2"]


def test_candidate_pool():
    corpus = [NewsItem(id=str(i), text=f"story {i}", stance_type=StanceType.VACCINE_BENEFIT) for i in range(20)]
    pool = sample_candidate_pool(corpus, 9, np.random.default_rng(0))
    assert len(pool) == 9
    assert len({item.id for item in pool}) == 9
    assert sample_candidate_pool(corpus[:4], 9, np.random.default_rng(0)) == corpus[:4]
    with pytest.raises(CorpusError):
        sample_candidate_pool([], 9, np.random.default_rng(0))


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
