import hashlib
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from asghf.sparse_filter.cache import (
    EvaluationCache, GridCache, LRUCache, NoCache, RuleCache,
    configure_grid_cache, get_grid_cache, make_key, quantize_points,
)
from asghf.sparse_filter.errors import ConfigError, NumericalEvaluationError
from asghf.sparse_filter.tensor_smolyak import smolyak_grid


# -----------------------------------------------------------
# make_key
# -----------------------------------------------------------

def test_make_key():
    key = make_key("smolyak", 6, 3)
    assert key == hashlib.sha256(b"smolyak:6:3").hexdigest()
    assert len(key) == 64
    assert make_key("smolyak", 6, 3) == make_key("smolyak", 6, 3)
    assert make_key("smolyak", 6, 3) != make_key("tensor", 6, 3)


# -----------------------------------------------------------
# NoCache
# -----------------------------------------------------------

def test_no_cache_basic():
    nc = NoCache()
    assert nc.get("a") is None
    nc.set("a", 123)
    assert nc.get("a") is None


def test_no_cache_stats():
    stats = NoCache().stats()
    assert stats["enabled"] is False
    assert stats["hits"] == 0
    assert stats["misses"] == 0
    assert stats["size"] == 0


# -----------------------------------------------------------
# LRUCache
# -----------------------------------------------------------

def test_lru_set_get_hit_miss():
    cache = LRUCache(capacity=2)

    assert cache.get("x") is None
    assert cache.misses == 1

    cache.set("x", 10)
    assert cache.get("x") == 10
    assert cache.hits == 1


def test_lru_eviction():
    cache = LRUCache(capacity=2)

    cache.set("a", 1)
    cache.set("b", 2)
    cache.set("c", 3)  # витіснить "a"

    assert cache.get("a") is None
    assert cache.get("b") == 2
    assert cache.get("c") == 3


def test_lru_update_moves_to_recent():
    cache = LRUCache(capacity=2)

    cache.set("a", 1)
    cache.set("b", 2)
    cache.get("a")      # тепер b буде LRU
    cache.set("c", 3)   # витісняє b

    assert cache.get("b") is None
    assert cache.get("a") == 1
    assert cache.get("c") == 3


def test_lru_stats():
    cache = LRUCache(capacity=3)

    cache.set("x", 1)
    cache.get("x")
    cache.get("y")  # miss

    stats = cache.stats()
    assert stats["type"] == "LRU"
    assert stats["hits"] == 1
    assert stats["misses"] == 1
    assert stats["size"] == 1
    assert stats["capacity"] == 3
    assert stats["points"] == 1


class FakeGrid:
    def __init__(self, size):
        self.size = size


def test_lru_evicts_by_point_budget():
    cache = LRUCache(capacity=10, max_points=100)

    cache.set("a", FakeGrid(60))
    cache.set("b", FakeGrid(30))
    cache.set("c", FakeGrid(20))  # 110 точок > 100: витісняє "a"

    assert cache.get("a") is None
    assert cache.get("b").size == 30
    assert cache.stats()["points"] == 50
    assert cache.stats()["evictions"] == 1


def test_lru_keeps_single_oversized_grid():
    cache = LRUCache(capacity=4, max_points=10)
    cache.set("a", FakeGrid(3))
    cache.set("big", FakeGrid(50))

    assert cache.get("a") is None
    assert cache.get("big").size == 50
    assert cache.stats()["size"] == 1


def test_lru_replacing_entry_updates_points():
    cache = LRUCache(capacity=4, max_points=100)
    cache.set("a", FakeGrid(40))
    cache.set("a", FakeGrid(10))
    assert cache.stats()["points"] == 10
    assert cache.stats()["size"] == 1
    cache.clear()
    assert cache.stats()["points"] == 0


def test_lru_rejects_bad_limits():
    with pytest.raises(ConfigError):
        LRUCache(capacity=0)
    with pytest.raises(ConfigError):
        LRUCache(max_points=0)


def test_grid_cache_counts_real_grid_points():
    gc = GridCache(LRUCache(4))
    gc.get_or_build("smolyak", 2, 3, lambda: smolyak_grid(2, 3))
    assert gc.stats()["points"] == smolyak_grid(2, 3).size


# -----------------------------------------------------------
# RuleCache
# -----------------------------------------------------------

def test_rule_cache_builds_once():
    calls = []
    cache = RuleCache()

    def builder():
        calls.append(1)
        return ("rule",)

    assert cache.get_or_build(3, builder) == ("rule",)
    assert cache.get_or_build(3, builder) == ("rule",)
    assert len(calls) == 1
    assert cache.stats() == {"hits": 1, "misses": 1, "size": 1}


def test_rule_cache_counts_hits_across_threads():
    cache = RuleCache()
    cache.get_or_build("k", lambda: ("rule",))
    with ThreadPoolExecutor(max_workers=8) as pool:
        list(pool.map(lambda _: cache.get_or_build("k", lambda: ("other",)), range(400)))
    assert cache.stats() == {"hits": 400, "misses": 1, "size": 1}


# -----------------------------------------------------------
# GridCache
# -----------------------------------------------------------

def test_grid_cache_reuses_grid():
    gc = GridCache(LRUCache(4))
    first = gc.get_or_build("smolyak", 2, 3, lambda: object())
    second = gc.get_or_build("smolyak", 2, 3, lambda: object())
    assert first is second
    assert gc.stats()["hits"] == 1


def test_grid_cache_disabled_rebuilds():
    gc = GridCache(NoCache())
    first = gc.get_or_build("tensor", 2, 3, lambda: object())
    second = gc.get_or_build("tensor", 2, 3, lambda: object())
    assert first is not second
    assert gc.enabled is False


def test_configure_grid_cache():
    try:
        gc = configure_grid_cache("none")
        assert get_grid_cache() is gc
        assert gc.stats()["enabled"] is False
        with pytest.raises(ConfigError):
            configure_grid_cache("lfu")
    finally:
        configure_grid_cache("lru")
    assert get_grid_cache().stats()["type"] == "LRU"


# -----------------------------------------------------------
# EvaluationCache
# -----------------------------------------------------------

def test_quantize_points_merges_close_points():
    keys = quantize_points(np.array([[1.0, 2.0], [1.0 + 1e-14, 2.0]]))
    assert keys[0].tolist() == keys[1].tolist()


def test_evaluation_cache_counts_distinct_points():
    seen = []

    def f(points):
        seen.append(len(points))
        return points.sum(axis=1)

    cache = EvaluationCache(f)
    first = cache.evaluate(np.array([[0.0, 1.0], [1.0, 1.0]]))
    second = cache.evaluate(np.array([[1.0, 1.0], [2.0, 0.0]]))
    assert first[:, 0].tolist() == [1.0, 2.0]
    assert second[:, 0].tolist() == [2.0, 2.0]
    assert len(cache) == 3
    assert seen == [2, 1]


def test_evaluation_cache_rejects_nan():
    cache = EvaluationCache(lambda points: np.full(len(points), np.nan))
    with pytest.raises(NumericalEvaluationError) as info:
        cache.evaluate(np.array([[0.5]]))
    assert info.value.point.tolist() == [0.5]
