from __future__ import annotations
from collections import OrderedDict
from typing import Dict, Any, Callable, Hashable, Tuple
import logging
import threading

import numpy as np

from asghf.sparse_filter.errors import ConfigError, NumericalEvaluationError
from asghf.sparse_filter.utils import hash_text

logger = logging.getLogger(__name__)


# -----------------------------------------------------------
# Key generation для кешу
# -----------------------------------------------------------

def make_key(kind: str, *parts: Any) -> str:
    """Уніфікований ключ: SHA256 від типу сітки та її параметрів."""
    return hash_text(kind + ":" + ":".join(str(p) for p in parts))


# -----------------------------------------------------------
# Базова стратегія кешу
# -----------------------------------------------------------

class CacheStrategy:
    def get(self, key: str):
        raise NotImplementedError

    def set(self, key: str, value: Any):
        raise NotImplementedError

    def clear(self):
        raise NotImplementedError

    def stats(self) -> dict:
        return {}


# -----------------------------------------------------------
# NoCache: для вимірювання часу побудови сіток без кешу
# -----------------------------------------------------------

class NoCache(CacheStrategy):
    def get(self, key: str):
        return None

    def set(self, key: str, value: Any):
        pass

    def clear(self):
        pass

    def stats(self):
        return {
            "enabled": False,
            "type": "none",
            "hits": 0,
            "misses": 0,
            "size": 0,
        }


# -----------------------------------------------------------
# LRU Cache: обмеження за кількістю сіток і сумарною кількістю точок
# -----------------------------------------------------------

def grid_points(value: Any) -> int:
    """Points held by a cached grid; objects without `size` count as one."""
    return int(getattr(value, "size", 1))


class LRUCache(CacheStrategy):
    """
    Least-recently-used grids go first once either `capacity` entries or
    `max_points` grid points in total are exceeded. The newest entry is
    always kept, even when it alone is over the point budget.
    """

    def __init__(self, capacity: int = 32, max_points: int = 2_000_000):
        if capacity < 1 or max_points < 1:
            raise ConfigError("LRU capacity and max_points must be >= 1")
        self.capacity = capacity
        self.max_points = max_points
        self.entries: "OrderedDict[str, Any]" = OrderedDict()
        self.points = 0
        self.hits = 0
        self.misses = 0
        self.evictions = 0
        self.lock = threading.Lock()

    def get(self, key: str):
        with self.lock:
            value = self.entries.get(key)
            if value is None:
                self.misses += 1
                return None
            self.hits += 1
            self.entries.move_to_end(key)
            return value

    def set(self, key: str, value: Any):
        with self.lock:
            previous = self.entries.pop(key, None)
            if previous is not None:
                self.points -= grid_points(previous)
            self.entries[key] = value
            self.points += grid_points(value)
            while len(self.entries) > 1 and (
                    len(self.entries) > self.capacity or self.points > self.max_points):
                oldest, evicted = self.entries.popitem(last=False)
                self.points -= grid_points(evicted)
                self.evictions += 1
                logger.debug("grid cache evicted %s (%d points)", oldest[:12], grid_points(evicted))

    def clear(self):
        with self.lock:
            self.entries.clear()
            self.points = 0

    def stats(self):
        with self.lock:
            return {
                "enabled": True,
                "type": "LRU",
                "hits": self.hits,
                "misses": self.misses,
                "evictions": self.evictions,
                "size": len(self.entries),
                "capacity": self.capacity,
                "points": self.points,
                "max_points": self.max_points,
            }


# -----------------------------------------------------------
# RuleCache: необмежений кеш незмінних значень (1D правила)
# -----------------------------------------------------------

class RuleCache:
    """
    Concurrent reads, exclusive insert. Values must be immutable.

    get_or_build() builds outside the lock; if two threads race on the
    same key the first inserted value wins and both callers get it.
    """

    def __init__(self):
        self._store: Dict[Hashable, Any] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get_or_build(self, key: Hashable, builder: Callable[[], Any]) -> Any:
        value = self._store.get(key)
        if value is not None:
            with self._lock:
                self.hits += 1
            return value
        built = builder()
        with self._lock:
            value = self._store.setdefault(key, built)
            self.misses += 1
        return value

    def clear(self):
        with self._lock:
            self._store.clear()

    def stats(self) -> dict:
        return {"hits": self.hits, "misses": self.misses, "size": len(self._store)}


# -----------------------------------------------------------
# EvaluationCache: значення підінтегральної функції по точках
# -----------------------------------------------------------

# квантування координат: точки з різницею < 1e-12 вважаються однаковими
POINT_TOLERANCE = 1e-12


def quantize_points(points: np.ndarray) -> np.ndarray:
    return np.rint(np.asarray(points, dtype=float) / POINT_TOLERANCE).astype(np.int64)


class EvaluationCache:
    """
    Memo of f(point) for one adaptation run. Each distinct point is
    evaluated once; len(cache) is the number of distinct evaluations.
    """

    def __init__(self, func: Callable[[np.ndarray], np.ndarray]):
        self.func = func
        self._values: Dict[Tuple[int, ...], np.ndarray] = {}

    def __len__(self) -> int:
        return len(self._values)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        keys = [tuple(row) for row in quantize_points(points)]
        missing = [i for i, k in enumerate(keys) if k not in self._values]
        if missing:
            fresh = np.asarray(self.func(points[missing]), dtype=float)
            fresh = fresh.reshape(len(missing), -1)
            bad = ~np.all(np.isfinite(fresh), axis=1)
            if np.any(bad):
                point = points[missing][int(np.argmax(bad))]
                raise NumericalEvaluationError(
                    f"Non-finite integrand value at point {point.tolist()}", point=point
                )
            for i, row in zip(missing, fresh):
                self._values[keys[i]] = row
        return np.stack([self._values[k] for k in keys])


# -----------------------------------------------------------
# GridCache: головний менеджер кешу сіток
# -----------------------------------------------------------

class GridCache:
    """
    Керує кешем багатовимірних сіток:
      - full tensor (GH_t)
      - Smolyak (SGH_L)
    Має одну стратегію (LRU/NoCache)
    """

    def __init__(self, strategy: CacheStrategy):
        self.strategy = strategy
        self.enabled = not isinstance(strategy, NoCache)

    def get_or_build(self, kind: str, dimension: int, parameter: int,
                     builder: Callable[[], Any]) -> Any:
        key = make_key(kind, dimension, parameter)
        if self.enabled:
            cached = self.strategy.get(key)
            if cached is not None:
                logger.debug("grid cache hit: %s n=%d p=%d", kind, dimension, parameter)
                return cached
        grid = builder()
        if self.enabled:
            self.strategy.set(key, grid)
        return grid

    def stats(self) -> dict:
        return self.strategy.stats()

    def clear(self):
        self.strategy.clear()


CACHE_STRATEGIES = {
    "none": NoCache,
    "lru": LRUCache,
}

grid_cache: GridCache = GridCache(LRUCache())


def get_grid_cache() -> GridCache:
    return grid_cache


def configure_grid_cache(name: str) -> GridCache:
    """Swap the process-wide grid cache strategy (CLI --cache)."""
    global grid_cache
    if name not in CACHE_STRATEGIES:
        raise ConfigError(f"Unknown cache strategy: {name!r}")
    grid_cache = GridCache(CACHE_STRATEGIES[name]())
    return grid_cache
