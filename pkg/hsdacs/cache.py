import hashlib
import threading
from abc import ABC, abstractmethod
from collections import OrderedDict
from functools import wraps
from typing import Any, Callable

import numpy as np

import hsdacs


def array_digest(*arrays: np.ndarray, tag: str = "") -> str:
    """SHA-256 over the raw bytes, shapes and dtypes of the given arrays."""
    h = hashlib.sha256(tag.encode())
    for arr in arrays:
        arr = np.ascontiguousarray(arr)
        h.update(str((arr.shape, arr.dtype.str)).encode())
        h.update(arr.tobytes())
    return h.hexdigest()


def projection_cache(func: Callable) -> Callable:
    """Decorator memoising encoder-side projections.

    The wrapped method takes the encoder states array as its first argument. The
    cache key covers the encoder states and every parameter of the owning module,
    so updated weights never hit a stale entry.
    """

    @wraps(func)
    def wrapper(self, enc: np.ndarray, *args, **kwargs):
        cache = getattr(self, "cache", None)
        if cache is None or not hsdacs.settings.enable_cache:
            return func(self, enc, *args, **kwargs)

        params = [p.data for _, p in self.named_parameters()]
        key = array_digest(enc, *params, tag=f"{type(self).__name__}:{func.__name__}")
        cached = cache.get(key)
        if cached is not None:
            hsdacs.logger.debug(f"Cache hit for {key[:12]}")
            return cached
        result = func(self, enc, *args, **kwargs)
        cache.insert(key, result)
        return result

    return wrapper


class Cache(ABC):
    def __init__(self, max_size: int):
        self.max_size = max_size

    @abstractmethod
    def get(self, key: str) -> Any | None:
        pass

    @abstractmethod
    def insert(self, key: str, value: Any):
        pass

    @abstractmethod
    def reset(self, max_size: int | None = None):
        pass


def default_cache(max_size: int | None = None) -> Cache:
    """LRU cache sized by `settings.cache_max_size` unless given."""
    return InMemoryCache(hsdacs.settings.cache_max_size if max_size is None else max_size)


class InMemoryCache(Cache):
    def __init__(self, max_size: int):
        super().__init__(max_size)
        self.cache: OrderedDict[str, Any] = OrderedDict()
        self._lock = threading.Lock()

    def get(self, key: str) -> Any | None:
        with self._lock:
            if key not in self.cache:
                return None
            self.cache.move_to_end(key)
            return self.cache[key]

    def insert(self, key: str, value: Any):
        with self._lock:
            self.cache[key] = value
            self.cache.move_to_end(key)

            # LRU eviction
            while len(self.cache) > self.max_size:
                self.cache.popitem(last=False)

    def reset(self, max_size: int | None = None):
        with self._lock:
            self.cache.clear()
        if max_size is not None:
            self.max_size = max_size

    def __len__(self) -> int:
        return len(self.cache)
