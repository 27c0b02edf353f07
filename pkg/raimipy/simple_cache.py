import logging
import os
import pickle
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Dict, Generic, Optional, TypeVar

import sqliteshelve as shelve

from raimipy.consts import DEFAULT_CACHE_DIR, SLICE_CACHE_FILE, SLICE_TABLE_SCHEMA_VERSION

log = logging.getLogger(__name__)

V = TypeVar("V")


@contextmanager
def shelve_open(filename):
    d = shelve.open(filename)
    try:
        yield d
    finally:
        d.close()


class Cache(Generic[V]):
    """
    A write through in-memory cache, backed by disk. Keys must always be strings, but values can be any
    pickle-able type.
    """

    def __init__(
        self, filename: str, is_value_valid: Callable[[V], bool] = lambda value: True
    ) -> None:
        super().__init__()
        self.in_memory_cache: Dict[str, V] = {}
        self.filename = filename
        self.is_value_valid = is_value_valid

    def _ensure_parent_dir_exists(self):
        parent = os.path.dirname(self.filename)
        if parent and not os.path.exists(parent):
            os.makedirs(parent)

    def _none_if_not_valid(self, value: V, default) -> Optional[V]:
        if self.is_value_valid(value):
            return value
        else:
            return default

    def get(self, key: str, default: Optional[V] = None) -> Optional[V]:
        if key in self.in_memory_cache:
            return self._none_if_not_valid(self.in_memory_cache[key], default)

        self._ensure_parent_dir_exists()
        with shelve_open(self.filename) as s:
            if key not in s:
                return default
            # a value we cannot reconstruct counts as missing
            try:
                value = s[key]
            except (pickle.UnpicklingError, AttributeError, ModuleNotFoundError) as ex:
                log.warning("Ignoring cache entry %s that failed to unpickle: %s", key, ex)
                return default

            self.in_memory_cache[key] = value
            return self._none_if_not_valid(value, default)

    def put(self, key: str, value: V):
        assert self.is_value_valid(value)
        self._ensure_parent_dir_exists()
        with shelve_open(self.filename) as s:
            s[key] = value
            self.in_memory_cache[key] = value


@dataclass
class CachedSliceTable:
    schema_version: str
    # a harness.SliceTable
    table: object


def _is_current(value: CachedSliceTable) -> bool:
    return getattr(value, "schema_version", None) == SLICE_TABLE_SCHEMA_VERSION


class SliceTableCache:
    """Slice tables keyed by the hash of the experiment file that produced
    them. Any change to the file changes the key."""

    def __init__(self, cache_dir: str = DEFAULT_CACHE_DIR):
        filename = os.path.join(os.path.expanduser(cache_dir), SLICE_CACHE_FILE)
        self.cache: Cache[CachedSliceTable] = Cache(filename, _is_current)

    def get(self, config_hash: str):
        entry = self.cache.get(config_hash, None)
        if entry is None:
            return None
        log.info("Using cached slice table for %s", config_hash[:12])
        return entry.table

    def put(self, config_hash: str, table):
        self.cache.put(config_hash, CachedSliceTable(SLICE_TABLE_SCHEMA_VERSION, table))
