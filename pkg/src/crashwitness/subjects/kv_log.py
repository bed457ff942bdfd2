"""Append-only key/value log guarded by a persistent tail counter.

Entries are written and persisted before the tail is advanced, and readers
never look past the tail, so every crash state looks like a committed or a
rolled-back append.
"""
from __future__ import annotations

import contextlib

from ..runtime import PersistentPool
from .base import Subject, register

ENTRY = 32
PUT, DEL = 1, 2


@register
class KvLog(Subject):
    name = "kv-log"
    lines = 128

    def capacity(self, pool) -> int:
        return (pool.size - pool.cache_line) // ENTRY

    def entry(self, pool, i: int) -> int:
        return pool.cache_line + ENTRY * i

    def recover(self, pool: PersistentPool) -> None:
        tail = pool.load(0, 8, "log.recover.tail")
        with pool.guard(tail):
            if tail.as_int() > self.capacity(pool):
                pool.store(0, 0, "log.recover.reset")
                pool.persist(0, "log.recover")

    def lookup(self, pool, scopes: contextlib.ExitStack, key: int):
        """Newest entry for ``key`` as (kind, entry index), or None.

        The tail guard and the matching key/kind guards stay open in
        ``scopes``; mismatching keys only guard their own iteration.
        """
        tail = pool.load(0, 8, "log.lookup.tail")
        scopes.enter_context(pool.guard(tail))
        for i in reversed(range(min(tail.as_int(), self.capacity(pool)))):
            base = self.entry(pool, i)
            k = pool.load(base, 8, "log.lookup.key")
            if k.as_int() != key:
                with pool.guard(k):
                    continue
            scopes.enter_context(pool.guard(k))
            kind = pool.load(base + 16, 8, "log.lookup.kind")
            scopes.enter_context(pool.guard(kind))
            return kind.as_int(), i
        return None

    def append(self, pool, kind: int, key: int, value: int) -> str:
        tail = pool.load(0, 8, "log.append.tail_read")
        with pool.guard(tail):
            i = tail.as_int()
            if i >= self.capacity(pool):
                return "full"
            base = self.entry(pool, i)
            pool.store(base, key, "log.append.key")
            pool.store(base + 8, value, "log.append.val")
            pool.store(base + 16, kind, "log.append.kind")
            pool.persist(base, "log.append.entry")
            pool.store(0, tail.derive(i + 1), "log.append.tail")
            pool.persist(0, "log.append.tail")
        return "ok"

    def live(self, pool, scopes, key: int):
        found = self.lookup(pool, scopes, key)
        if found is None or found[0] != PUT:
            return None
        return found[1]

    def op_query(self, pool, key: int, _value: int) -> str:
        with contextlib.ExitStack() as scopes:
            i = self.live(pool, scopes, key)
            if i is None:
                return "null"
            v = pool.load(self.entry(pool, i) + 8, 8, "log.query.val")
            return f"v{v.as_int()}"

    def op_insert(self, pool, key: int, value: int) -> str:
        with contextlib.ExitStack() as scopes:
            if self.live(pool, scopes, key) is not None:
                return "exists"
            return self.append(pool, PUT, key, value)

    def op_update(self, pool, key: int, value: int) -> str:
        with contextlib.ExitStack() as scopes:
            if self.live(pool, scopes, key) is None:
                return "null"
            return self.append(pool, PUT, key, value)

    def op_delete(self, pool, key: int, _value: int) -> str:
        with contextlib.ExitStack() as scopes:
            if self.live(pool, scopes, key) is None:
                return "null"
            return self.append(pool, DEL, key, 0)
