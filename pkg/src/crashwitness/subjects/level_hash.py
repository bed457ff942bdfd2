"""Mini level hash: a fixed bucket array with per-slot tokens guarding key/value.

Per bucket there are three cache lines: tokens, keys, values (8-byte words,
``SLOTS`` slots per bucket).  Readers only look at a key or value after the
slot's token says the slot is occupied (the guarded-read pattern).

``mini-level-hash-buggy`` carries two seeded defects:

* ``insert`` stores the token before the key/value barrier, so the token
  can reach NVM while the key/value are still in the cache;
* ``update`` into a free slot clears the old token and sets the new one with
  two separate stores, so a crash can persist only the first.

``mini-level-hash-fixed`` persists key/value before the token and packs all
tokens of a bucket into one bitmap word, updated with a single store.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Optional

from ..runtime import PersistentPool, TrackedBytes
from .base import Subject, register

BUCKETS = 4
SLOTS = 4
WORD = 8


class _LevelHash(Subject):
    lines = 3 * BUCKETS

    def init(self, pool: PersistentPool) -> None:
        super().init(pool)
        if pool.cache_line < SLOTS * WORD:
            raise ValueError(f"cache line {pool.cache_line} too small for {SLOTS} slots")

    # layout
    def bucket(self, key: int) -> int:
        return key % BUCKETS

    def token_line(self, pool, b: int) -> int:
        return 3 * b * pool.cache_line

    def key_addr(self, pool, b: int, j: int) -> int:
        return (3 * b + 1) * pool.cache_line + WORD * j

    def val_addr(self, pool, b: int, j: int) -> int:
        return (3 * b + 2) * pool.cache_line + WORD * j

    # token access differs between the variants
    def tokens(self, pool, b: int, sid: str) -> Callable[[int], TrackedBytes]:
        raise NotImplementedError

    def find(self, pool, scopes: contextlib.ExitStack, b: int, key: int, op: str) -> Optional[int]:
        """Slot holding ``key`` in bucket ``b``.

        Scopes stay open: every later step of the operation only runs because
        the earlier token/key checks came out the way they did.
        """
        token = self.tokens(pool, b, f"lh.{op}.find_token")
        for j in range(SLOTS):
            t = token(j)
            scopes.enter_context(pool.guard(t))
            if not t:
                continue
            k = pool.load(self.key_addr(pool, b, j), WORD, f"lh.{op}.find_key")
            scopes.enter_context(pool.guard(k))
            if k.as_int() == key:
                return j
        return None

    def find_empty(self, pool, scopes: contextlib.ExitStack, b: int, op: str) -> Optional[int]:
        token = self.tokens(pool, b, f"lh.{op}.empty_token")
        for j in range(SLOTS):
            t = token(j)
            scopes.enter_context(pool.guard(t))
            if not t:
                return j
        return None

    def write_slot(self, pool, b: int, j: int, key: int, value: int, op: str) -> None:
        pool.store(self.key_addr(pool, b, j), key, f"lh.{op}.key")
        pool.store(self.val_addr(pool, b, j), value, f"lh.{op}.val")

    def persist_slot(self, pool, b: int, op: str) -> None:
        pool.flush(self.key_addr(pool, b, 0), f"lh.{op}.flush_key")
        pool.flush(self.val_addr(pool, b, 0), f"lh.{op}.flush_val")
        pool.fence(f"lh.{op}.fence_kv")

    def persist_tokens(self, pool, b: int, op: str) -> None:
        pool.flush(self.token_line(pool, b), f"lh.{op}.flush_token")
        pool.fence(f"lh.{op}.fence_token")

    def op_query(self, pool, key: int, _value: int) -> str:
        b = self.bucket(key)
        with contextlib.ExitStack() as scopes:
            j = self.find(pool, scopes, b, key, "query")
            if j is None:
                return "null"
            return self.read_value(pool, scopes, b, j)

    def read_value(self, pool, scopes, b: int, j: int) -> str:
        v = pool.load(self.val_addr(pool, b, j), WORD, "lh.query.val")
        return f"v{v.as_int()}"

    def op_insert(self, pool, key: int, value: int) -> str:
        b = self.bucket(key)
        with contextlib.ExitStack() as scopes:
            if self.find(pool, scopes, b, key, "insert") is not None:
                return "exists"
            j = self.find_empty(pool, scopes, b, "insert")
            if j is None:
                return "full"
            self.insert_at(pool, b, j, key, value)
        return "ok"

    def op_update(self, pool, key: int, value: int) -> str:
        b = self.bucket(key)
        with contextlib.ExitStack() as scopes:
            i = self.find(pool, scopes, b, key, "update")
            if i is None:
                return "null"
            n = self.find_empty(pool, scopes, b, "update")
            if n is None:
                # no free slot: a single 8-byte store is failure atomic
                pool.store(self.val_addr(pool, b, i), value, "lh.update.val_inplace")
                pool.flush(self.val_addr(pool, b, i), "lh.update.flush_inplace")
                pool.fence("lh.update.fence_inplace")
                return "ok"
            self.write_slot(pool, b, n, key, value, "update")
            self.persist_slot(pool, b, "update")
            self.move_token(pool, b, i, n)
        return "ok"

    def op_delete(self, pool, key: int, _value: int) -> str:
        b = self.bucket(key)
        with contextlib.ExitStack() as scopes:
            i = self.find(pool, scopes, b, key, "delete")
            if i is None:
                return "null"
            self.clear_token(pool, b, i)
        return "ok"

    def insert_at(self, pool, b, j, key, value) -> None:
        raise NotImplementedError

    def move_token(self, pool, b, old, new) -> None:
        raise NotImplementedError

    def clear_token(self, pool, b, j) -> None:
        raise NotImplementedError


@register
class BuggyLevelHash(_LevelHash):
    name = "mini-level-hash-buggy"

    def token_addr(self, pool, b: int, j: int) -> int:
        return self.token_line(pool, b) + WORD * j

    def tokens(self, pool, b, sid):
        return lambda j: pool.load(self.token_addr(pool, b, j), WORD, sid)

    def insert_at(self, pool, b, j, key, value) -> None:
        self.write_slot(pool, b, j, key, value, "insert")
        pool.store(self.token_addr(pool, b, j), 1, "lh.insert.token")
        # the key/value barrier comes after the token store
        self.persist_slot(pool, b, "insert")
        self.persist_tokens(pool, b, "insert")

    def move_token(self, pool, b, old, new) -> None:
        pool.store(self.token_addr(pool, b, old), 0, "lh.update.token_old")
        pool.store(self.token_addr(pool, b, new), 1, "lh.update.token_new")
        self.persist_tokens(pool, b, "update")

    def clear_token(self, pool, b, j) -> None:
        pool.store(self.token_addr(pool, b, j), 0, "lh.delete.token")
        self.persist_tokens(pool, b, "delete")


@register
class FixedLevelHash(_LevelHash):
    name = "mini-level-hash-fixed"

    def tokens(self, pool, b, sid):
        bitmap = pool.load(self.token_line(pool, b), WORD, sid)
        return lambda j: bitmap.derive((bitmap.as_int() >> j) & 1)

    def _set_bitmap(self, pool, b, fn, sid) -> None:
        bitmap = pool.load(self.token_line(pool, b), WORD, sid + "_read")
        pool.store(self.token_line(pool, b), bitmap.derive(fn(bitmap.as_int())), sid)
        self.persist_tokens(pool, b, sid.split(".")[1])

    def insert_at(self, pool, b, j, key, value) -> None:
        self.write_slot(pool, b, j, key, value, "insert")
        self.persist_slot(pool, b, "insert")
        self._set_bitmap(pool, b, lambda m: m | (1 << j), "lh.insert.bitmap")

    def move_token(self, pool, b, old, new) -> None:
        self._set_bitmap(pool, b, lambda m: (m & ~(1 << old)) | (1 << new), "lh.update.bitmap")

    def clear_token(self, pool, b, j) -> None:
        self._set_bitmap(pool, b, lambda m: m & ~(1 << j), "lh.delete.bitmap")


@register
class BenignLevelHash(FixedLevelHash):
    """Fixed level hash plus per-slot lease words zeroed at init without a flush.

    The pool is already zero, so whether those stores persist never changes
    what a reader sees; the invariants they violate are benign.
    """

    name = "benign-rewrite"
    lines = 4 * BUCKETS

    def lease_addr(self, pool, b: int, j: int) -> int:
        return (3 * BUCKETS + b) * pool.cache_line + WORD * j

    def init(self, pool: PersistentPool) -> None:
        super().init(pool)
        for b in range(BUCKETS):
            for j in range(SLOTS):
                pool.store(self.lease_addr(pool, b, j), 0, "lh.init.lease")

    def read_value(self, pool, scopes, b: int, j: int) -> str:
        lease = pool.load(self.lease_addr(pool, b, j), WORD, "lh.query.lease")
        scopes.enter_context(pool.guard(lease))
        if lease:
            return "null"
        return super().read_value(pool, scopes, b, j)
