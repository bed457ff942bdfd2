from __future__ import annotations

from typing import NamedTuple

from ..runtime import PersistentPool


class Operation(NamedTuple):
    kind: str
    key: int = 0
    value: int = 0

    def __str__(self) -> str:
        if self.kind in ("insert", "update"):
            return f"{self.kind}({self.key},v{self.value})"
        return f"{self.kind}({self.key})"


class Subject:
    """A program under test.  All persistent state lives in the pool.

    Subjects are stateless objects: ``init``, ``recover`` and ``apply`` get
    the pool on every call, so one instance can serve many executions.
    """

    name: str = ""
    op_kinds: tuple = ("insert", "update", "delete", "query")
    lines: int = 16  # pool size in cache lines

    def pool_size(self, cache_line: int) -> int:
        return self.lines * cache_line

    def init(self, pool: PersistentPool) -> None:
        if pool.size < self.pool_size(pool.cache_line):
            raise ValueError(f"{self.name} needs a pool of {self.pool_size(pool.cache_line)} bytes")

    def recover(self, pool: PersistentPool) -> None:
        pass

    def apply(self, pool: PersistentPool, op: Operation) -> str:
        handler = getattr(self, "op_" + op.kind, None)
        if handler is None or op.kind not in self.op_kinds:
            raise ValueError(f"{self.name} has no operation {op.kind!r}")
        return handler(pool, op.key, op.value)


_REGISTRY: dict = {}


def register(cls):
    _REGISTRY[cls.name] = cls
    return cls


def get_subject(name: str) -> Subject:
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise KeyError(f"unknown subject {name!r}; known: {', '.join(sorted(_REGISTRY))}") from None


def subject_names() -> list:
    return sorted(_REGISTRY)


