"""Simulated persistent memory pool and the tracing API used by subjects.

Subjects never touch raw bytes directly: every load, store, flush and fence
goes through :class:`PersistentPool`, which keeps the volatile view of the
pool and appends one :class:`TraceEvent` per call.  Values carry their
dynamic provenance (the set of load tids they were computed from) so the
dependence stage can rebuild data and control edges without a compiler.
"""
from __future__ import annotations

import contextlib
import enum
from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

DEFAULT_CACHE_LINE = 64
DEFAULT_DRAM_SIZE = 4096


class ConfigError(ValueError):
    """Invalid pool configuration or a store that breaks the layout rules."""


class TraceError(ValueError):
    """A trace that violates the structural invariants of the event log."""


class SubjectFault(RuntimeError):
    """Fault raised inside a subject (bounds violation, corrupted state)."""


class Kind(enum.Enum):
    LOAD = "L"
    STORE = "S"
    FLUSH = "F"
    FENCE = "N"
    BRANCH_BEGIN = "BB"
    BRANCH_END = "BE"
    OP_BEGIN = "OB"
    OP_END = "OE"


class Space(enum.Enum):
    NVM = "NVM"
    DRAM = "DRAM"


@dataclass(frozen=True)
class TraceEvent:
    tid: int
    kind: Kind
    sid: Optional[str] = None
    addr: Optional[int] = None
    length: Optional[int] = None
    data: Optional[bytes] = None
    space: Optional[Space] = None
    data_deps: frozenset = frozenset()
    ctrl_deps: frozenset = frozenset()
    label: Optional[str] = None  # op label for OP_BEGIN, output for OP_END

    @property
    def is_nvm(self) -> bool:
        return self.space is Space.NVM


@dataclass(frozen=True)
class TrackedBytes:
    """A value together with the load tids it was derived from."""

    data: bytes
    provenance: frozenset = frozenset()

    @classmethod
    def const(cls, value: Union[int, bytes], width: int = 8) -> "TrackedBytes":
        if isinstance(value, int):
            value = value.to_bytes(width, "little")
        return cls(bytes(value))

    def as_int(self) -> int:
        return int.from_bytes(self.data, "little")

    def derive(self, value: Union[int, bytes], *others: "TrackedBytes", width: int = 8) -> "TrackedBytes":
        """New value computed from ``self`` and ``others``; provenance is the union."""
        if isinstance(value, int):
            value = (value % (1 << (8 * width))).to_bytes(width, "little")
        prov = self.provenance.union(*(o.provenance for o in others))
        return TrackedBytes(bytes(value), prov)

    def __bool__(self) -> bool:
        return any(self.data)


def combine(*values: TrackedBytes, data: Union[int, bytes] = 0, width: int = 8) -> TrackedBytes:
    """Build a value whose provenance is the union of ``values``."""
    if isinstance(data, int):
        data = (data % (1 << (8 * width))).to_bytes(width, "little")
    prov: frozenset = frozenset().union(*(v.provenance for v in values))
    return TrackedBytes(bytes(data), prov)


@dataclass
class Trace:
    events: list = field(default_factory=list)
    pool_size: int = 0
    cache_line: int = DEFAULT_CACHE_LINE

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[TraceEvent]:
        return iter(self.events)

    def by_tid(self) -> dict:
        return {e.tid: e for e in self.events}

    def line_of(self, addr: int) -> int:
        return addr - addr % self.cache_line

    def op_spans(self) -> list:
        """(begin_tid, end_tid, label) per operation; end_tid is None if unterminated."""
        spans = []
        open_ = None
        for e in self.events:
            if e.kind is Kind.OP_BEGIN:
                open_ = (e.tid, e.label)
            elif e.kind is Kind.OP_END and open_ is not None:
                spans.append((open_[0], e.tid, open_[1]))
                open_ = None
        if open_ is not None:
            spans.append((open_[0], None, open_[1]))
        return spans

    def validate(self) -> None:
        """Raise :class:`TraceError` unless the event log is well formed."""
        last = -1
        loads = set()
        depth = 0
        in_op = False
        for e in self.events:
            if e.tid <= last:
                raise TraceError(f"tid {e.tid} does not increase after {last}")
            last = e.tid
            for dep in e.data_deps | e.ctrl_deps:
                if dep not in loads:
                    raise TraceError(f"event {e.tid} depends on {dep}, not an earlier load")
            if e.kind is Kind.LOAD:
                loads.add(e.tid)
            elif e.kind is Kind.BRANCH_BEGIN:
                depth += 1
            elif e.kind is Kind.BRANCH_END:
                depth -= 1
                if depth < 0:
                    raise TraceError(f"unbalanced branch end at {e.tid}")
            elif e.kind is Kind.OP_BEGIN:
                if in_op:
                    raise TraceError(f"nested operation at {e.tid}")
                in_op = True
            elif e.kind is Kind.OP_END:
                if not in_op:
                    raise TraceError(f"operation end without begin at {e.tid}")
                in_op = False
            elif e.kind is Kind.FLUSH:
                if e.addr % self.cache_line:
                    raise TraceError(f"flush target {e.addr} is not line aligned")
            if e.kind in (Kind.LOAD, Kind.STORE) and e.space is Space.NVM:
                if e.addr < 0 or e.addr + e.length > self.pool_size:
                    raise TraceError(f"access at {e.tid} out of pool bounds")
        if depth:
            raise TraceError("unbalanced branch scopes at trace end")


class PersistentPool:
    """Zero-initialised persistent pool with a DRAM scratch region.

    ``record=False`` keeps the same semantics without building a trace,
    which is what re-execution from crash images uses.
    """

    def __init__(self, size: int, cache_line: int = DEFAULT_CACHE_LINE,
                 dram_size: int = DEFAULT_DRAM_SIZE, record: bool = True,
                 image: Optional[bytes] = None):
        if cache_line <= 0:
            raise ConfigError(f"cache line must be positive, got {cache_line}")
        if size <= 0 or size % cache_line:
            raise ConfigError(f"pool size {size} must be a positive multiple of {cache_line}")
        self.size = size
        self.cache_line = cache_line
        self.record = record
        self.nvm = bytearray(size) if image is None else bytearray(image)
        if len(self.nvm) != size:
            raise ConfigError(f"image has {len(self.nvm)} bytes, pool expects {size}")
        self.dram = bytearray(dram_size)
        self.trace = Trace(pool_size=size, cache_line=cache_line)
        self._next_tid = 0
        self._scopes: list = []
        self._in_op = False

    def _tid(self) -> int:
        tid = self._next_tid
        self._next_tid += 1
        return tid

    def _emit(self, **kw) -> int:
        tid = self._tid()
        if self.record:
            self.trace.events.append(TraceEvent(tid=tid, **kw))
        return tid

    def _ctrl(self) -> frozenset:
        return self._scopes[-1] if self._scopes else frozenset()

    def _memory(self, addr: int, length: int, space: Space) -> bytearray:
        mem = self.nvm if space is Space.NVM else self.dram
        if length <= 0 or addr < 0 or addr + length > len(mem):
            raise SubjectFault(f"{space.value} access [{addr}, {addr + length}) out of bounds")
        return mem

    def load(self, addr: int, length: int, sid: str, space: Space = Space.NVM) -> TrackedBytes:
        mem = self._memory(addr, length, space)
        tid = self._emit(kind=Kind.LOAD, sid=sid, addr=addr, length=length,
                         space=space, ctrl_deps=self._ctrl())
        return TrackedBytes(bytes(mem[addr:addr + length]), frozenset((tid,)))

    def load_int(self, addr: int, sid: str, space: Space = Space.NVM) -> TrackedBytes:
        return self.load(addr, 8, sid, space)

    def store(self, addr: int, value: Union[TrackedBytes, int, bytes], sid: str,
              space: Space = Space.NVM) -> None:
        if not isinstance(value, TrackedBytes):
            value = TrackedBytes.const(value)
        length = len(value.data)
        mem = self._memory(addr, length, space)
        if space is Space.NVM and addr // self.cache_line != (addr + length - 1) // self.cache_line:
            raise ConfigError(f"store [{addr}, {addr + length}) spans two cache lines")
        mem[addr:addr + length] = value.data
        self._emit(kind=Kind.STORE, sid=sid, addr=addr, length=length, data=value.data,
                   space=space, data_deps=value.provenance, ctrl_deps=self._ctrl())

    def flush(self, addr: int, sid: str) -> None:
        self._memory(addr, 1, Space.NVM)
        self._emit(kind=Kind.FLUSH, sid=sid, addr=addr - addr % self.cache_line)

    def fence(self, sid: str) -> None:
        self._emit(kind=Kind.FENCE, sid=sid)

    def persist(self, addr: int, sid: str) -> None:
        """flush followed by fence, the usual persistence barrier."""
        self.flush(addr, sid + ".flush")
        self.fence(sid + ".fence")

    @contextlib.contextmanager
    def guard(self, cond: Union[TrackedBytes, bool, None] = None) -> Iterator[None]:
        """Branch scope: every event inside inherits ``cond``'s provenance as control deps."""
        prov = cond.provenance if isinstance(cond, TrackedBytes) else frozenset()
        scope = self._ctrl() | prov
        self._emit(kind=Kind.BRANCH_BEGIN, ctrl_deps=scope)
        self._scopes.append(scope)
        try:
            yield
        finally:
            self._scopes.pop()
            self._emit(kind=Kind.BRANCH_END)

    def op_begin(self, label: str) -> None:
        if self._in_op:
            raise TraceError(f"operation {label!r} begins inside another operation")
        self._in_op = True
        self._emit(kind=Kind.OP_BEGIN, label=label)

    def op_end(self, output: str) -> None:
        if not self._in_op:
            raise TraceError("op_end without op_begin")
        self._in_op = False
        self._scopes.clear()
        self._emit(kind=Kind.OP_END, label=output)

    def snapshot(self) -> bytes:
        return bytes(self.nvm)


def pool_create(size: int, cache_line: int = DEFAULT_CACHE_LINE) -> PersistentPool:
    return PersistentPool(size, cache_line)
