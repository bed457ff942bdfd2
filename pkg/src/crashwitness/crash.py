"""Cache/NVM persistence simulation and crash-plan enumeration.

Rules of the x86 model used here:

* a store is pending until a flush covering its line is followed by a fence;
* a flush only covers the stores already pending on its line;
* within one cache line stores persist in program order, so any legal crash
  state persists a prefix of each line's pending stores.

Crash points are fences.  A plan is a fence plus at most one extra pending
store that is assumed to have reached NVM (together with the earlier pending
stores on its line).
"""
from __future__ import annotations

import bisect
import itertools
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple

from .invariants import AtomicityInvariant, LikelyInvariant, OrderingInvariant
from .runtime import Kind, Space, Trace


@dataclass(frozen=True)
class PersistState:
    """Persistence state right before ``fence_tid`` takes effect."""

    fence_tid: int
    op_index: Optional[int]
    pending: Dict[int, Tuple[int, ...]]  # line -> pending store tids, program order
    flushed: frozenset  # pending stores whose line was flushed since they executed

    @property
    def pending_set(self) -> frozenset:
        return frozenset(t for tids in self.pending.values() for t in tids)

    def is_must_persisted(self, store_tid: int) -> bool:
        return store_tid < self.fence_tid and store_tid not in self.pending_set


@dataclass
class CrashPlan:
    fence_tid: int
    extra_store: Optional[int]
    op_index: int
    unpersisted: frozenset  # executed NVM stores left out of the image
    violated: list = field(default_factory=list)

    @property
    def label(self) -> str:
        extra = "-" if self.extra_store is None else str(self.extra_store)
        return f"fence={self.fence_tid} extra={extra}"

    def meta_line(self) -> str:
        ids = ",".join(inv.ident for inv in self.violated) or "-"
        return f"PLAN {self.label} violated={ids}"

    def persisted(self, trace: Trace) -> frozenset:
        return frozenset(e.tid for e in trace.events
                         if e.kind is Kind.STORE and e.space is Space.NVM
                         and e.tid < self.fence_tid and e.tid not in self.unpersisted)


@dataclass
class NvmImage:
    data: bytes
    plan: CrashPlan
    crashed_op_index: int


class _Simulator:
    """Incremental pass over the trace shared by the simulator and the counters."""

    def __init__(self, trace: Trace):
        self.trace = trace
        self.pending: Dict[int, List[int]] = defaultdict(list)
        self.flushed: set = set()

    def step(self, e) -> None:
        line = self.trace.line_of
        if e.kind is Kind.STORE and e.space is Space.NVM:
            self.pending[line(e.addr)].append(e.tid)
        elif e.kind is Kind.FLUSH:
            self.flushed.update(self.pending.get(e.addr, ()))
        elif e.kind is Kind.FENCE:
            for ln in list(self.pending):
                keep = [t for t in self.pending[ln] if t not in self.flushed]
                if keep:
                    self.pending[ln] = keep
                else:
                    del self.pending[ln]
            self.flushed.clear()

    def state_count(self) -> int:
        return math.prod(len(v) + 1 for v in self.pending.values())


def _op_index_map(trace: Trace) -> Dict[int, int]:
    """fence/store tid -> index of the operation span containing it."""
    out = {}
    idx = -1
    inside = False
    for e in trace.events:
        if e.kind is Kind.OP_BEGIN:
            idx += 1
            inside = True
        elif e.kind is Kind.OP_END:
            inside = False
        elif inside:
            out[e.tid] = idx
    return out


def simulate(trace: Trace) -> List[PersistState]:
    """One snapshot per fence, captured before the fence takes effect."""
    sim = _Simulator(trace)
    ops = _op_index_map(trace)
    snaps = []
    for e in trace.events:
        if e.kind is Kind.FENCE:
            snaps.append(PersistState(
                fence_tid=e.tid, op_index=ops.get(e.tid),
                pending={ln: tuple(v) for ln, v in sim.pending.items()},
                flushed=frozenset(sim.flushed)))
        sim.step(e)
    return snaps


def _line_prefix(state: PersistState, extra: int) -> frozenset:
    for tids in state.pending.values():
        if extra in tids:
            return frozenset(tids[:tids.index(extra) + 1])
    raise ValueError(f"store {extra} is not pending at fence {state.fence_tid}")


def unpersisted_set(state: PersistState, extra: Optional[int] = None) -> frozenset:
    """Executed stores that do not reach NVM under the plan (state, extra)."""
    pend = state.pending_set
    if extra is None:
        return pend
    return pend - _line_prefix(state, extra)


def persisted_closure(state: PersistState, trace: Trace, extra: Optional[int] = None) -> frozenset:
    """MustPersisted stores plus ``extra`` and every earlier pending store on its line."""
    left_out = unpersisted_set(state, extra)
    return frozenset(e.tid for e in trace.events
                     if e.kind is Kind.STORE and e.space is Space.NVM
                     and e.tid < state.fence_tid and e.tid not in left_out)


class _Index:
    """Store lookups needed to bind invariants to dynamic instances."""

    def __init__(self, trace: Trace):
        self.ops = _op_index_map(trace)
        self.by_sid: Dict[str, List[int]] = defaultdict(list)
        self.by_op_sid: Dict[Tuple[int, str], List[int]] = defaultdict(list)
        for e in trace.events:
            if e.kind is Kind.STORE and e.space is Space.NVM:
                self.by_sid[e.sid].append(e.tid)
                op = self.ops.get(e.tid)
                if op is not None:
                    self.by_op_sid[(op, e.sid)].append(e.tid)
        self.sid_of = {t: sid for sid, tids in self.by_sid.items() for t in tids}
        self.op_stores: Dict[int, List[int]] = defaultdict(list)
        for t in sorted(self.sid_of):
            if t in self.ops:
                self.op_stores[self.ops[t]].append(t)

    def matching_first(self, first_sid: str, second_tid: int) -> List[int]:
        op = self.ops.get(second_tid)
        same_op = self.by_op_sid.get((op, first_sid), [])
        if same_op:
            return same_op
        tids = self.by_sid.get(first_sid, [])
        i = bisect.bisect_left(tids, second_tid)
        return [tids[i - 1]] if i else []


def _violations(invs: List[LikelyInvariant], idx: _Index, state: PersistState,
                unpersisted: frozenset) -> List[LikelyInvariant]:
    fence, op = state.fence_tid, state.op_index

    def persisted(t: int) -> bool:
        return t < fence and t not in unpersisted

    pending = state.pending_set
    out = []
    for inv in invs:
        if isinstance(inv, OrderingInvariant):
            seconds = set(t for t in idx.by_op_sid.get((op, inv.second_sid), []) if t < fence)
            seconds.update(t for t in pending if idx.sid_of[t] == inv.second_sid)
            hit = False
            for s in sorted(seconds):
                if not persisted(s):
                    continue
                if any(f < fence and not persisted(f) for f in idx.matching_first(inv.first_sid, s)):
                    hit = True
                    break
            if hit:
                out.append(inv)
        elif isinstance(inv, AtomicityInvariant):
            a_sid, b_sid = sorted(inv.guardian_sids)
            a = idx.by_op_sid.get((op, a_sid), [])
            b = idx.by_op_sid.get((op, b_sid), [])
            if not a or not b:
                continue
            pa = [persisted(t) for t in a]
            pb = [persisted(t) for t in b]
            if (any(pa) and not all(pb)) or (any(pb) and not all(pa)):
                out.append(inv)
    return out


def enumerate_violating_plans(trace: Trace, invs: List[LikelyInvariant],
                              states: Optional[List[PersistState]] = None) -> List[CrashPlan]:
    """Base plan plus one plan per pending store at every fence; keep the violating ones."""
    states = simulate(trace) if states is None else states
    idx = _Index(trace)
    op_begin = {i: b for i, (b, _, _) in enumerate(trace.op_spans())}
    seen = set()
    plans = []
    for st in states:
        if st.op_index is None:
            continue
        begin = op_begin[st.op_index]
        in_op = idx.op_stores.get(st.op_index, [])
        # only invariants touching a store of the crashed op or a pending store can fire
        op_sids = {idx.sid_of[t] for t in in_op}
        live = op_sids | {idx.sid_of[t] for t in st.pending_set}
        relevant = [inv for inv in invs
                    if (isinstance(inv, OrderingInvariant) and inv.second_sid in live)
                    or (isinstance(inv, AtomicityInvariant) and inv.guardian_sids <= op_sids)]
        if not relevant:
            continue
        for extra in [None] + sorted(st.pending_set):
            left_out = unpersisted_set(st, extra)
            key = (st.op_index,
                   frozenset(t for t in in_op if t < st.fence_tid and t not in left_out),
                   frozenset(t for t in left_out if t < begin))
            if key in seen:
                continue
            violated = _violations(relevant, idx, st, left_out)
            if not violated:
                continue
            seen.add(key)
            plans.append(CrashPlan(st.fence_tid, extra, st.op_index, left_out, violated))
    return plans


def materialize(trace: Trace, plan: CrashPlan) -> NvmImage:
    """Replay the persisted stores of ``plan`` in trace order over a zeroed pool."""
    img = bytearray(trace.pool_size)
    for e in trace.events:
        if e.tid >= plan.fence_tid:
            break
        if e.kind is Kind.STORE and e.space is Space.NVM and e.tid not in plan.unpersisted:
            img[e.addr:e.addr + e.length] = e.data
    return NvmImage(bytes(img), plan, plan.op_index)


def materialize_all(trace: Trace, plans: List[CrashPlan]) -> List[NvmImage]:
    """Materialize many plans with one pass over the trace."""
    order = sorted(range(len(plans)), key=lambda i: plans[i].fence_tid)
    images: List[Optional[NvmImage]] = [None] * len(plans)
    droppable = Counter(t for p in plans for t in p.unpersisted)
    base = bytearray(trace.pool_size)  # stores that are persisted in every plan so far
    stores = [e for e in trace.events if e.kind is Kind.STORE and e.space is Space.NVM]
    pos = 0
    overlay: List = []  # stores replayed in order on top of ``base`` per plan
    for i in order:
        plan = plans[i]
        while pos < len(stores) and stores[pos].tid < plan.fence_tid:
            overlay.append(stores[pos])
            pos += 1
        img = bytearray(base)
        for e in overlay:
            if e.tid not in plan.unpersisted:
                img[e.addr:e.addr + e.length] = e.data
        images[i] = NvmImage(bytes(img), plan, plan.op_index)
        droppable.subtract(plan.unpersisted)
        # fold the leading stores no remaining plan can drop into the base image
        cut = 0
        for e in overlay:
            if droppable[e.tid] > 0:
                break
            base[e.addr:e.addr + e.length] = e.data
            cut += 1
        del overlay[:cut]
    return images


def count_exhaustive_yat(trace: Trace) -> List[Tuple[int, int]]:
    """Cumulative number of legal crash states over every store/flush/fence crash point."""
    sim = _Simulator(trace)
    total = 0
    out = []
    for e in trace.events:
        is_point = (e.kind is Kind.STORE and e.space is Space.NVM) or e.kind in (Kind.FLUSH, Kind.FENCE)
        if e.kind is not Kind.FENCE:
            sim.step(e)
        if is_point:
            total += sim.state_count()
            out.append((e.tid, total))
        if e.kind is Kind.FENCE:
            sim.step(e)
    return out


def count_exhaustive_pmreorder(trace: Trace) -> List[Tuple[int, int]]:
    """Cumulative 2**n over fences, n = explicitly flushed stores, ignoring cache lines."""
    sim = _Simulator(trace)
    total = 0
    out = []
    for e in trace.events:
        if e.kind is Kind.FENCE:
            total += 2 ** len(sim.flushed)
            out.append((e.tid, total))
        sim.step(e)
    return out


def cumulative_at(counts: List[Tuple[int, int]], tid: int) -> int:
    """Cumulative count over crash points with tid <= ``tid``."""
    i = bisect.bisect_right([t for t, _ in counts], tid)
    return counts[i - 1][1] if i else 0


def legal_states(trace: Trace) -> Iterator[Tuple[int, Optional[int], frozenset]]:
    """Every legal crash state at every store/flush/fence crash point.

    Yields ``(crash_tid, op_index, unpersisted)``; used for exhaustive
    validation on small traces.
    """
    sim = _Simulator(trace)
    ops = _op_index_map(trace)
    for e in trace.events:
        is_point = (e.kind is Kind.STORE and e.space is Space.NVM) or e.kind in (Kind.FLUSH, Kind.FENCE)
        if e.kind is not Kind.FENCE:
            sim.step(e)
        if is_point:
            lines = [tuple(v) for v in sim.pending.values()]
            for cut in itertools.product(*(range(len(v) + 1) for v in lines)):
                left = frozenset(t for v, c in zip(lines, cut) for t in v[c:])
                # crash after the instruction at e.tid: use e.tid + 1 as the exclusive bound
                yield e.tid + 1, ops.get(e.tid), left
        if e.kind is Kind.FENCE:
            sim.step(e)


def write_images(images: List[NvmImage], directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for n, img in enumerate(images):
        (directory / f"{n:05d}.img").write_bytes(img.data)
        (directory / f"{n:05d}.meta").write_text(img.plan.meta_line() + "\n")
