"""Likely persistence invariants mined from the PPDG.

Ordering rules (X and Y are NVM locations, bound to the static sites of the
stores that produced the values the reads observed):

* RO1  ``W(Y) dd R(X)``  =>  ``P(X) < W(Y)``
* RO2  ``W(Y) cd R(X)``  =>  ``P(X) < W(Y)``
* RO3  ``R(Y) cd R(X)``  =>  ``P(Y) < W(X)``   (X is a guardian)

Atomicity rule:

* RA1  two guardians stored within one operation  =>  ``AP(X, Y)``
"""
from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional

from .dependence import EdgeKind, Ppdg, last_writers
from .runtime import Kind, Space, Trace

ORDERING_RULES = ("RO1", "RO2", "RO3")
ATOMICITY_RULES = ("RA1",)


@dataclass(eq=False)
class LikelyInvariant:
    rule: str
    witnesses: list = field(default_factory=list)

    @property
    def key(self) -> tuple:
        raise NotImplementedError

    @property
    def ident(self) -> str:
        raise NotImplementedError

    def __eq__(self, other) -> bool:
        return isinstance(other, LikelyInvariant) and self.key == other.key

    def __hash__(self) -> int:
        return hash(self.key)


@dataclass(eq=False)
class OrderingInvariant(LikelyInvariant):
    """``first_sid`` must be persisted before ``second_sid`` is written."""

    first_sid: str = ""
    second_sid: str = ""

    @property
    def key(self) -> tuple:
        return (self.rule, self.first_sid, self.second_sid)

    @property
    def ident(self) -> str:
        return f"{self.rule}:P({self.first_sid})<W({self.second_sid})"

    def dump(self) -> str:
        return f"{self.rule} P({self.first_sid}) < W({self.second_sid}) witnesses={len(self.witnesses)}"


@dataclass(eq=False)
class AtomicityInvariant(LikelyInvariant):
    guardian_sids: frozenset = frozenset()

    @property
    def key(self) -> tuple:
        return (self.rule, tuple(sorted(self.guardian_sids)))

    @property
    def ident(self) -> str:
        return f"{self.rule}:AP({','.join(sorted(self.guardian_sids))})"

    def dump(self) -> str:
        return f"{self.rule} AP({','.join(sorted(self.guardian_sids))}) witnesses={len(self.witnesses)}"


def _merge(found: Dict[tuple, LikelyInvariant], inv: LikelyInvariant, witness) -> None:
    existing = found.get(inv.key)
    if existing is None:
        inv.witnesses.append(witness)
        found[inv.key] = inv
    else:
        existing.witnesses.append(witness)


def infer_ordering(ppdg: Ppdg, trace: Trace, skipped: Optional[Counter] = None) -> List[OrderingInvariant]:
    """Apply RO1-RO3 to every PPDG edge.

    Witnesses are ``(dependent_tid, source_tid, first_store_tid, second_store_tid)``.
    Matches whose read has no in-trace writer are dropped and tallied in
    ``skipped`` by rule.
    """
    writers = last_writers(trace)
    events = trace.by_tid()
    found: Dict[tuple, LikelyInvariant] = {}
    skipped = skipped if skipped is not None else Counter()

    for edge in ppdg.edges:
        node = ppdg.nodes[edge.src]
        if node.kind == "NvmStore":
            rule = "RO1" if edge.kind is EdgeKind.DATA else "RO2"
            firsts = writers[edge.dst]
            seconds = frozenset((edge.src,))
        elif edge.kind is EdgeKind.CONTROL:
            rule = "RO3"
            firsts = writers[edge.src]
            seconds = writers[edge.dst]
        else:
            continue
        if not firsts or not seconds:
            skipped[rule] += 1
            continue
        for w1, w2 in itertools.product(sorted(firsts), sorted(seconds)):
            s1, s2 = events[w1].sid, events[w2].sid
            if s1 == s2:
                continue
            inv = OrderingInvariant(rule=rule, first_sid=s1, second_sid=s2)
            _merge(found, inv, (edge.src, edge.dst, w1, w2))
    return sorted(found.values(), key=lambda i: i.key)


def guardians(ordering: Iterable[LikelyInvariant]) -> set:
    return {inv.second_sid for inv in ordering
            if isinstance(inv, OrderingInvariant) and inv.rule == "RO3"}


def infer_atomicity(ppdg: Ppdg, ordering: Iterable[LikelyInvariant], trace: Trace) -> List[AtomicityInvariant]:
    """RA1: pair up distinct guardian store sites executed in the same operation."""
    guard = guardians(ordering)
    found: Dict[tuple, LikelyInvariant] = {}
    current: Optional[list] = None
    spans = []
    for e in trace.events:
        if e.kind is Kind.OP_BEGIN:
            current = []
        elif e.kind is Kind.OP_END:
            if current is not None:
                spans.append(current)
            current = None
        elif (current is not None and e.kind is Kind.STORE and e.space is Space.NVM
              and e.sid in guard):
            current.append(e)
    if current is not None:
        spans.append(current)

    for stores in spans:
        for a, b in itertools.combinations(stores, 2):
            if a.sid == b.sid:
                continue
            inv = AtomicityInvariant(rule="RA1", guardian_sids=frozenset((a.sid, b.sid)))
            _merge(found, inv, (a.tid, b.tid))
    return sorted(found.values(), key=lambda i: i.key)


def infer(ppdg: Ppdg, trace: Trace) -> List[LikelyInvariant]:
    ordering = infer_ordering(ppdg, trace)
    return ordering + infer_atomicity(ppdg, ordering, trace)


def invariant_stats(invs: Iterable[LikelyInvariant]) -> Dict[str, int]:
    counts = {r: 0 for r in ORDERING_RULES + ATOMICITY_RULES}
    for key in {inv.key for inv in invs}:
        counts[key[0]] += 1
    counts["ordering"] = sum(counts[r] for r in ORDERING_RULES)
    counts["atomicity"] = sum(counts[r] for r in ATOMICITY_RULES)
    return counts


def dumps(invs: Iterable[LikelyInvariant]) -> str:
    return "".join(inv.dump() + "\n" for inv in invs)


def check_witness(inv: LikelyInvariant, ppdg: Ppdg, trace: Trace) -> bool:
    """Re-check that every witness satisfies the rule's condition on the PPDG."""
    events = trace.by_tid()
    writers = last_writers(trace)
    edges = ppdg.edge_set()
    for w in inv.witnesses:
        if isinstance(inv, AtomicityInvariant):
            a, b = (events[t] for t in w)
            if {a.sid, b.sid} != set(inv.guardian_sids) or a.kind is not Kind.STORE:
                return False
            continue
        src, dst, w1, w2 = w
        kind = EdgeKind.DATA if inv.rule == "RO1" else EdgeKind.CONTROL
        if (src, dst, kind) not in edges:
            return False
        if inv.rule in ("RO1", "RO2"):
            ok = (ppdg.nodes[src].kind == "NvmStore" and w1 in writers[dst] and w2 == src)
        else:
            ok = (ppdg.nodes[src].kind == "NvmLoad" and w1 in writers[src] and w2 in writers[dst])
        if not ok or events[w1].sid != inv.first_sid or events[w2].sid != inv.second_sid:
            return False
    return True
