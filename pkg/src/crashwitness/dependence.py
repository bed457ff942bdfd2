"""Persistence program dependence graph (PPDG).

Nodes are the NVM loads and stores of a trace.  An edge ``from -> to`` says
that NVM event ``from`` depends on the NVM load ``to``.  Paths through DRAM
are collapsed: a DRAM load is replaced by the sources of the DRAM stores it
read from plus its own guarding loads, and any control edge on the way turns
the collapsed edge into a control edge.
"""
from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

from .runtime import Kind, Space, Trace, TraceError


class EdgeKind(enum.Enum):
    DATA = "Data"
    CONTROL = "Control"


@dataclass(frozen=True)
class PpdgNode:
    tid: int
    sid: str
    kind: str  # "NvmLoad" | "NvmStore"
    addr: int
    length: int


@dataclass(frozen=True)
class PpdgEdge:
    src: int  # dependent (later) event
    dst: int  # source NVM load (earlier)
    kind: EdgeKind


@dataclass
class Ppdg:
    nodes: Dict[int, PpdgNode] = field(default_factory=dict)
    edges: List[PpdgEdge] = field(default_factory=list)
    projection: Dict[Tuple[str, str, EdgeKind], List[PpdgEdge]] = field(default_factory=dict)
    _out: Dict[int, List[PpdgEdge]] = field(default_factory=dict, repr=False)

    def edge_set(self) -> set:
        return {(e.src, e.dst, e.kind) for e in self.edges}

    def to_dot(self) -> str:
        out = ["digraph ppdg {"]
        for n in self.nodes.values():
            out.append(f'  n{n.tid} [label="{n.sid}@{n.tid} {n.kind} {n.addr}"];')
        for e in self.edges:
            style = "dashed" if e.kind is EdgeKind.CONTROL else "solid"
            out.append(f"  n{e.src} -> n{e.dst} [style={style}];")
        out.append("}")
        return "\n".join(out) + "\n"


def last_writers(trace: Trace) -> Dict[int, frozenset]:
    """Map every load tid to the tids of the stores that last wrote its bytes.

    Bytes never written inside the trace contribute nothing, so a load of
    pristine memory maps to an empty set.
    """
    owner: Dict[Tuple[Space, int], int] = {}
    result: Dict[int, frozenset] = {}
    for e in trace.events:
        if e.kind is Kind.STORE:
            for a in range(e.addr, e.addr + e.length):
                owner[(e.space, a)] = e.tid
        elif e.kind is Kind.LOAD:
            writers = {owner[(e.space, a)] for a in range(e.addr, e.addr + e.length)
                       if (e.space, a) in owner}
            result[e.tid] = frozenset(writers)
    return result


def build_ppdg(trace: Trace) -> Ppdg:
    events = trace.by_tid()
    writers = last_writers(trace)
    # DRAM load tid -> {nvm load tid: reached through a control edge}
    collapsed: Dict[int, Dict[int, bool]] = {}

    def resolve(dep: int, via_ctrl: bool, acc: Dict[int, bool]) -> None:
        src = events.get(dep)
        if src is None or src.kind is not Kind.LOAD:
            raise TraceError(f"dependency {dep} is not a load in this trace")
        if src.space is Space.NVM:
            acc[dep] = acc.get(dep, False) or via_ctrl
            return
        for nvm, ctrl in collapsed[dep].items():
            acc[nvm] = acc.get(nvm, False) or ctrl or via_ctrl

    g = Ppdg()
    for e in trace.events:
        if e.kind is Kind.LOAD and e.space is Space.DRAM:
            acc: Dict[int, bool] = {}
            for d in e.ctrl_deps:
                resolve(d, True, acc)
            for w in writers[e.tid]:
                store = events[w]
                for d in store.data_deps:
                    resolve(d, False, acc)
                for d in store.ctrl_deps:
                    resolve(d, True, acc)
            collapsed[e.tid] = acc
            continue
        if e.kind not in (Kind.LOAD, Kind.STORE) or e.space is not Space.NVM:
            continue
        kind = "NvmLoad" if e.kind is Kind.LOAD else "NvmStore"
        g.nodes[e.tid] = PpdgNode(e.tid, e.sid, kind, e.addr, e.length)
        acc = {}
        for d in e.ctrl_deps:
            resolve(d, True, acc)
        for d in e.data_deps:
            resolve(d, False, acc)
        out = []
        for dst in sorted(acc):
            edge = PpdgEdge(e.tid, dst, EdgeKind.CONTROL if acc[dst] else EdgeKind.DATA)
            out.append(edge)
            g.edges.append(edge)
        g._out[e.tid] = out

    proj: Dict[Tuple[str, str, EdgeKind], List[PpdgEdge]] = defaultdict(list)
    for edge in g.edges:
        proj[(g.nodes[edge.src].sid, g.nodes[edge.dst].sid, edge.kind)].append(edge)
    g.projection = dict(proj)
    return g


def dynamic_sources(ppdg: Ppdg, tid: int) -> set:
    if tid not in ppdg.nodes:
        raise KeyError(f"tid {tid} is not a PPDG node")
    return {(e.dst, e.kind) for e in ppdg._out.get(tid, ())}
