"""Clustering of bug reports and text/JSON rendering."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

from .equivalence import BugReport


def path_hash(path: Tuple[str, ...]) -> str:
    return hashlib.sha1("\n".join(path).encode()).hexdigest()[:12]


@dataclass
class Cluster:
    op: str
    path: Tuple[str, ...]
    members: List[BugReport] = field(default_factory=list)

    @property
    def key(self) -> tuple:
        return (self.op, self.path)

    @property
    def path_hash(self) -> str:
        return path_hash(self.path)

    @property
    def representative(self) -> BugReport:
        return min(self.members, key=lambda r: (r.plan.fence_tid, r.plan.extra_store or -1))


def cluster(reports: List[BugReport]) -> List[Cluster]:
    groups: Dict[tuple, Cluster] = {}
    for r in reports:
        key = (r.crashed_op, r.path)
        if key not in groups:
            groups[key] = Cluster(r.crashed_op, r.path)
        groups[key].members.append(r)
    return sorted(groups.values(),
                  key=lambda c: (c.op, c.path_hash, c.representative.plan.fence_tid))


def _fmt_outputs(values) -> str:
    return "{" + ",".join(dict.fromkeys(values)) + "}"


def _cluster_json(c: Cluster) -> dict:
    r = c.representative
    return {
        "op": c.op,
        "path_hash": c.path_hash,
        "count": len(c.members),
        "representative": {
            "fence": r.plan.fence_tid,
            "extra": r.plan.extra_store,
            "crashed_op_index": r.plan.op_index,
            "violated": [inv.ident for inv in r.violated],
            "persisted": list(r.persisted_sids),
            "unpersisted": list(r.unpersisted_sids),
            "observed": list(r.observed),
            "oracles": {"c": list(r.oracles.committed), "r": list(r.oracles.rolledback)},
        },
    }


def _cluster_text(n: int, c: Cluster) -> List[str]:
    r = c.representative
    extra = "-" if r.plan.extra_store is None else r.plan.extra_store
    lines = [
        f"[{n}] op={c.op} path={c.path_hash} count={len(c.members)}",
        f"    fence={r.plan.fence_tid}, extra={extra}, crashed_op_index={r.plan.op_index}",
        f"    violated={', '.join(inv.ident.replace(':', ' ', 1) for inv in r.violated)}",
        f"    persisted={' '.join(r.persisted_sids) or '-'}",
        f"    unpersisted={' '.join(r.unpersisted_sids) or '-'}",
    ]
    i = r.first_divergence()
    if i is not None:
        op = r.testcase.ops[r.plan.op_index + 1 + i] if r.plan.op_index + 1 + i < len(r.testcase.ops) else None
        got = r.observed[i] if i < len(r.observed) else "<none>"
        want = [o[i] for o in (r.oracles.committed, r.oracles.rolledback) if i < len(o)]
        lines.append(f"    at {op}: observed={got}, oracles={_fmt_outputs(want)}")
    return lines


def render(clusters: List[Cluster], fmt: str = "text") -> str:
    if fmt == "json":
        return json.dumps({"clusters": [_cluster_json(c) for c in clusters]}, indent=2) + "\n"
    if fmt != "text":
        raise ValueError(f"unknown report format {fmt!r}")
    total = sum(len(c.members) for c in clusters)
    out = [f"{len(clusters)} bugs ({total} divergent crash images)"]
    for n, c in enumerate(clusters, 1):
        out.extend(_cluster_text(n, c))
    return "\n".join(out) + "\n"
