"""End-to-end pipeline: trace, PPDG, invariants, plans, images, checks, clusters."""
from __future__ import annotations

import csv
import io
import logging
import os
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from . import crash, invariants, report, trace_io
from .dependence import Ppdg, build_ppdg
from .equivalence import (BugReport, OracleSet, TestCase, ValidationResult, Verdict,
                          build_oracles, check_all, judge, observe, trace_subject)
from .runtime import DEFAULT_CACHE_LINE, ConfigError, Kind, Space, Trace
from .subjects import Subject

log = logging.getLogger(__name__)

STATS_COLUMNS = ("invariants_ordering", "invariants_atomicity", "images", "divergent", "clusters")


def cache_line_from_env(default: int = DEFAULT_CACHE_LINE) -> int:
    raw = os.environ.get("CRASHWITNESS_CACHE_LINE")
    if raw is None or raw == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"CRASHWITNESS_CACHE_LINE must be an integer, got {raw!r}") from None
    if value <= 0 or value & (value - 1):
        raise ConfigError(f"CRASHWITNESS_CACHE_LINE must be a power of two, got {value}")
    return value


@dataclass
class PipelineConfig:
    jobs: int = 1
    baselines: bool = False
    cache_line: int = DEFAULT_CACHE_LINE
    reverify: bool = True


@dataclass
class Stats:
    invariants_ordering: int = 0
    invariants_atomicity: int = 0
    images: int = 0
    divergent: int = 0
    clusters: int = 0
    events: int = 0
    unbound_reads: int = 0
    executed_sids: int = 0
    yat_count: Optional[int] = None
    pmreorder_count: Optional[int] = None

    def to_csv(self) -> str:
        cols = list(STATS_COLUMNS)
        if self.yat_count is not None:
            cols += ["yat_count", "pmreorder_count"]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        row = asdict(self)
        w.writerow([row[c] for c in cols])
        return buf.getvalue()


@dataclass
class Result:
    """Everything a run produced; intermediate stages are kept for the CLI and tests."""

    testcase: TestCase
    trace: Trace
    outputs: List[str]
    ppdg: Ppdg
    invariants: list
    plans: List[crash.CrashPlan]
    images: List[crash.NvmImage]
    oracles: Dict[int, OracleSet]
    results: List[ValidationResult]
    reports: List[BugReport]
    clusters: List[report.Cluster]
    stats: Stats = field(default_factory=Stats)

    def report_text(self) -> str:
        return report.render(self.clusters, "text")

    def report_json(self) -> str:
        return report.render(self.clusters, "json")


def crashed_path(trace: Trace, plan: crash.CrashPlan) -> tuple:
    """Static ids executed in the crashed operation up to the crash fence."""
    begin = trace.op_spans()[plan.op_index][0]
    return tuple(e.sid for e in trace.events
                 if begin < e.tid < plan.fence_tid and e.sid is not None)


def _split_sids(trace: Trace, plan: crash.CrashPlan) -> tuple:
    begin = trace.op_spans()[plan.op_index][0]
    persisted, lost = [], []
    for e in trace.events:
        if e.tid >= plan.fence_tid:
            break
        if e.kind is not Kind.STORE or e.space is not Space.NVM:
            continue
        if e.tid in plan.unpersisted:
            lost.append(f"{e.sid}@{e.tid}")
        elif e.tid > begin:
            persisted.append(f"{e.sid}@{e.tid}")
    return tuple(persisted), tuple(lost)


def analyze(trace: Trace) -> tuple:
    """Trace to (ppdg, invariants, unbound read count)."""
    trace.validate()
    ppdg = build_ppdg(trace)
    skipped: Counter = Counter()
    ordering = invariants.infer_ordering(ppdg, trace, skipped)
    atomicity = invariants.infer_atomicity(ppdg, ordering, trace)
    return ppdg, ordering + atomicity, sum(skipped.values())


def run_pipeline(subject: Subject, testcase: TestCase,
                 config: Optional[PipelineConfig] = None) -> Result:
    config = config or PipelineConfig()
    cl = config.cache_line
    trace, outputs = trace_subject(subject, testcase, cl)
    ppdg, invs, unbound = analyze(trace)
    log.info("%s: %d events, %d invariants", subject.name, len(trace), len(invs))

    plans = crash.enumerate_violating_plans(trace, invs)
    images = crash.materialize_all(trace, plans)
    oracles = {i: build_oracles(subject, testcase, i, outputs, cl)
               for i in sorted({img.crashed_op_index for img in images})}
    results = check_all(subject, testcase, images, oracles, config.jobs, cl)

    ops = trace.op_spans()
    reports = []
    for img, res in zip(images, results):
        if res.verdict is not Verdict.DIVERGE:
            continue
        persisted, lost = _split_sids(trace, img.plan)
        rep = BugReport(testcase=testcase, plan=img.plan, observed=res.observed,
                        oracles=oracles[img.crashed_op_index], crashed_op=ops[img.plan.op_index][2],
                        path=crashed_path(trace, img.plan), persisted_sids=persisted,
                        unpersisted_sids=lost)
        if config.reverify:
            again = observe(subject, testcase, img, cl)
            rep.reverified = again == res.observed and judge(again, rep.oracles) is Verdict.DIVERGE
        reports.append(rep)
    clusters = report.cluster(reports)

    counts = invariants.invariant_stats(invs)
    stats = Stats(invariants_ordering=counts["ordering"], invariants_atomicity=counts["atomicity"],
                  images=len(images), divergent=len(reports), clusters=len(clusters),
                  events=len(trace), unbound_reads=unbound,
                  executed_sids=len({e.sid for e in trace.events if e.sid is not None}))
    if config.baselines:
        yat = crash.count_exhaustive_yat(trace)
        pmr = crash.count_exhaustive_pmreorder(trace)
        stats.yat_count = yat[-1][1] if yat else 0
        stats.pmreorder_count = pmr[-1][1] if pmr else 0
    return Result(testcase, trace, outputs, ppdg, invs, plans, images, oracles,
                  results, reports, clusters, stats)


def write_artifacts(result: Result, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    trace_io.write(result.trace, out / "trace.txt")
    (out / "testcase.txt").write_text(result.testcase.dumps())
    (out / "invariants.txt").write_text(invariants.dumps(result.invariants))
    crash.write_images(result.images, out / "images")
    (out / "checks.txt").write_text("".join(r.log_line() + "\n" for r in result.results))
    (out / "report.json").write_text(result.report_json())
    (out / "report.txt").write_text(result.report_text())
    (out / "stats.csv").write_text(result.stats.to_csv())


def exhaustive_validate(subject: Subject, testcase: TestCase,
                        cache_line: int = DEFAULT_CACHE_LINE) -> List[ValidationResult]:
    """Check every legal crash state at every store/flush/fence inside an operation.

    Exponential in the number of pending stores; meant for short test cases.
    Returns the divergent results only.
    """
    trace, outputs = trace_subject(subject, testcase, cache_line)
    oracles: Dict[int, OracleSet] = {}
    seen = set()
    divergent = []
    for bound, op_index, left_out in crash.legal_states(trace):
        if op_index is None:
            continue
        plan = crash.CrashPlan(fence_tid=bound, extra_store=None, op_index=op_index, unpersisted=left_out)
        image = crash.materialize(trace, plan)
        if (op_index, image.data) in seen:
            continue
        seen.add((op_index, image.data))
        if op_index not in oracles:
            oracles[op_index] = build_oracles(subject, testcase, op_index, outputs, cache_line)
        observed = observe(subject, testcase, image, cache_line)
        verdict = judge(observed, oracles[op_index])
        if verdict is Verdict.DIVERGE:
            divergent.append(ValidationResult(plan, observed, verdict))
    return divergent
