import json
from pathlib import Path

import pytest

from crashwitness import report
from crashwitness.equivalence import BugReport, OracleSet, TestCase
from crashwitness.crash import CrashPlan
from crashwitness.pipeline import run_pipeline
from crashwitness.subjects import Operation, get_subject

GOLDEN = Path(__file__).parent / "golden"
CASE = TestCase((Operation("insert", 3, 10), Operation("delete", 3),
                 Operation("insert", 3, 11), Operation("query", 3)))


def fake(op, path, fence, extra=None):
    plan = CrashPlan(fence, extra, 0, frozenset())
    return BugReport(testcase=CASE, plan=plan, observed=("x",), oracles=OracleSet(0, ("a",), ("b",)),
                     crashed_op=op, path=path)


def test_clusters_partition_by_op_and_path():
    reps = [fake("insert", ("a", "b"), 9), fake("insert", ("a", "b"), 5, 4),
            fake("insert", ("a",), 7), fake("update", ("a", "b"), 3)]
    cl = report.cluster(reps)
    assert sorted(len(c.members) for c in cl) == [1, 1, 2]
    assert sum(len(c.members) for c in cl) == len(reps)
    assert len({c.key for c in cl}) == len(cl)
    big = next(c for c in cl if len(c.members) == 2)
    assert big.representative.plan.fence_tid == 5


def test_cluster_order_is_deterministic():
    reps = [fake("update", ("q",), 3), fake("insert", ("a",), 7), fake("insert", ("b",), 1)]
    assert [c.key for c in report.cluster(reps)] == [c.key for c in report.cluster(reps[::-1])]


def test_empty_render():
    assert report.render([], "text") == "0 bugs (0 divergent crash images)\n"
    assert json.loads(report.render([], "json")) == {"clusters": []}


def test_unknown_format():
    with pytest.raises(ValueError):
        report.render([], "xml")


def test_golden_text_report():
    r = run_pipeline(get_subject("mini-level-hash-buggy"), CASE)
    assert r.report_text() == (GOLDEN / "reinsert_report.txt").read_text()


def test_json_report_round_trips_and_matches_text():
    r = run_pipeline(get_subject("mini-level-hash-buggy"), CASE)
    doc = json.loads(r.report_json())
    (c,) = doc["clusters"]
    rep = c["representative"]
    assert c["op"] == "insert" and c["count"] == 1
    assert rep["observed"] == ["v10"]
    assert rep["oracles"] == {"c": ["v11"], "r": ["null"]}
    assert "RO3:P(lh.insert.key)<W(lh.insert.token)" in rep["violated"]
    assert json.loads(json.dumps(doc)) == doc
    assert c["path_hash"] in r.report_text()
