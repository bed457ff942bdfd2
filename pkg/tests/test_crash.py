import pytest
from hypothesis import given, settings, strategies as st

from crashwitness import crash
from crashwitness.dependence import build_ppdg
from crashwitness.equivalence import TestCase, trace_subject
from crashwitness.invariants import AtomicityInvariant, infer
from crashwitness.runtime import Kind, pool_create
from crashwitness.subjects import Operation, get_subject

from oracles import brute_legal_sets, nvm_stores_before

LINE = 64

# ≤10 stores over three lines with interleaved flushes and fences
action = st.one_of(
    st.tuples(st.just("st"), st.integers(0, 2), st.integers(0, 7)),
    st.tuples(st.just("fl"), st.integers(0, 2), st.just(0)),
    st.tuples(st.just("fe"), st.just(0), st.just(0)),
)
actions = st.lists(action, max_size=24).filter(lambda a: sum(x[0] == "st" for x in a) <= 10)


def build(acts):
    p = pool_create(3 * LINE)
    p.op_begin("op")
    for n, (kind, line, off) in enumerate(acts):
        if kind == "st":
            p.store(line * LINE + 8 * off, n + 1, f"s{line}.{off}")
        elif kind == "fl":
            p.flush(line * LINE, "f")
        else:
            p.fence("n")
    p.fence("n.end")
    p.op_end("ok")
    return p.trace


def stores(trace):
    return [e.tid for e in trace.events if e.kind is Kind.STORE]


def fence_state(trace, n=0):
    return crash.simulate(trace)[n]


def test_same_line_states_are_prefixes():
    p = pool_create(128)
    p.store(0, 1, "x")
    p.store(8, 2, "y")
    p.flush(0, "f")
    p.fence("n")
    trace = p.trace
    sets = {left for bound, _, left in crash.legal_states(trace) if bound == 2}
    x, y = 0, 1
    assert sets == {frozenset({x, y}), frozenset({y}), frozenset()}  # persisted ∅, {x}, {x,y}


def test_state_after_barrier_and_pending_token():
    p = pool_create(256)
    p.store(64, 7, "key")
    p.store(128, 8, "val")
    p.flush(64, "fk")
    p.flush(128, "fv")
    p.fence("n1")
    p.store(0, 1, "token")
    p.fence("n2")
    s1, s2 = crash.simulate(p.trace)
    assert s1.pending_set == {0, 1} and s1.flushed == {0, 1}
    assert s2.is_must_persisted(0) and s2.is_must_persisted(1)
    assert s2.pending_set == {5}
    assert crash.persisted_closure(s2, p.trace) == {0, 1}
    assert crash.persisted_closure(s2, p.trace, extra=5) == {0, 1, 5}


def test_extra_store_pulls_earlier_same_line_stores():
    p = pool_create(128)
    p.store(0, 1, "a")
    p.store(8, 2, "b")
    p.store(64, 3, "c")
    p.fence("n")
    s = fence_state(p.trace)
    assert crash.persisted_closure(s, p.trace, extra=1) == {0, 1}
    assert crash.unpersisted_set(s, extra=1) == {2}
    with pytest.raises(ValueError):
        crash.unpersisted_set(s, extra=99)


def test_yat_counts_distinct_and_same_line():
    # last point is the fence with two pending stores
    distinct = crash.count_exhaustive_yat(_two_store_trace(0, 64))
    same = crash.count_exhaustive_yat(_two_store_trace(0, 8))
    assert [c for _, c in distinct] == [2, 2 + 4, 2 + 4 + 4]
    assert [c for _, c in same] == [2, 2 + 3, 2 + 3 + 3]


def _two_store_trace(a, b):
    p = pool_create(256)
    p.store(a, 1, "x")
    p.store(b, 2, "y")
    p.fence("n")
    return p.trace


def test_pmreorder_counts():
    p = pool_create(256)
    p.store(0, 1, "x")
    p.flush(0, "f")
    p.fence("n")
    assert crash.count_exhaustive_pmreorder(p.trace)[-1][1] == 2
    p = pool_create(256)
    for i, a in enumerate((0, 64, 128)):
        p.store(a, i, "s")
        p.flush(a, "f")
    p.fence("n")
    assert crash.count_exhaustive_pmreorder(p.trace)[-1][1] == 8
    # PMReorder ignores cache lines: a same-line pair gives 4 where the line model gives 3
    p = pool_create(256)
    p.store(0, 1, "x")
    p.store(8, 2, "y")
    p.flush(0, "f")
    p.fence("n")
    assert crash.count_exhaustive_pmreorder(p.trace)[-1][1] == 4
    assert len(brute_legal_sets(p.trace, p.trace.events[-1].tid)) == 3


def test_cumulative_at():
    counts = [(3, 2), (5, 6), (9, 10)]
    assert crash.cumulative_at(counts, 2) == 0
    assert crash.cumulative_at(counts, 5) == 6
    assert crash.cumulative_at(counts, 100) == 10


def test_materialize_empty_persisted_set_is_zero_image():
    p = pool_create(128)
    p.store(0, 5, "x")
    p.fence("n")
    s = fence_state(p.trace)
    plan = crash.CrashPlan(s.fence_tid, None, 0, crash.unpersisted_set(s))
    assert crash.materialize(p.trace, plan).data == bytes(128)


def test_materialize_replays_in_program_order():
    p = pool_create(128)
    p.store(0, 5, "x")
    p.store(0, 6, "x2")
    p.fence("n")
    plan = crash.CrashPlan(2, None, 0, frozenset())
    assert crash.materialize(p.trace, plan).data[:8] == (6).to_bytes(8, "little")


def _insert_then_query(correct):
    p = pool_create(256)
    p.op_begin("insert")
    p.store(64, 7, "w.key")
    if correct:
        p.persist(64, "w.kv")
        p.store(0, 1, "w.token")
    else:
        p.store(0, 1, "w.token")
        p.persist(64, "w.kv")
    p.persist(0, "w.tok")
    p.op_end("ok")
    p.op_begin("query")
    t = p.load_int(0, "r.tok")
    with p.guard(t):
        p.load_int(64, "r.key")
    p.op_end("v")
    return p.trace


def test_token_before_barrier_gives_violating_plan():
    trace = _insert_then_query(correct=False)
    invs = infer(build_ppdg(trace), trace)
    plans = crash.enumerate_violating_plans(trace, invs)
    assert plans
    token = next(e.tid for e in trace.events if e.sid == "w.token")
    assert any(p.extra_store == token for p in plans)
    assert all("RO3:P(w.key)<W(w.token)" in {v.ident for v in p.violated} for p in plans)


def test_correct_order_gives_no_plan():
    trace = _insert_then_query(correct=True)
    invs = infer(build_ppdg(trace), trace)
    assert invs
    assert crash.enumerate_violating_plans(trace, invs) == []


def test_atomicity_base_plan_with_half_persisted_pair():
    p = pool_create(256)
    p.op_begin("update")
    p.store(0, 0, "w.old")
    p.persist(0, "p.old")
    p.store(64, 1, "w.new")
    p.persist(64, "p.new")
    p.op_end("ok")
    inv = AtomicityInvariant(rule="RA1", guardian_sids=frozenset({"w.old", "w.new"}))
    plans = crash.enumerate_violating_plans(p.trace, [inv])
    # old persisted, new not: reachable at the first barrier (extra=old) and as
    # the base plan of the second; both give the same image, so one plan remains
    assert len(plans) == 1
    assert plans[0].persisted(p.trace) == {1}
    assert plans[0].violated == [inv]
    assert crash.enumerate_violating_plans(p.trace, [inv], crash.simulate(p.trace)[1:])[0].extra_store is None


def test_plan_dedup_and_meta_line():
    trace = _insert_then_query(correct=False)
    plans = crash.enumerate_violating_plans(trace, infer(build_ppdg(trace), trace))
    keys = [(pl.op_index, pl.persisted(trace)) for pl in plans]
    assert len(keys) == len(set(keys))
    assert plans[0].meta_line().startswith(f"PLAN fence={plans[0].fence_tid} extra=")


@settings(max_examples=150, deadline=None)
@given(actions)
def test_every_plan_state_is_legal(acts):
    trace = build(acts)
    for s in crash.simulate(trace):
        legal = brute_legal_sets(trace, s.fence_tid)
        before = nvm_stores_before(trace, s.fence_tid)
        for extra in [None] + sorted(s.pending_set):
            persisted = before - crash.unpersisted_set(s, extra)
            assert frozenset(persisted) in legal


@settings(max_examples=100, deadline=None)
@given(actions)
def test_exhaustive_states_equal_brute_force(acts):
    trace = build(acts)
    ev = trace.by_tid()
    total = 0
    grouped = {}
    for bound, _, left in crash.legal_states(trace):
        grouped.setdefault(bound, set()).add(frozenset(nvm_stores_before(trace, bound) - left))
    for bound, sets in grouped.items():
        crash_tid = bound - 1 if ev[bound - 1].kind is Kind.FENCE else bound
        assert sets == brute_legal_sets(trace, crash_tid)
        total += len(sets)
    yat = crash.count_exhaustive_yat(trace)
    assert (yat[-1][1] if yat else 0) == total


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 2), min_size=2, max_size=6), st.integers(0, 3))
def test_later_same_line_store_never_persists_alone(lines, fences):
    p = pool_create(3 * LINE)
    p.store(0, 1, "X")
    for n, ln in enumerate(lines):
        p.store(ln * LINE + 8 + 8 * (n % 6), 2, "o")
        if n < fences:
            p.flush(ln * LINE, "f")
            p.fence("n")
    p.store(16 * 3, 3, "Y")
    p.fence("n.end")
    x, y = 0, p.trace.events[-2].tid
    for bound, _, left in crash.legal_states(p.trace):
        if y < bound:
            assert not (y not in left and x in left)


@settings(max_examples=60, deadline=None)
@given(actions)
def test_materialize_all_equals_materialize(acts):
    trace = build(acts)
    plans = [crash.CrashPlan(s.fence_tid, x, 0, crash.unpersisted_set(s, x))
             for s in crash.simulate(trace) for x in [None] + sorted(s.pending_set)]
    assert [i.data for i in crash.materialize_all(trace, plans)] == \
        [crash.materialize(trace, p).data for p in plans]


@settings(max_examples=60, deadline=None)
@given(actions)
def test_counters_are_monotone(acts):
    trace = build(acts)
    for counts in (crash.count_exhaustive_yat(trace), crash.count_exhaustive_pmreorder(trace)):
        values = [c for _, c in counts]
        assert values == sorted(values)


def test_guided_sets_are_subset_of_exhaustive_on_subject():
    subj = get_subject("mini-level-hash-buggy")
    ops = TestCase(tuple(Operation(*o) for o in [
        ("insert", 1, 5), ("query", 1), ("update", 1, 6), ("query", 1), ("insert", 2, 4), ("query", 2)]))
    trace, _ = trace_subject(subj, ops)
    plans = crash.enumerate_violating_plans(trace, infer(build_ppdg(trace), trace))
    assert plans
    exhaustive = {(b, left) for b, _, left in crash.legal_states(trace)}
    for pl in plans:
        # the fence crash point is reported with the exclusive bound fence+1
        assert (pl.fence_tid + 1, pl.unpersisted) in exhaustive


def test_write_images(tmp_path):
    trace = _insert_then_query(correct=False)
    plans = crash.enumerate_violating_plans(trace, infer(build_ppdg(trace), trace))
    imgs = crash.materialize_all(trace, plans)
    crash.write_images(imgs, tmp_path)
    assert (tmp_path / "00000.img").read_bytes() == imgs[0].data
    assert (tmp_path / "00000.meta").read_text().startswith("PLAN ")
