"""Output equivalence checking against commit/rollback oracles.

After a crash inside operation ``i`` a crash-consistent program must behave
as if ``i`` either completed (committed) or never ran (rolled back).  Both
behaviours are produced by crash-free runs; a post-crash run that matches
neither is a bug.
"""
from __future__ import annotations

import enum
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from .crash import CrashPlan, NvmImage
from .runtime import ConfigError, Kind, PersistentPool, SubjectFault, Trace, TraceError
from .subjects import Operation, Subject, get_subject

FAULT = "FAULT"
# bound on pool calls per execution; corrupted images can send subjects into long loops
MAX_STEPS = 2_000_000


@dataclass(frozen=True)
class TestCase:
    ops: Tuple[Operation, ...] = ()

    __test__ = False  # not a pytest class

    def __len__(self) -> int:
        return len(self.ops)

    def without(self, index: int) -> "TestCase":
        return TestCase(self.ops[:index] + self.ops[index + 1:])

    def dumps(self) -> str:
        return "".join(f"{op.kind} {op.key} {op.value}\n" for op in self.ops)

    @classmethod
    def loads(cls, text: str) -> "TestCase":
        ops = []
        for line in text.splitlines():
            if line.strip():
                kind, key, value = line.split()
                ops.append(Operation(kind, int(key), int(value)))
        return cls(tuple(ops))


@dataclass(frozen=True)
class OracleSet:
    crashed_op_index: int
    committed: Tuple[str, ...]
    rolledback: Tuple[str, ...]


class Verdict(enum.Enum):
    MATCH_C = "MATCH_C"
    MATCH_R = "MATCH_R"
    DIVERGE = "DIVERGE"


@dataclass
class ValidationResult:
    plan: CrashPlan
    observed: Tuple[str, ...]
    verdict: Verdict

    def log_line(self) -> str:
        return f"CHECK {self.plan.label} verdict={self.verdict.value} out=[{','.join(self.observed)}]"


@dataclass
class BugReport:
    testcase: TestCase
    plan: CrashPlan
    observed: Tuple[str, ...]
    oracles: OracleSet
    crashed_op: str
    path: Tuple[str, ...]
    persisted_sids: Tuple[str, ...] = ()
    unpersisted_sids: Tuple[str, ...] = ()
    reverified: bool = False

    @property
    def violated(self) -> list:
        return self.plan.violated

    def first_divergence(self) -> Optional[int]:
        """Index of the first suffix op whose output matches neither oracle."""
        c, r, o = self.oracles.committed, self.oracles.rolledback, self.observed
        for i in range(max(len(c), len(r), len(o))):
            got = o[i] if i < len(o) else None
            if got != (c[i] if i < len(c) else None) and got != (r[i] if i < len(r) else None):
                return i
        return None


class _Budget(PersistentPool):
    """Pool that traps after ``MAX_STEPS`` calls."""

    steps = 0

    def _emit(self, **kw) -> int:
        if kw["kind"] in (Kind.OP_BEGIN, Kind.OP_END):
            return super()._emit(**kw)
        self.steps += 1
        if self.steps > MAX_STEPS:
            raise SubjectFault("step budget exhausted")
        return super()._emit(**kw)


def new_pool(subject: Subject, cache_line: int, image: Optional[bytes] = None,
             record: bool = False) -> PersistentPool:
    return _Budget(subject.pool_size(cache_line), cache_line, record=record, image=image)


def run_subject(subject: Subject, ops: Sequence[Operation], image: Optional[bytes] = None,
                recovery: bool = False, cache_line: int = 64, record: bool = False,
                pool: Optional[PersistentPool] = None) -> Tuple[List[str], PersistentPool]:
    """Execute ``ops`` and collect one output per operation.

    A fresh pool is initialised by the subject unless ``image`` is given, in
    which case the image is loaded as-is and ``recover`` runs first when
    ``recovery`` is set.  A subject fault ends the run with a ``FAULT``
    output for the faulting operation.
    """
    if pool is None:
        pool = new_pool(subject, cache_line, image=image, record=record)
    outputs: List[str] = []
    try:
        if image is None:
            subject.init(pool)
        elif recovery:
            subject.recover(pool)
    except (ConfigError, TraceError):
        raise
    except Exception:
        return [FAULT], pool
    for op in ops:
        pool.op_begin(op.kind)
        try:
            out = subject.apply(pool, op)
        except (ConfigError, TraceError):
            raise
        except Exception:
            out = FAULT
        pool.op_end(out)
        outputs.append(out)
        if out == FAULT:
            break
    return outputs, pool


def trace_subject(subject: Subject, testcase: TestCase, cache_line: int = 64) -> Tuple[Trace, List[str]]:
    outputs, pool = run_subject(subject, testcase.ops, cache_line=cache_line, record=True)
    return pool.trace, outputs


def build_oracles(subject: Subject, testcase: TestCase, crashed_op_index: int,
                  full_outputs: Optional[Sequence[str]] = None, cache_line: int = 64) -> OracleSet:
    n = len(testcase)
    if not 0 <= crashed_op_index < n:
        raise IndexError(f"crashed op {crashed_op_index} outside test case of {n} ops")
    if full_outputs is None:
        full_outputs, _ = run_subject(subject, testcase.ops, cache_line=cache_line)
    rolled, _ = run_subject(subject, testcase.without(crashed_op_index).ops, cache_line=cache_line)
    return OracleSet(crashed_op_index,
                     tuple(full_outputs[crashed_op_index + 1:]),
                     tuple(rolled[crashed_op_index:]))


def judge(observed: Sequence[str], oracles: OracleSet) -> Verdict:
    observed = tuple(observed)
    if observed == oracles.committed:
        return Verdict.MATCH_C
    if observed == oracles.rolledback:
        return Verdict.MATCH_R
    return Verdict.DIVERGE


def observe(subject: Subject, testcase: TestCase, image: NvmImage, cache_line: int = 64) -> Tuple[str, ...]:
    suffix = testcase.ops[image.crashed_op_index + 1:]
    outputs, _ = run_subject(subject, suffix, image=image.data, recovery=True, cache_line=cache_line)
    return tuple(outputs)


def check(subject: Subject, testcase: TestCase, image: NvmImage, oracles: OracleSet,
          cache_line: int = 64) -> ValidationResult:
    if image.crashed_op_index != oracles.crashed_op_index:
        raise ValueError("image and oracles refer to different crashed operations")
    observed = observe(subject, testcase, image, cache_line)
    return ValidationResult(image.plan, observed, judge(observed, oracles))


def _check_worker(args):
    name, testcase, image, oracles, cache_line = args
    return check(get_subject(name), testcase, image, oracles, cache_line)


def check_all(subject: Subject, testcase: TestCase, images: Sequence[NvmImage],
              oracles: dict, jobs: int = 1, cache_line: int = 64) -> List[ValidationResult]:
    """Check every image; ``oracles`` maps crashed op index to its OracleSet."""
    if jobs <= 1 or len(images) < 2:
        return [check(subject, testcase, img, oracles[img.crashed_op_index], cache_line)
                for img in images]
    work = [(subject.name, testcase, img, oracles[img.crashed_op_index], cache_line) for img in images]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_check_worker, work, chunksize=max(1, len(work) // (4 * jobs))))


def oracle_count(m: int) -> int:
    """Number of oracles for ``m`` concurrently running operations: sum of P(m, k)."""
    if m < 0:
        raise ValueError("thread count must be non-negative")
    return sum(math.perm(m, k) for k in range(m + 1))


def enumerate_oracles(m: int) -> List[Tuple[int, ...]]:
    """Every legal outcome: an ordered selection of the committed operations."""
    return [order for k in range(m + 1) for order in itertools.permutations(range(m), k)]
