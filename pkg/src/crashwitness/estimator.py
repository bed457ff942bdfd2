"""scikit-learn style front end.

``InvariantMiner`` fits likely invariants on one or more traces and
transforms traces into invariant-violating crash plans.
``CrashConsistencyDetector`` wraps the whole pipeline for one subject.
"""
from __future__ import annotations

from pathlib import Path
from typing import Iterable, List, Sequence, Union

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import crash, invariants, trace_io
from .dependence import build_ppdg
from .equivalence import TestCase
from .generate import GenConfig, generate
from .pipeline import PipelineConfig, run_pipeline
from .runtime import DEFAULT_CACHE_LINE, Trace
from .subjects import Operation, get_subject

ALL_RULES = invariants.ORDERING_RULES + invariants.ATOMICITY_RULES


def check_trace(X) -> Trace:
    """Accept a Trace, a trace file path, or trace text; validate it."""
    if isinstance(X, Trace):
        trace = X
    elif isinstance(X, Path) or (isinstance(X, str) and "\n" not in X):
        trace = trace_io.read(X)
    elif isinstance(X, str):
        trace = trace_io.loads(X)
    else:
        raise TypeError(f"expected a Trace, path or trace text, got {type(X).__name__}")
    trace.validate()
    return trace


def check_traces(X) -> List[Trace]:
    if isinstance(X, (Trace, str, Path)):
        return [check_trace(X)]
    traces = [check_trace(x) for x in X]
    if not traces:
        raise ValueError("need at least one trace")
    return traces


def check_testcase(X) -> TestCase:
    """Accept a TestCase or a sequence of Operation / (kind, key, value) tuples."""
    if isinstance(X, TestCase):
        return X
    ops = []
    for op in X:
        if not isinstance(op, Operation):
            op = Operation(*op)
        if not isinstance(op.kind, str) or not isinstance(op.key, int) or not isinstance(op.value, int):
            raise TypeError(f"malformed operation {op!r}")
        ops.append(op)
    return TestCase(tuple(ops))


class InvariantMiner(TransformerMixin, BaseEstimator):
    """Mine likely invariants from traces and turn traces into crash plans.

    Parameters
    ----------
    rules : tuple of str
        Meta-rules to keep, any of ``RO1``, ``RO2``, ``RO3``, ``RA1``.
    """

    def __init__(self, rules: Sequence[str] = ALL_RULES):
        self.rules = rules

    def fit(self, X, y=None):
        unknown = set(self.rules) - set(ALL_RULES)
        if unknown:
            raise ValueError(f"unknown rules: {sorted(unknown)}")
        merged: dict = {}
        for n, trace in enumerate(check_traces(X)):
            ppdg = build_ppdg(trace)
            ordering = invariants.infer_ordering(ppdg, trace)
            for inv in ordering + invariants.infer_atomicity(ppdg, ordering, trace):
                if inv.rule not in self.rules:
                    continue
                tagged = [(n, w) for w in inv.witnesses]
                if inv.key in merged:
                    merged[inv.key].witnesses.extend(tagged)
                else:
                    inv.witnesses = tagged
                    merged[inv.key] = inv
        self.invariants_ = sorted(merged.values(), key=lambda i: i.key)
        self.stats_ = invariants.invariant_stats(self.invariants_)
        return self

    def transform(self, X) -> List[List[crash.CrashPlan]]:
        check_is_fitted(self, "invariants_")
        return [crash.enumerate_violating_plans(t, self.invariants_) for t in check_traces(X)]


class CrashConsistencyDetector(BaseEstimator):
    """Run the detection pipeline on a registered subject.

    ``fit`` runs one test case (generated from ``n_ops``/``seed`` unless one
    is passed) and stores the result; ``predict`` answers, per test case,
    whether it exposes at least one crash consistency bug.
    """

    def __init__(self, subject: str = "mini-level-hash-buggy", n_ops: int = 200, seed: int = 1,
                 key_space: int = 24, reuse_bias: float = 0.7,
                 cache_line: int = DEFAULT_CACHE_LINE, n_jobs: int = 1, baselines: bool = False):
        self.subject = subject
        self.n_ops = n_ops
        self.seed = seed
        self.key_space = key_space
        self.reuse_bias = reuse_bias
        self.cache_line = cache_line
        self.n_jobs = n_jobs
        self.baselines = baselines

    def _config(self) -> PipelineConfig:
        return PipelineConfig(jobs=self.n_jobs, baselines=self.baselines, cache_line=self.cache_line)

    def _testcase(self, X) -> TestCase:
        if X is None:
            return generate(GenConfig(num_ops=self.n_ops, seed=self.seed, key_space=self.key_space,
                                      reuse_bias=self.reuse_bias))
        return check_testcase(X)

    def fit(self, X=None, y=None):
        self.result_ = run_pipeline(get_subject(self.subject), self._testcase(X), self._config())
        self.invariants_ = self.result_.invariants
        self.clusters_ = self.result_.clusters
        self.stats_ = self.result_.stats
        return self

    def predict(self, X: Iterable[Union[TestCase, Sequence]]) -> np.ndarray:
        check_is_fitted(self, "result_")
        subject = get_subject(self.subject)
        return np.array([bool(run_pipeline(subject, check_testcase(tc), self._config()).clusters)
                         for tc in X])

    def report(self, fmt: str = "text") -> str:
        check_is_fitted(self, "result_")
        return self.result_.report_text() if fmt == "text" else self.result_.report_json()
