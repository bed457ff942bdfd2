"""Command line entry point.

Exit codes: 0 no bugs, 1 bugs found, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from . import crash, invariants, trace_io
from .equivalence import Verdict, build_oracles, check_all, run_subject
from .generate import GenConfig, generate
from .pipeline import PipelineConfig, analyze, cache_line_from_env, run_pipeline, write_artifacts
from .runtime import ConfigError, TraceError
from .subjects import get_subject, subject_names

EXIT_OK, EXIT_BUGS, EXIT_USAGE = 0, 1, 2


def _common(p: argparse.ArgumentParser, subject_required: bool = True) -> None:
    p.add_argument("--subject", required=subject_required, choices=subject_names())
    p.add_argument("--ops", type=int, default=200, help="number of operations (default 200)")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--key-space", type=int, default=24)
    p.add_argument("--reuse-bias", type=float, default=0.7)
    p.add_argument("--jobs", type=int, default=1, help="parallel image checks")
    p.add_argument("--out", type=Path, default=None, help="artifact directory")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crashwitness",
                                     description="Invariant-guided crash consistency testing for persistent memory programs.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="full pipeline with clustered bug report")
    _common(run)
    run.add_argument("--baselines", action="store_true", help="also count exhaustive test spaces")
    _common(sub.add_parser("trace", help="write the execution trace"))
    inv = sub.add_parser("invariants", help="dump inferred likely invariants")
    _common(inv, subject_required=False)
    inv.add_argument("--trace", type=Path, default=None, help="read this trace file instead of running the subject")
    _common(sub.add_parser("images", help="write invariant-violating crash images"))
    _common(sub.add_parser("check", help="print one verdict line per crash image"))
    return parser


def _setup(args):
    cache_line = cache_line_from_env()
    subject = get_subject(args.subject)
    testcase = generate(GenConfig(num_ops=args.ops, seed=args.seed, key_space=args.key_space,
                                  reuse_bias=args.reuse_bias))
    return subject, testcase, cache_line


def _emit(text: str, out: Optional[Path], name: str) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text)


def _traced(subject, testcase, cache_line):
    _, pool = run_subject(subject, testcase.ops, cache_line=cache_line, record=True)
    return pool.trace


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "invariants" and args.trace is not None:
            _, invs, _ = analyze(trace_io.read(args.trace))
            _emit(invariants.dumps(invs), args.out, "invariants.txt")
            return EXIT_OK
        if args.subject is None:
            print("crashwitness: error: --subject is required unless --trace is given", file=sys.stderr)
            return EXIT_USAGE
        subject, testcase, cl = _setup(args)
        if args.command == "run":
            result = run_pipeline(subject, testcase, PipelineConfig(jobs=args.jobs, baselines=args.baselines,
                                                                   cache_line=cl))
            if args.out is not None:
                write_artifacts(result, args.out)
            sys.stdout.write(result.report_text())
            return EXIT_BUGS if result.clusters else EXIT_OK
        if args.command == "trace":
            _emit(trace_io.dumps(_traced(subject, testcase, cl)), args.out, "trace.txt")
            return EXIT_OK
        if args.command == "invariants":
            _, invs, _ = analyze(_traced(subject, testcase, cl))
            _emit(invariants.dumps(invs), args.out, "invariants.txt")
            return EXIT_OK
        trace = _traced(subject, testcase, cl)
        _, invs, _ = analyze(trace)
        plans = crash.enumerate_violating_plans(trace, invs)
        images = crash.materialize_all(trace, plans)
        if args.command == "images":
            out = args.out or Path("images")
            crash.write_images(images, out / "images" if args.out else out)
            sys.stdout.write("".join(img.plan.meta_line() + "\n" for img in images))
            return EXIT_OK
        # check
        full, _ = run_subject(subject, testcase.ops, cache_line=cl)
        oracles = {i: build_oracles(subject, testcase, i, full, cl)
                   for i in sorted({img.crashed_op_index for img in images})}
        results = check_all(subject, testcase, images, oracles, args.jobs, cl)
        _emit("".join(r.log_line() + "\n" for r in results), args.out, "checks.txt")
        return EXIT_BUGS if any(r.verdict is Verdict.DIVERGE for r in results) else EXIT_OK
    except (ConfigError, TraceError, ValueError, KeyError, OSError) as exc:
        print(f"crashwitness: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
