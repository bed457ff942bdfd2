"""Line-oriented text format for traces.

One event per line::

    S <tid> <sid> <addr> <len> <hex> NVM|DRAM d=[..] c=[..]
    L <tid> <sid> <addr> <len> NVM|DRAM c=[..]
    F <tid> <sid> <line-addr>
    N <tid> <sid>
    BB <tid> c=[..]
    BE <tid>
    OB <tid> <label>
    OE <tid> <output>

A leading ``# pool_size=<n> cache_line=<n>`` header carries the pool geometry.
"""
from __future__ import annotations

import re
from pathlib import Path
from typing import Iterable, TextIO, Union

from .runtime import Kind, Space, Trace, TraceError, TraceEvent

_HEADER = re.compile(r"#\s*pool_size=(\d+)\s+cache_line=(\d+)")


def _fmt_set(tids: Iterable[int]) -> str:
    return "[" + ",".join(str(t) for t in sorted(tids)) + "]"


def _parse_set(token: str, prefix: str) -> frozenset:
    if not token.startswith(prefix + "=[") or not token.endswith("]"):
        raise TraceError(f"expected {prefix}=[...], got {token!r}")
    body = token[len(prefix) + 2:-1]
    return frozenset(int(t) for t in body.split(",")) if body else frozenset()


def format_event(e: TraceEvent) -> str:
    k = e.kind
    if k is Kind.STORE:
        return (f"S {e.tid} {e.sid} {e.addr} {e.length} {e.data.hex()} {e.space.value} "
                f"d={_fmt_set(e.data_deps)} c={_fmt_set(e.ctrl_deps)}")
    if k is Kind.LOAD:
        return f"L {e.tid} {e.sid} {e.addr} {e.length} {e.space.value} c={_fmt_set(e.ctrl_deps)}"
    if k is Kind.FLUSH:
        return f"F {e.tid} {e.sid} {e.addr}"
    if k is Kind.FENCE:
        return f"N {e.tid} {e.sid}"
    if k is Kind.BRANCH_BEGIN:
        return f"BB {e.tid} c={_fmt_set(e.ctrl_deps)}"
    if k is Kind.BRANCH_END:
        return f"BE {e.tid}"
    if k is Kind.OP_BEGIN:
        return f"OB {e.tid} {e.label}"
    return f"OE {e.tid} {e.label}"


def dumps(trace: Trace) -> str:
    lines = [f"# pool_size={trace.pool_size} cache_line={trace.cache_line}"]
    lines.extend(format_event(e) for e in trace.events)
    return "\n".join(lines) + "\n"


def parse_event(line: str) -> TraceEvent:
    head, _, rest = line.partition(" ")
    if head in ("OB", "OE"):
        tid, _, label = rest.partition(" ")
        kind = Kind.OP_BEGIN if head == "OB" else Kind.OP_END
        return TraceEvent(tid=int(tid), kind=kind, label=label)
    parts = rest.split()
    try:
        if head == "S":
            tid, sid, addr, length, data, space, d, c = parts
            return TraceEvent(tid=int(tid), kind=Kind.STORE, sid=sid, addr=int(addr),
                              length=int(length), data=bytes.fromhex(data), space=Space(space),
                              data_deps=_parse_set(d, "d"), ctrl_deps=_parse_set(c, "c"))
        if head == "L":
            tid, sid, addr, length, space, c = parts
            return TraceEvent(tid=int(tid), kind=Kind.LOAD, sid=sid, addr=int(addr),
                              length=int(length), space=Space(space), ctrl_deps=_parse_set(c, "c"))
        if head == "F":
            tid, sid, addr = parts
            return TraceEvent(tid=int(tid), kind=Kind.FLUSH, sid=sid, addr=int(addr))
        if head == "N":
            tid, sid = parts
            return TraceEvent(tid=int(tid), kind=Kind.FENCE, sid=sid)
        if head == "BB":
            tid, c = parts
            return TraceEvent(tid=int(tid), kind=Kind.BRANCH_BEGIN, ctrl_deps=_parse_set(c, "c"))
        if head == "BE":
            (tid,) = parts
            return TraceEvent(tid=int(tid), kind=Kind.BRANCH_END)
    except ValueError as exc:
        raise TraceError(f"malformed trace line {line!r}: {exc}") from None
    raise TraceError(f"unknown event kind in line {line!r}")


def loads(text: str) -> Trace:
    trace = Trace()
    for line in text.splitlines():
        if not line.strip():
            continue
        m = _HEADER.match(line)
        if m:
            trace.pool_size, trace.cache_line = int(m.group(1)), int(m.group(2))
            continue
        if line.startswith("#"):
            continue
        trace.events.append(parse_event(line))
    return trace


def write(trace: Trace, path: Union[str, Path]) -> None:
    Path(path).write_text(dumps(trace))


def read(path_or_file: Union[str, Path, TextIO]) -> Trace:
    if hasattr(path_or_file, "read"):
        return loads(path_or_file.read())
    return loads(Path(path_or_file).read_text())
