"""Execution traces and their mapping onto basic blocks.

A trace file is a one-line header followed by one executed block
address per line::

    # id=t1 module=m1
    0x1000
    0x100e
"""

from __future__ import annotations

import bisect
import re
from dataclasses import dataclass
from typing import Optional

from .cfg import build_cfg
from .exceptions import CoverageError, TraceParseError

_HEADER = re.compile(r"^#\s*(.*)$")
_ADDR = re.compile(r"^0x[0-9a-fA-F]+$")


@dataclass(frozen=True)
class Trace:
    test_case_id: str
    module_name: str
    block_heads: tuple = ()


@dataclass(frozen=True)
class Coverage:
    test_case_id: str
    covered: frozenset = frozenset()
    unmatched: int = 0

    def blocks_in(self, routine_name):
        return sum(1 for r, _ in self.covered if r == routine_name)

    @property
    def routines(self):
        return {r for r, _ in self.covered}


def loads_trace(text, source="<string>"):
    lines = text.splitlines()
    header = None
    start = 0
    for i, raw in enumerate(lines):
        if raw.strip():
            m = _HEADER.match(raw.strip())
            if not m:
                raise TraceParseError("missing '# id=<id> module=<module>' header", source=source, line=i + 1)
            fields = dict(part.split("=", 1) for part in m.group(1).split() if "=" in part)
            if not fields.get("id") or not fields.get("module"):
                raise TraceParseError("header needs both id= and module=", source=source, line=i + 1)
            header = fields
            start = i + 1
            break
    if header is None:
        raise TraceParseError("missing '# id=<id> module=<module>' header", source=source, line=1)
    heads = []
    for lineno, raw in enumerate(lines[start:], start + 1):
        line = raw.strip()
        if not line:
            continue
        if not _ADDR.match(line):
            raise TraceParseError(f"malformed address {line!r}", source=source, line=lineno)
        heads.append(int(line, 16))
    return Trace(header["id"], header["module"], tuple(heads))


def parse_trace(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise TraceParseError(exc.strerror or str(exc), source=str(path)) from None
    return loads_trace(text, str(path))


def dumps_trace(trace):
    body = "".join(f"{a:#x}\n" for a in trace.block_heads)
    return f"# id={trace.test_case_id} module={trace.module_name}\n" + body


class BlockIndex:
    """Address-range lookup from any address to its containing block."""

    def __init__(self, listing, cfgs=None):
        self.module_name = listing.module_name
        spans = []
        self.blocks_per_routine = {}
        for r in listing.routines:
            if not r.instructions:
                continue
            cfg = cfgs[r.name] if cfgs is not None else build_cfg(r)
            self.blocks_per_routine[r.name] = cfg.v
            for b in cfg.nodes:
                spans.append((b.head, b.end, r.name))
        spans.sort()
        self._starts = [s[0] for s in spans]
        self._spans = spans

    def lookup(self, address) -> Optional[tuple]:
        i = bisect.bisect_right(self._starts, address) - 1
        if i < 0:
            return None
        head, end, name = self._spans[i]
        return (name, head) if address <= end else None


def map_coverage(trace, listing, index=None):
    """Covered ``(routine, block head)`` pairs of one trace.

    Addresses inside a block count for that block; addresses outside
    every block are tallied once each in ``unmatched``.
    """
    if trace.module_name != listing.module_name:
        raise CoverageError(
            f"trace {trace.test_case_id!r} is for module {trace.module_name!r}, "
            f"listing is {listing.module_name!r}")
    if index is None:
        index = BlockIndex(listing)
    covered, missed = set(), set()
    for address in set(trace.block_heads):
        hit = index.lookup(address)
        if hit is None:
            missed.add(address)
        else:
            covered.add(hit)
    return Coverage(trace.test_case_id, frozenset(covered), len(missed))
