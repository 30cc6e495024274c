"""Test-case weighting, queue ordering and the on-disk campaign state."""

from __future__ import annotations

import json
import os
import random
import tempfile
from dataclasses import asdict, dataclass, replace
from typing import Optional

from .exceptions import CoverageError, DigestMismatchError, InputError, StateError
from .metrics import check_metric

COVERAGE_SCALED = "coverage-scaled"
ROUTINE_HIT = "routine-hit"
MODES = (COVERAGE_SCALED, ROUTINE_HIT)
DEFAULT_METRIC = "Exp"
STATE_FORMAT = 1


def weigh(coverage, metrics, metric=DEFAULT_METRIC, mode=COVERAGE_SCALED):
    """Complexity weight of the code one test case executed.

    ``routine-hit`` sums the metric over every routine the trace touched;
    ``coverage-scaled`` scales each routine's value by the fraction of
    its blocks the trace covered.
    """
    metric = check_metric(metric)
    if mode not in MODES:
        raise ValueError(f"unknown weighting mode {mode!r}; choose from {', '.join(MODES)}")
    per_routine = {}
    for routine, _ in coverage.covered:
        per_routine[routine] = per_routine.get(routine, 0) + 1
    total = 0.0
    for routine in sorted(per_routine):
        try:
            vec = metrics[routine]
        except KeyError:
            raise CoverageError(f"no metrics for covered routine {routine!r}") from None
        if mode == ROUTINE_HIT:
            total += vec[metric]
        else:
            total += vec[metric] * per_routine[routine] / vec["BBLs"]
    return total


@dataclass(frozen=True)
class TestCaseRecord:
    __test__ = False  # not a pytest class

    id: str
    weight: Optional[float] = None
    rank: Optional[int] = None
    metric_used: str = DEFAULT_METRIC
    data_path: str = ""


@dataclass(frozen=True)
class CampaignState:
    metric_used: str = DEFAULT_METRIC
    records: tuple = ()
    rng_seed: int = 0
    listing_digest: str = ""
    mode: str = COVERAGE_SCALED

    def record(self, test_case_id):
        for r in self.records:
            if r.id == test_case_id:
                return r
        raise KeyError(test_case_id)

    @property
    def ids(self):
        return [r.id for r in self.records]


def order_queue(state):
    """Queue order: unweighted test cases first in seeded random order,
    then weighted ones by descending weight, ties by ascending id."""
    fresh = sorted(r.id for r in state.records if r.weight is None)
    random.Random(state.rng_seed).shuffle(fresh)
    weighted = sorted((r for r in state.records if r.weight is not None), key=lambda r: (-r.weight, r.id))
    return fresh + [r.id for r in weighted]


def with_ranks(state):
    rank = {tid: i for i, tid in enumerate(order_queue(state), 1)}
    return replace(state, records=tuple(replace(r, rank=rank[r.id]) for r in state.records))


def upsert(state, test_case_id, data_path=None, weight=None, reweigh=False):
    """Add a test case, or update an existing one's data path and weight."""
    records = list(state.records)
    for i, r in enumerate(records):
        if r.id == test_case_id:
            changes = {}
            if data_path is not None:
                changes["data_path"] = data_path
            if reweigh:
                changes["weight"] = weight
                changes["metric_used"] = state.metric_used
            records[i] = replace(r, **changes)
            break
    else:
        records.append(TestCaseRecord(test_case_id, weight if reweigh else None, None,
                                      state.metric_used, data_path or ""))
    return replace(state, records=tuple(records))


# ---------------------------------------------------------------------------
# persistence

def state_to_dict(state):
    doc = asdict(state)
    doc["format"] = STATE_FORMAT
    return doc


def state_from_dict(doc):
    if doc.get("format") != STATE_FORMAT:
        raise ValueError(f"unsupported state format {doc.get('format')!r}")
    records = tuple(TestCaseRecord(**r) for r in doc["records"])
    ids = [r.id for r in records]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate test case ids")
    return CampaignState(doc["metric_used"], records, int(doc["rng_seed"]),
                         doc["listing_digest"], doc.get("mode", COVERAGE_SCALED))


def persist(state, path):
    """Write the state as JSON via write-to-temp plus atomic rename."""
    text = json.dumps(state_to_dict(state), indent=1, sort_keys=True) + "\n"
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".state-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_state(path, digest=None):
    """Read a campaign state; reject it if ``digest`` differs from the recorded one."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        state = state_from_dict(doc)
    except OSError as exc:
        raise StateError(exc.strerror or str(exc), source=str(path)) from None
    except (ValueError, KeyError, TypeError) as exc:
        raise StateError(f"corrupt campaign state: {exc}", source=str(path)) from None
    if digest is not None and state.listing_digest and state.listing_digest != digest:
        raise DigestMismatchError(
            f"{path}: weights were computed against a different listing "
            f"({state.listing_digest[:12]} != {digest[:12]})")
    return state


# ---------------------------------------------------------------------------
# manifest and queue output

@dataclass(frozen=True)
class ManifestEntry:
    id: str
    data_path: str
    trace_path: Optional[str] = None


def load_manifest(path):
    """Parse ``<id> <data-path> [<trace-path>]`` lines; relative paths resolve against the manifest."""
    base = os.path.dirname(os.path.abspath(path))
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise InputError(exc.strerror or str(exc), source=str(path)) from None
    entries, seen = [], set()
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise InputError("expected '<id> <data-path> [<trace-path>]'", source=str(path), line=lineno)
        if parts[0] in seen:
            raise InputError(f"duplicate test case id {parts[0]!r}", source=str(path), line=lineno)
        seen.add(parts[0])
        trace = os.path.join(base, parts[2]) if len(parts) == 3 else None
        entries.append(ManifestEntry(parts[0], parts[1], trace))
    return entries


def format_weight(weight):
    return "" if weight is None else f"{weight:.6f}"


def queue_rows(state):
    ranked = with_ranks(state)
    by_id = {r.id: r for r in ranked.records}
    for tid in order_queue(state):
        r = by_id[tid]
        yield [r.id, format_weight(r.weight), str(r.rank)]

