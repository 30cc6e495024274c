"""How well does a metric single out known-vulnerable routines?

Every routine of an application is ranked by a metric; a vulnerable
routine near the top earns a PR score close to 1. Scores are then
averaged over a corpus and their spread reported as a coefficient of
variation.
"""

from __future__ import annotations

import os
import statistics
from dataclasses import dataclass, field
from typing import Optional

from .exceptions import EvaluationError, InputError
from .metrics import METRIC_NAMES, check_metric, compute_all, format_value

TF_NOTE = "TF counts every routine with at least one instruction"


def frang(values, vulnerable):
    """Competition rank (1 = highest value) of ``vulnerable`` among ``values``."""
    if vulnerable not in values:
        raise KeyError(f"routine {vulnerable!r} has no metric value")
    mine = values[vulnerable]
    return 1 + sum(1 for v in values.values() if v > mine)


def pr_score(values, vulnerable):
    if not values:
        raise ValueError("no routines to rank")
    return 1 - frang(values, vulnerable) / len(values)


@dataclass(frozen=True)
class MetricSummary:
    metric: str
    prs: tuple
    mean_percent: float
    cv_percent: Optional[float]


@dataclass(frozen=True)
class EvaluationReport:
    summaries: dict = field(default_factory=dict)
    long_rows: tuple = ()  # (module, routine, metric, pr)

    def __getitem__(self, metric):
        return self.summaries[check_metric(metric)]

    def mean(self, metric):
        return self[metric].mean_percent


def summarize(metric, prs):
    prs = tuple(prs)
    if not prs:
        raise ValueError(f"no PR values for {metric}")
    mean = statistics.fmean(prs)
    if mean == 0 or len(prs) < 2:
        cv = None
    else:
        cv = statistics.stdev(prs) / mean * 100
    return MetricSummary(metric, prs, mean * 100, cv)


def aggregate(pr_values, long_rows=()):
    """Build a report from ``{metric: [pr, ...]}``."""
    return EvaluationReport({m: summarize(m, prs) for m, prs in pr_values.items()}, tuple(long_rows))


def load_ground_truth(path):
    """``<module> <routine>`` per line -> ``{module: [routine, ...]}``."""
    truth = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise InputError(exc.strerror or str(exc), source=str(path)) from None
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise InputError("expected '<module> <routine>'", source=str(path), line=lineno)
        names = truth.setdefault(parts[0], [])
        if parts[1] not in names:
            names.append(parts[1])
    return truth


def load_corpus_manifest(path):
    """One listing path per line, relative to the manifest's directory."""
    base = os.path.dirname(os.path.abspath(path))
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise InputError(exc.strerror or str(exc), source=str(path)) from None
    return [os.path.join(base, ln.split("#", 1)[0].strip())
            for ln in lines if ln.split("#", 1)[0].strip()]


def evaluate(listings, ground_truth, table=None, metrics=METRIC_NAMES, vectors=None):
    """PR of every vulnerable routine under every metric, aggregated over the corpus.

    ``vectors`` may carry precomputed ``{module: {routine: MetricVector}}``.
    """
    metrics = [check_metric(m) for m in metrics]
    by_module = {}
    for listing in listings:
        if listing.module_name in by_module:
            raise EvaluationError(f"module {listing.module_name!r} appears twice in the corpus")
        by_module[listing.module_name] = listing
    missing = sorted(set(ground_truth) - set(by_module))
    if missing:
        raise EvaluationError(f"ground truth names module {missing[0]!r} which is not in the corpus")

    prs = {m: [] for m in metrics}
    rows = []
    for module in sorted(ground_truth):
        listing = by_module[module]
        vecs = vectors[module] if vectors is not None else compute_all(listing, table)
        for routine in ground_truth[module]:
            if routine not in vecs:
                raise EvaluationError(f"vulnerable routine {routine!r} not found in module {module!r}")
        for m in metrics:
            values = {name: vec[m] for name, vec in vecs.items()}
            for routine in ground_truth[module]:
                pr = pr_score(values, routine)
                prs[m].append(pr)
                rows.append((module, routine, m, pr))
    if not rows:
        raise EvaluationError("no vulnerable routines to evaluate")
    return aggregate(prs, rows)


def report_rows(report):
    for m, s in report.summaries.items():
        yield [m, format_value(s.mean_percent), "" if s.cv_percent is None else format_value(s.cv_percent)]


def long_rows(report):
    for module, routine, metric, pr in report.long_rows:
        yield [module, routine, metric, format_value(pr)]
