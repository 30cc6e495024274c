"""Input checking shared by the estimator classes."""

import os

from .listing import ProgramListing, Routine, load_listing
from .metrics import METRIC_NAMES, check_metric
from .prioritizer import MODES
from .trace import Coverage, Trace, parse_trace


def check_listing(X):
    """Accept a ProgramListing or a path to a listing file."""
    if isinstance(X, ProgramListing):
        return X
    if isinstance(X, (str, os.PathLike)):
        return load_listing(X)
    raise TypeError(f"expected a ProgramListing or a listing path, got {type(X).__name__}")


def check_routines(X, listing=None):
    """Normalize ``X`` to a list of non-empty routines.

    ``X`` may be a ProgramListing, routines, or routine names looked up in
    ``listing``.
    """
    if isinstance(X, ProgramListing):
        return [r for r in X.routines if r.instructions]
    if isinstance(X, (Routine, str)):
        X = [X]
    out = []
    for item in X:
        if isinstance(item, Routine):
            out.append(item)
        elif isinstance(item, str):
            if listing is None:
                raise ValueError("routine names need a fitted listing to resolve against")
            out.append(listing.routine(item))
        else:
            raise TypeError(f"expected Routine or routine name, got {type(item).__name__}")
    for r in out:
        if not r.instructions:
            raise ValueError(f"routine {r.name!r} has no instructions")
    return out


def check_metric_names(metrics):
    if metrics is None:
        return list(METRIC_NAMES)
    if isinstance(metrics, str):
        metrics = [m for m in metrics.split(",") if m.strip()]
    names = [check_metric(m) for m in metrics]
    if not names:
        raise ValueError("empty metric selection")
    return names


def check_mode(mode):
    if mode not in MODES:
        raise ValueError(f"unknown weighting mode {mode!r}; choose from {', '.join(MODES)}")
    return mode


def check_traces(X):
    """Each item becomes a Trace, a Coverage, or None (no coverage yet)."""
    if isinstance(X, (Trace, Coverage, str, os.PathLike)) or X is None:
        X = [X]
    out = []
    for item in X:
        if isinstance(item, (str, os.PathLike)):
            item = parse_trace(item)
        elif item is not None and not isinstance(item, (Trace, Coverage)):
            raise TypeError(f"expected Trace, Coverage, path or None, got {type(item).__name__}")
        out.append(item)
    return out
