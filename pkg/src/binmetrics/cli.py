"""binmetrics command line.

Data goes to stdout, diagnostics to stderr. Exit codes: 0 success,
1 usage error, 2 input or parse error, 3 invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

from . import __version__
from .banned import BannedFunctionTable
from .cfg import build_cfg, to_dot
from .evaluator import TF_NOTE, evaluate, load_corpus_manifest, load_ground_truth, long_rows, report_rows
from .exceptions import BinmetricsError, InputError, InvariantError, UnknownMetricError
from .listing import listing_digest, load_listing
from .metrics import check_metric, compute_all, format_value, metrics_rows
from .prioritizer import (
    COVERAGE_SCALED, DEFAULT_METRIC, MODES, CampaignState, format_weight, load_manifest, load_state,
    order_queue, persist, queue_rows, upsert, weigh,
)
from .trace import BlockIndex, map_coverage, parse_trace
from .validation import check_metric_names

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_INVARIANT = 0, 1, 2, 3

log = logging.getLogger("binmetrics")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _writer(out, fmt):
    return csv.writer(out, delimiter="\t" if fmt == "tsv" else ",", lineterminator="\n")


def _table(args):
    if args.banned_table:
        return BannedFunctionTable.load(args.banned_table)
    return BannedFunctionTable.default()


# ---------------------------------------------------------------------------
# commands

def cmd_analyze(args, out):
    listing = load_listing(args.listing)
    names = check_metric_names(args.metrics)
    vectors = compute_all(listing, _table(args))
    if args.json:
        doc = {
            "module": listing.module_name,
            "routines": [
                {"routine": name, "entry": f"{listing.routine(name).entry:#x}",
                 "metrics": {m: float(format_value(vec[m])) for m in names}}
                for name, vec in vectors.items()
            ],
        }
        out.write(json.dumps(doc, indent=1) + "\n")
        return EXIT_OK
    w = _writer(out, args.format)
    w.writerow(["module", "routine", "entry"] + names)
    w.writerows(metrics_rows(listing, vectors, names))
    return EXIT_OK


def cmd_cfg(args, out):
    listing = load_listing(args.listing)
    cfg = build_cfg(listing.routine(args.routine))
    if args.dot:
        out.write(to_dot(cfg))
        return EXIT_OK
    w = _writer(out, args.format)
    w.writerow(["head", "end", "instr_count", "edge1", "edge2"])
    for b in cfg.nodes:
        w.writerow([f"{b.head:#x}", f"{b.end:#x}", b.instr_count,
                    "" if b.edge1 is None else f"{b.edge1:#x}",
                    "" if b.edge2 is None else f"{b.edge2:#x}"])
    return EXIT_OK


def _metric(args, state=None):
    return args.metric or (state.metric_used if state else DEFAULT_METRIC)


def _mode(args, state=None):
    return args.mode or (state.mode if state else COVERAGE_SCALED)


def cmd_score(args, out):
    names = check_metric_names([_metric(args)])
    listing = load_listing(args.listing)
    vectors = compute_all(listing, _table(args))
    index = BlockIndex(listing)
    rows = []
    for path in args.traces:
        cov = map_coverage(parse_trace(path), listing, index)
        rows.append([cov.test_case_id, format_weight(weigh(cov, vectors, names[0], _mode(args)))])
    w = _writer(out, args.format)
    w.writerow(["id", "weight"])
    w.writerows(rows)
    return EXIT_OK


def cmd_prioritize(args, out):
    listing = load_listing(args.listing)
    digest = listing_digest(listing)
    if os.path.exists(args.state):
        state = load_state(args.state, digest)
        metric = check_metric(args.metric) if args.metric is not None else None
        for flag, given, stored in (("--metric", metric, state.metric_used), ("--mode", args.mode, state.mode)):
            if given is not None and given != stored:
                raise UsageError(f"{flag} {given} differs from the campaign's {stored}; start a new state file")
        if args.seed is not None and args.seed != state.rng_seed:
            raise UsageError(f"--seed {args.seed} differs from the campaign's {state.rng_seed}")
    else:
        metric = check_metric_names([_metric(args)])[0]
        state = CampaignState(metric, (), args.seed or 0, digest, _mode(args))
    entries = load_manifest(args.manifest)
    vectors = compute_all(listing, _table(args)) if any(e.trace_path for e in entries) else {}
    index = BlockIndex(listing) if vectors else None
    for e in entries:
        if e.trace_path is None:
            state = upsert(state, e.id, e.data_path)
            continue
        trace = parse_trace(e.trace_path)
        if trace.test_case_id != e.id:
            raise InputError(f"trace id {trace.test_case_id!r} does not match manifest id {e.id!r}",
                             source=e.trace_path)
        cov = map_coverage(trace, listing, index)
        if cov.unmatched:
            log.info("%s: %d trace address(es) outside every block", e.id, cov.unmatched)
        state = upsert(state, e.id, e.data_path, weigh(cov, vectors, state.metric_used, state.mode),
                       reweigh=True)
    persist(state, args.state)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            _write_queue_csv(state, fh, args.format)
    out.write("".join(tid + "\n" for tid in order_queue(state)))
    return EXIT_OK


def _write_queue_csv(state, fh, fmt):
    w = _writer(fh, fmt)
    w.writerow(["id", "weight", "rank"])
    w.writerows(queue_rows(state))


def cmd_report(args, out):
    _write_queue_csv(load_state(args.state), out, args.format)
    return EXIT_OK


def cmd_evaluate(args, out):
    names = check_metric_names(args.metrics)
    listings = [load_listing(p) for p in load_corpus_manifest(args.corpus)]
    truth = load_ground_truth(args.ground_truth)
    report = evaluate(listings, truth, _table(args), names)
    out.write(f"# {TF_NOTE}\n")
    w = _writer(out, args.format)
    w.writerow(["metric", "mean_pr_percent", "cv_percent"])
    w.writerows(report_rows(report))
    if args.long:
        with open(args.long, "w", encoding="utf-8", newline="") as fh:
            lw = _writer(fh, args.format)
            lw.writerow(["module", "routine", "metric", "pr"])
            lw.writerows(long_rows(report))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--banned-table", metavar="PATH", help="banned-function table file")
    common.add_argument("--metric", default=None, help=f"weighting metric (default {DEFAULT_METRIC})")
    common.add_argument("--mode", choices=MODES, default=None, help=f"weighting mode (default {COVERAGE_SCALED})")
    common.add_argument("--seed", type=int, default=None, help="seed for shuffling new test cases (default 0)")
    common.add_argument("--format", choices=("csv", "tsv"), default="csv")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = _Parser(prog="binmetrics", description="Complexity metrics for disassembled binaries "
                     "and complexity-driven fuzzing queues.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", parents=[common], help="metric table for every routine")
    p.add_argument("listing")
    p.add_argument("--metrics", help="comma-separated subset of metric columns")
    p.add_argument("--json", action="store_true", help="emit JSON instead of a table")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("cfg", parents=[common], help="basic blocks of one routine")
    p.add_argument("listing")
    p.add_argument("routine")
    p.add_argument("--dot", action="store_true", help="emit Graphviz DOT")
    p.set_defaults(func=cmd_cfg)

    p = sub.add_parser("score", parents=[common], help="weight of each trace")
    p.add_argument("listing")
    p.add_argument("traces", nargs="+")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("prioritize", parents=[common], help="update a campaign and print its queue")
    p.add_argument("state", help="campaign state file (created if missing)")
    p.add_argument("manifest", help="lines of '<id> <data-path> [<trace-path>]'")
    p.add_argument("--listing", required=True)
    p.add_argument("--csv", metavar="PATH", help="also write id,weight,rank here")
    p.set_defaults(func=cmd_prioritize)

    p = sub.add_parser("report", parents=[common], help="id,weight,rank of a saved campaign")
    p.add_argument("state")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("evaluate", parents=[common], help="mean PR and CV of each metric over a corpus")
    p.add_argument("corpus", help="file listing one listing path per line")
    p.add_argument("ground_truth", help="lines of '<module> <routine>'")
    p.add_argument("--metrics", help="comma-separated subset of metrics")
    p.add_argument("--long", metavar="PATH", help="also write every PR value here")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None, out=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="binmetrics: %(levelname)s: %(message)s", stream=sys.stderr)
    out = out or sys.stdout
    try:
        code = args.func(args, out)
        out.flush()
        return code
    except (UsageError, UnknownMetricError, ValueError) as exc:
        if isinstance(exc, (InputError, InvariantError)):
            return _fail(exc)
        print(f"binmetrics: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (BinmetricsError, KeyError) as exc:
        return _fail(exc)


def _fail(exc):
    msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
    print(f"binmetrics: error: {msg}", file=sys.stderr)
    if isinstance(exc, InvariantError):
        return EXIT_INVARIANT
    return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
