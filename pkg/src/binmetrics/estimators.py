"""scikit-learn style front ends for the metric, prioritization and evaluation pipelines."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .banned import BannedFunctionTable
from .cfg import build_cfg
from .evaluator import evaluate
from .listing import listing_digest
from .metrics import BOUND_IN_DEGREE, callers_map, check_metric, compute_all, routine_metrics
from .prioritizer import COVERAGE_SCALED, DEFAULT_METRIC, CampaignState, TestCaseRecord, order_queue, weigh
from .trace import BlockIndex, Trace, map_coverage
from .validation import check_listing, check_metric_names, check_mode, check_routines, check_traces


class ComplexityMetrics(TransformerMixin, BaseEstimator):
    """Turn routines into rows of complexity metrics.

    ``fit`` takes the whole listing, because fan-in needs to know every
    caller; ``transform`` then accepts that listing, some of its routines,
    or routine names and returns an ``(n_routines, n_metrics)`` array.

    Parameters
    ----------
    metrics : list of str or comma-separated str, optional
        Columns to emit; all 27 when None.
    banned_table : BannedFunctionTable, optional
        Coefficients for the experimental metric; defaults to the SDL list.
    bound_formula : {"in-degree", "literal"}
        How the boundary-values metric sums routine complexity.
    """

    def __init__(self, metrics=None, banned_table=None, bound_formula=BOUND_IN_DEGREE):
        self.metrics = metrics
        self.banned_table = banned_table
        self.bound_formula = bound_formula

    def fit(self, X, y=None):
        listing = check_listing(X)
        self.metric_names_ = check_metric_names(self.metrics)
        self.table_ = self.banned_table if self.banned_table is not None else BannedFunctionTable.default()
        self.listing_ = listing
        self.callers_ = callers_map(listing)
        return self

    def vectors(self, X):
        """``{routine name: MetricVector}`` for the routines in ``X``."""
        check_is_fitted(self, "listing_")
        return {
            r.name: routine_metrics(r, self.table_, self.callers_.get(r.name, ()),
                                    bound_formula=self.bound_formula)
            for r in check_routines(X, self.listing_)
        }

    def transform(self, X):
        vecs = self.vectors(X)
        if not vecs:
            return np.empty((0, len(self.metric_names_)))
        return np.array([v.values(self.metric_names_) for v in vecs.values()], dtype=float)

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "metric_names_")
        return np.asarray(self.metric_names_, dtype=object)


class TestCasePrioritizer(BaseEstimator):
    """Weigh test cases by the complexity of the code their traces executed.

    Fit on the listing of the program under test, then pass traces (or
    coverages, or None for test cases not run yet) to ``score_samples``,
    ``predict`` or ``order``.
    """

    __test__ = False

    def __init__(self, metric=DEFAULT_METRIC, mode=COVERAGE_SCALED, seed=0, banned_table=None):
        self.metric = metric
        self.mode = mode
        self.seed = seed
        self.banned_table = banned_table

    def fit(self, X, y=None):
        listing = check_listing(X)
        self.metric_ = check_metric(self.metric)
        check_mode(self.mode)
        table = self.banned_table if self.banned_table is not None else BannedFunctionTable.default()
        cfgs = {r.name: build_cfg(r) for r in listing.routines if r.instructions}
        self.listing_ = listing
        self.metrics_ = compute_all(listing, table)
        self.index_ = BlockIndex(listing, cfgs)
        self.digest_ = listing_digest(listing)
        return self

    def _coverages(self, X):
        check_is_fitted(self, "metrics_")
        out = []
        for item in check_traces(X):
            if isinstance(item, Trace):
                item = map_coverage(item, self.listing_, self.index_)
            out.append(item)
        return out

    def score_samples(self, X):
        """Weight per test case; NaN where no coverage is known."""
        return np.array([
            np.nan if cov is None else weigh(cov, self.metrics_, self.metric_, self.mode)
            for cov in self._coverages(X)
        ], dtype=float)

    def to_state(self, X, ids=None):
        covs = self._coverages(X)
        ids = self._ids(covs, ids)
        weights = [None if c is None else weigh(c, self.metrics_, self.metric_, self.mode) for c in covs]
        records = tuple(TestCaseRecord(i, w, None, self.metric_) for i, w in zip(ids, weights))
        return CampaignState(self.metric_, records, self.seed, self.digest_, self.mode)

    def order(self, X, ids=None):
        """Test case ids in the order they should be run."""
        return order_queue(self.to_state(X, ids))

    def predict(self, X, ids=None):
        """Queue position (1 = run first) of each test case."""
        state = self.to_state(X, ids)
        rank = {tid: i for i, tid in enumerate(order_queue(state), 1)}
        return np.array([rank[r.id] for r in state.records], dtype=int)

    @staticmethod
    def _ids(covs, ids):
        if ids is None:
            if any(c is None for c in covs):
                raise ValueError("ids are required when some test cases have no coverage")
            ids = [c.test_case_id for c in covs]
        ids = list(ids)
        if len(ids) != len(covs):
            raise ValueError(f"got {len(ids)} ids for {len(covs)} test cases")
        if len(set(ids)) != len(ids):
            raise ValueError("test case ids must be unique")
        return ids


class MetricEvaluator(BaseEstimator):
    """Score metrics by how highly they rank known-vulnerable routines.

    ``X`` is a list of listings (or paths); ``y`` gives, per listing, the
    vulnerable routine name or a list of names.
    """

    def __init__(self, metrics=None, banned_table=None, score_metric=DEFAULT_METRIC):
        self.metrics = metrics
        self.banned_table = banned_table
        self.score_metric = score_metric

    def _truth(self, listings, y):
        if len(listings) != len(y):
            raise ValueError(f"got {len(y)} ground-truth entries for {len(listings)} listings")
        truth = {}
        for listing, names in zip(listings, y):
            truth[listing.module_name] = [names] if isinstance(names, str) else list(names)
        return truth

    def fit(self, X, y):
        listings = [check_listing(x) for x in X]
        self.metric_names_ = check_metric_names(self.metrics)
        table = self.banned_table if self.banned_table is not None else BannedFunctionTable.default()
        self.report_ = evaluate(listings, self._truth(listings, y), table, self.metric_names_)
        return self

    def score(self, X, y):
        """Mean PR (0..1) of ``score_metric`` over the given corpus."""
        listings = [check_listing(x) for x in X]
        metric = check_metric(self.score_metric)
        table = self.banned_table if self.banned_table is not None else BannedFunctionTable.default()
        return evaluate(listings, self._truth(listings, y), table, [metric]).mean(metric) / 100
