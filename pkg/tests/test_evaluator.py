import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from binmetrics.exceptions import EvaluationError, InputError
from binmetrics.evaluator import (
    aggregate, evaluate, frang, load_corpus_manifest, load_ground_truth, pr_score, report_rows, summarize,
)

from conftest import BIG, make_listing
from oracles import competition_rank, sample_std


def test_frang_ties_share_best_rank():
    values = {"a": 10, "v": 8, "b": 8, "c": 2}
    assert frang(values, "v") == 2
    assert frang(values, "b") == 2
    assert pr_score(values, "v") == 0.5


def test_pr_extremes():
    assert pr_score({"v": 5}, "v") == 0.0
    assert pr_score({"v": 5, "a": 1, "b": 1, "c": 1}, "v") == 0.75
    assert pr_score({"v": 0, "a": 1}, "v") == 0.0


def test_pr_missing_routine():
    with pytest.raises(KeyError):
        pr_score({"a": 1}, "v")
    with pytest.raises(ValueError):
        pr_score({}, "v")


def test_aggregate():
    report = aggregate({"CC": [0.5, 0.9, 0.7]})
    s = report["cc"]
    assert s.mean_percent == pytest.approx(70.0)
    assert s.cv_percent == pytest.approx(28.5714285714)


def test_cv_undefined():
    assert summarize("CC", [0.4]).cv_percent is None
    assert summarize("CC", [0.0, 0.0]).cv_percent is None
    with pytest.raises(ValueError):
        summarize("CC", [])


_values = st.dictionaries(st.text("abcdefgh", min_size=1, max_size=3), st.integers(-50, 50), min_size=1)


@settings(max_examples=200, deadline=None)
@given(_values, st.data())
def test_pr_matches_oracle(values, data):
    v = data.draw(st.sampled_from(sorted(values)))
    pr = pr_score(values, v)
    assert pr == 1 - competition_rank(values, v) / len(values)
    assert 0 <= pr < 1


@settings(max_examples=200, deadline=None)
@given(_values, st.data(), st.integers(1, 5), st.integers(-100, 100))
def test_pr_invariant_under_monotone_transform(values, data, scale, shift):
    v = data.draw(st.sampled_from(sorted(values)))
    moved = {k: x * scale + shift for k, x in values.items()}
    assert pr_score(moved, v) == pr_score(values, v)


@settings(max_examples=200, deadline=None)
@given(_values, st.data())
def test_raising_the_vulnerable_value_never_lowers_pr(values, data):
    v = data.draw(st.sampled_from(sorted(values)))
    higher = dict(values, **{v: values[v] + 1})
    assert pr_score(higher, v) >= pr_score(values, v)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.01, 0.99), min_size=2, max_size=20))
def test_aggregate_matches_oracle(prs):
    s = summarize("CC", prs)
    mean = sum(prs) / len(prs)
    assert s.mean_percent == pytest.approx(mean * 100)
    assert s.cv_percent == pytest.approx(sample_std(prs) / mean * 100, rel=1e-9, abs=1e-9)


def test_evaluate_small_corpus():
    a = make_listing(BIG, "a")
    b = make_listing(BIG, "b")
    report = evaluate([a, b], {"a": ["big"], "b": ["small"]}, metrics=["LOC", "CC"])
    assert report["LOC"].prs == (1 - 1 / 3, 0.0)
    assert report["LOC"].mean_percent == pytest.approx(100 / 3)
    assert report.long_rows[0] == ("a", "big", "LOC", pytest.approx(2 / 3))
    rows = list(report_rows(report))
    assert rows[0][0] == "LOC"


def test_evaluate_errors():
    a = make_listing(BIG, "a")
    with pytest.raises(EvaluationError, match="not found"):
        evaluate([a], {"a": ["ghost"]})
    with pytest.raises(EvaluationError, match="not in the corpus"):
        evaluate([a], {"zz": ["big"]})
    with pytest.raises(EvaluationError, match="twice"):
        evaluate([a, a], {"a": ["big"]})
    with pytest.raises(EvaluationError):
        evaluate([a], {})


def test_ground_truth_and_corpus_files(tmp_path):
    gt = tmp_path / "gt.txt"
    gt.write_text("# module routine\na big\na big\nb small\n")
    assert load_ground_truth(gt) == {"a": ["big"], "b": ["small"]}
    gt.write_text("a\n")
    with pytest.raises(InputError, match=":1:"):
        load_ground_truth(gt)
    corpus = tmp_path / "corpus.txt"
    corpus.write_text("x.lst\n\nsub/y.lst # comment\n")
    assert load_corpus_manifest(corpus) == [str(tmp_path / "x.lst"), str(tmp_path / "sub" / "y.lst")]
