import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coenet.entropy import SubpopCounts, UndefinedEntropyError, bootstrap_entropy, entropy, subpop_counts
from coenet.graphcore import SliceSpec
from coenet.ingest import EnrolmentRecord, StudentMeta, SubpopSelector

# -(0.5 ln 0.5 + 0.3 ln 0.3 + 0.2 ln 0.2) / ln 100, summed term by term
S_50_30_20 = 0.22358631114164781


def test_point_mass_is_zero():
    assert entropy(np.array([100.0])) == 0.0
    assert entropy(np.array([0, 100.0, 0])) == 0.0


def test_uniform_ten_of_hundred():
    assert entropy(np.full(10, 10.0)) == 0.5


def test_direct_summation_value():
    assert entropy(np.array([50.0, 30, 20])) == pytest.approx(S_50_30_20, abs=1e-14)


def test_undefined_for_tiny_totals():
    with pytest.raises(UndefinedEntropyError):
        entropy(np.array([1.0]))
    with pytest.raises(UndefinedEntropyError):
        entropy(np.array([0.0, 0.0]))


counts_st = st.lists(st.integers(0, 500), min_size=1, max_size=60).filter(lambda c: sum(c) >= 2)


@given(counts_st)
def test_base_invariance(c):
    c = np.array(c, dtype=float)
    nat = entropy(c)
    assert entropy(c, base=2) == pytest.approx(nat, abs=1e-12)
    assert entropy(c, base=10) == pytest.approx(nat, abs=1e-12)


@given(counts_st)
def test_bounds(c):
    c = np.array(c, dtype=float)
    s = entropy(c)
    n_plus = (c > 0).sum()
    assert 0 <= s <= math.log(n_plus) / math.log(c.sum()) + 1e-12


@given(st.integers(1, 50), st.integers(1, 40))
def test_upper_bound_attained_by_uniform(n, k):
    c = np.full(n, float(k))
    if c.sum() < 2:
        return
    assert entropy(c) == pytest.approx(math.log(n) / math.log(n * k), abs=1e-12)


@given(counts_st)
def test_merging_identical_subpopulations(c):
    c = np.array(c, dtype=float)
    x = c.sum()
    assert entropy(2 * c) == pytest.approx(entropy(c) * math.log(x) / math.log(2 * x), abs=1e-12)


# --- bootstrap ---------------------------------------------------------------

def test_zero_perturbation_has_no_spread():
    est = bootstrap_entropy(np.array([50.0, 30, 20]), reps=200, perturb=0.0, seed=1)
    assert est.std == 0.0
    assert est.ci_low == est.ci_high == est.mean == est.point


def test_point_mass_stays_zero():
    est = bootstrap_entropy(np.array([0.0, 40.0]), reps=300, perturb=0.2, seed=2)
    assert est.point == est.mean == est.ci_low == est.ci_high == 0.0


def test_ci_contains_point_and_shrinks_with_perturbation():
    c = np.array([50.0, 30, 20])
    for seed in range(5):
        wide = bootstrap_entropy(c, 1000, 0.2, seed)
        narrow = bootstrap_entropy(c, 1000, 0.1, seed)
        assert wide.ci_low <= wide.point <= wide.ci_high
        assert narrow.ci_low <= narrow.point <= narrow.ci_high
        ratio = (narrow.ci_high - narrow.ci_low) / (wide.ci_high - wide.ci_low)
        assert 0.35 < ratio < 0.65


def test_bootstrap_deterministic_across_workers():
    c = np.random.default_rng(0).integers(1, 100, size=80).astype(float)
    a = bootstrap_entropy(c, 500, 0.2, seed=9, workers=1)
    b = bootstrap_entropy(c, 500, 0.2, seed=9, workers=8)
    assert a == b
    assert bootstrap_entropy(c, 500, 0.2, seed=10) != a


@pytest.mark.parametrize("kw", [dict(reps=0), dict(perturb=1.0), dict(perturb=-0.1)])
def test_bootstrap_argument_checks(kw):
    with pytest.raises(ValueError):
        bootstrap_entropy(np.array([3.0, 4.0]), **kw)


# --- counts ------------------------------------------------------------------

def _pop():
    recs = [EnrolmentRecord("s1", "A", 2016), EnrolmentRecord("s1", "B", 2016), EnrolmentRecord("s2", "A", 2016),
            EnrolmentRecord("s3", "C", 2015)]
    studs = [StudentMeta("s1", "female", frozenset({"Maori"}), 2, cohort_year=2016),
             StudentMeta("s2", "male", frozenset({"European"}), 9, cohort_year=2016),
             StudentMeta("s3", "male", frozenset({"Asian"}), 9, cohort_year=2015)]
    return recs, studs


def test_counts_all_students_in_slice():
    recs, studs = _pop()
    c = subpop_counts(recs, studs, SubpopSelector(), SliceSpec(cohort_year=2016))
    assert c.as_dict() == {"A": 2, "B": 1}
    assert c.total == 3 and c.n_standards == 2


def test_counts_empty_selector_result():
    recs, studs = _pop()
    c = subpop_counts(recs, studs, SubpopSelector(ethnicity="Pacific"))
    assert c.empty and c.standards == ()


def test_counts_restricted_to_network():
    recs, studs = _pop()
    c = subpop_counts(recs, studs, standards={"A", "C"})
    assert c.as_dict() == {"A": 2, "C": 1}


@given(st.lists(st.tuples(st.sampled_from(["s1", "s2", "s3"]), st.sampled_from("ABCDE")), max_size=40),
       st.sampled_from([None, "male", "female"]))
def test_counts_total_is_sum(pairs, sex):
    _, studs = _pop()
    recs = list({EnrolmentRecord(s, t, 2016) for s, t in pairs})
    c = subpop_counts(recs, studs, SubpopSelector(sex=sex))
    chosen = {s.student_id for s in studs if sex is None or s.sex.value == sex}
    expected = {}
    for r in recs:
        if r.student_id in chosen:
            expected[r.standard_id] = expected.get(r.standard_id, 0) + 1
    assert c.as_dict() == expected
    assert c.total == sum(expected.values())
