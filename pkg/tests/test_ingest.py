import io
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coenet.graphcore import build_bipartite, project_standards
from coenet.ingest import (BlockSpec, ConfigError, DecileBand, EnrolmentRecord, GeneratorConfig, GroupSpec,
                           SchemaError, StudentMeta, SubpopSelector, assign_cohorts, decile_band,
                           filter_population, generate_synthetic, parse_enrolments, parse_students,
                           write_enrolments, write_students)

HEADER = "student_id,standard_id,year,domain,kind,mode,sex,ethnicities,decile,flags\n"


def test_duplicate_row_collapses():
    text = HEADER + (
        "s1,91524,2016,physics,achievement,external,female,European,9,state_school=1\n"
        "s1,91524,2016,physics,achievement,external,female,European,9,state_school=1\n"
        "s2,91524,2016,physics,achievement,external,male,Maori;Pacific,2,state_school=1\n"
    )
    res = parse_enrolments(text)
    assert len(res.records) == 2
    assert res.rejects == []
    assert {s.student_id for s in res.students} == {"s1", "s2"}
    s2 = next(s for s in res.students if s.student_id == "s2")
    assert s2.ethnicities == {"Maori", "Pacific"}
    assert s2.decile_band == DecileBand.LOW


def test_bad_enum_is_rejected_not_dropped():
    text = HEADER + "s1,91524,2016,physics,achievement,external,unknown,European,9,\n"
    res = parse_enrolments(text)
    assert res.records == []
    assert len(res.rejects) == 1
    assert res.rejects[0].row == 1
    assert "unknown" in res.rejects[0].reason


@pytest.mark.parametrize("row, fragment", [
    ("s1,A,twenty,bio,unit,internal", "year"),
    ("s1,A,1990,bio,unit,internal", "outside"),
    ("s1,A,2016,bio,standard,internal", "standard"),
    ("s1,A,2016,bio,unit,online", "online"),
])
def test_row_level_rejects(row, fragment):
    res = parse_enrolments("student_id,standard_id,year,domain,kind,mode\n" + row + "\n")
    assert res.records == []
    assert fragment in res.rejects[0].reason


def test_missing_required_column():
    with pytest.raises(SchemaError, match="year"):
        parse_enrolments("student_id,standard_id\ns1,A\n")


def test_tab_delimited_and_schema_mapping():
    text = "sid\tstd\tyr\ns1\tA\t2015\ns1\tB\t2016\n"
    res = parse_enrolments(text, {"student_id": "sid", "standard_id": "std", "year": "yr"})
    assert sorted(r.key for r in res.records) == [("s1", "A", 2015), ("s1", "B", 2016)]
    assert res.students == []


def test_conflicting_inline_student_rows():
    text = HEADER + (
        "s1,A,2016,bio,unit,internal,female,European,9,\n"
        "s1,B,2016,bio,unit,internal,male,European,9,\n"
    )
    res = parse_enrolments(text)
    assert len(res.records) == 1
    assert "conflict" in res.rejects[0].reason


def test_students_file():
    text = "student_id,sex,ethnicities,decile,flags,region\ns1,female,Asian,4,resident=1;state_school=0,north\n"
    students, rejects = parse_students(text)
    assert rejects == []
    (s,) = students
    assert s.flags == {"resident": True, "state_school": False}
    assert s.attrs == {"region": "north"}
    assert s.decile_band == DecileBand.MEDIUM


def test_round_trip_synthetic(tmp_path):
    cfg = GeneratorConfig(
        blocks=(BlockSpec("bio", 30), BlockSpec("phy", 30, kind="unit", mode="internal")),
        groups=(GroupSpec("a", 50, (0.7, 0.3)), GroupSpec("b", 50, (0.2, 0.8), sex="male",
                                                           ethnicities=("Maori", "Pacific"), decile=2)),
        years=(2015, 2016), standards_per_student=(9, 11),
    )
    cohort = generate_synthetic(cfg, seed=3)
    assert 900 <= len(cohort.records) <= 1100
    buf = io.StringIO()
    write_enrolments(cohort.records, buf)
    res = parse_enrolments(buf.getvalue())
    assert res.rejects == []
    assert Counter(res.records) == Counter(cohort.records)

    sbuf = io.StringIO()
    write_students(cohort.students, sbuf)
    students, rejects = parse_students(sbuf.getvalue())
    assert rejects == []
    assert students == cohort.students


@pytest.mark.parametrize("d, band", [(1, "low"), (3, "low"), (4, "medium"), (7, "medium"), (8, "high"), (10, "high")])
def test_decile_bands(d, band):
    assert decile_band(d) == DecileBand(band)


def test_student_invariants():
    with pytest.raises(ValueError):
        StudentMeta("s", "female", frozenset(), 5)
    with pytest.raises(ValueError):
        StudentMeta("s", "female", frozenset({"Martian"}), 5)
    with pytest.raises(ValueError):
        StudentMeta("s", "female", frozenset({"Asian"}), 11)


# --- cohorts -----------------------------------------------------------------

def _records(pairs):
    return [EnrolmentRecord(s, f"std{k}", y) for k, (s, y) in enumerate(pairs)]


def test_cohort_majority_year():
    recs = _records([("s", 2015)] * 2 + [("s", 2016)] * 10)
    assert assign_cohorts(recs) == {"s": 2016}


def test_cohort_tie_goes_to_latest_year():
    recs = _records([("s", 2015)] * 5 + [("s", 2016)] * 5)
    assert assign_cohorts(recs) == {"s": 2016}


def _mode_oracle(pairs):
    years_by_student = {}
    for s, y in pairs:
        years_by_student.setdefault(s, []).append(y)
    out = {}
    for s, ys in years_by_student.items():
        best_year, best_count = None, -1
        for y in sorted(set(ys), reverse=True):
            c = sum(1 for v in ys if v == y)
            if c > best_count:
                best_year, best_count = y, c
        out[s] = best_year
    return out


@given(st.lists(st.tuples(st.sampled_from("abcde"), st.integers(2010, 2016)), min_size=1, max_size=80))
def test_cohort_equals_mode(pairs):
    assert assign_cohorts(_records(pairs)) == _mode_oracle(pairs)


# --- filters -----------------------------------------------------------------

def _students(flag_rows):
    return [StudentMeta(f"s{i}", "female", frozenset({"European"}), 5, flags=f) for i, f in enumerate(flag_rows)]


def test_filters_disabled_is_identity():
    studs = _students([{"state_school": i % 2 == 0} for i in range(10)])
    recs = [EnrolmentRecord(s.student_id, "A", 2016) for s in studs]
    out = filter_population(recs, studs, {"state_school": False})
    assert out.students == studs and out.records == recs


def test_single_flag_removal():
    studs = _students([{"state_school": i != 3} for i in range(10)])
    recs = [EnrolmentRecord(s.student_id, "A", 2016) for s in studs]
    out = filter_population(recs, studs, {"state_school": True})
    assert len(out.students) == 9
    assert all(r.student_id != "s3" for r in out.records)
    assert out.removed == {"state_school": 1}


def test_unknown_rule_is_config_error():
    studs = _students([{"state_school": True}])
    with pytest.raises(ConfigError, match="visa"):
        filter_population([], studs, {"visa": True})


RULES = ("state_school", "resident", "prior_level")


@given(st.lists(st.fixed_dictionaries({r: st.booleans() for r in RULES}), min_size=1, max_size=30),
       st.fixed_dictionaries({r: st.booleans() for r in RULES}))
def test_filter_is_intersection_and_monotone(flag_rows, rules):
    studs = _students(flag_rows)
    survivors = {s.student_id for s in filter_population([], studs, rules).students}
    per_rule = [{s.student_id for s in filter_population([], studs, {r: True}).students}
                for r, on in rules.items() if on]
    expected = set.intersection(*per_rule) if per_rule else {s.student_id for s in studs}
    assert survivors == expected
    for r in RULES:
        more = {**rules, r: True}
        assert {s.student_id for s in filter_population([], studs, more).students} <= survivors


# --- synthetic generator -----------------------------------------------------

def _two_block_cfg(wa, wb, n=1000, size=500):
    return GeneratorConfig(
        blocks=(BlockSpec("x", size), BlockSpec("y", size)),
        groups=(GroupSpec("A", n, wa), GroupSpec("B", n, wb, sex="male")),
        standards_per_student=(10, 10), spill=0.0,
    )


def test_generator_deterministic():
    cfg = _two_block_cfg((0.6, 0.4), (0.1, 0.9), n=50, size=20)
    outs = []
    for _ in range(2):
        c = generate_synthetic(cfg, 99)
        buf = io.StringIO()
        write_enrolments(c.records, buf)
        write_students(c.students, buf)
        outs.append(buf.getvalue())
    assert outs[0] == outs[1]
    assert generate_synthetic(cfg, 100).records != generate_synthetic(cfg, 99).records


@pytest.mark.parametrize("wa, wb", [((0.7, 0.3), (0.25, 0.75)), ((1.0, 0.0), (0.0, 1.0))])
def test_block_frequencies_within_three_sigma(wa, wb):
    cfg = _two_block_cfg(wa, wb)
    cohort = generate_synthetic(cfg, 5)
    groups = {s.student_id: s.attrs["group"] for s in cohort.students}
    for name, w in (("A", wa), ("B", wb)):
        blocks = [cohort.planted[r.standard_id] for r in cohort.records if groups[r.student_id] == name]
        n = len(blocks)
        assert n == 10_000
        freq = np.bincount(blocks, minlength=2) / n
        sigma = np.sqrt(np.asarray(w) * (1 - np.asarray(w)) / n)
        assert np.all(np.abs(freq - w) <= 3 * sigma + 1e-15)


def test_single_block_projection_is_dense():
    cfg = GeneratorConfig(blocks=(BlockSpec("only", 8),), groups=(GroupSpec("g", 300, (1.0,)),),
                          standards_per_student=(4, 6))
    c = generate_synthetic(cfg, 1)
    g = project_standards(build_bipartite(c.records, c.students))
    assert g.n_nodes == 8
    assert g.n_edges == 8 * 7 // 2


@pytest.mark.parametrize("blocks, groups", [
    ((BlockSpec("x", 0),), (GroupSpec("g", 10, (1.0,)),)),
    ((BlockSpec("x", 5),), (GroupSpec("g", 0, (1.0,)),)),
    ((BlockSpec("x", 5),), (GroupSpec("g", 10, (1.0, 2.0)),)),
])
def test_generator_config_errors(blocks, groups):
    with pytest.raises(ConfigError):
        generate_synthetic(GeneratorConfig(blocks=blocks, groups=groups), 0)


def test_selector_matching():
    s = StudentMeta("s", "male", frozenset({"Maori", "Pacific"}), 2, cohort_year=2016, attrs={"group": "g"})
    assert SubpopSelector().matches(s)
    assert SubpopSelector(ethnicity="Pacific", decile_band=DecileBand.LOW).matches(s)
    assert not SubpopSelector(sex="female").matches(s)
    assert not SubpopSelector(cohort_year=2015).matches(s)
    assert SubpopSelector(attrs={"group": "g"}).matches(s)
