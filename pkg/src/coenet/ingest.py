"""Enrolment records, student metadata, cohort assignment and synthetic cohorts."""
from __future__ import annotations

import csv
import io
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np

log = logging.getLogger(__name__)

YEAR_MIN, YEAR_MAX = 2000, 2100
ETHNIC_GROUPS = ("European", "Maori", "Pacific", "Asian", "MELAA", "Other")


class SchemaError(ValueError):
    pass


class ConfigError(ValueError):
    pass


class Kind(str, Enum):
    UNIT = "unit"
    ACHIEVEMENT = "achievement"


class Mode(str, Enum):
    INTERNAL = "internal"
    EXTERNAL = "external"


class Sex(str, Enum):
    MALE = "male"
    FEMALE = "female"


class DecileBand(str, Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"


def decile_band(decile: int) -> DecileBand:
    if not 1 <= decile <= 10:
        raise ValueError(f"decile must be in 1..10, got {decile}")
    if decile <= 3:
        return DecileBand.LOW
    if decile <= 7:
        return DecileBand.MEDIUM
    return DecileBand.HIGH


@dataclass(frozen=True, order=True)
class EnrolmentRecord:
    student_id: str
    standard_id: str
    year: int
    standard_domain: str = ""
    standard_kind: Kind = Kind.ACHIEVEMENT
    assessment_mode: Mode = Mode.INTERNAL

    def __post_init__(self):
        if not YEAR_MIN <= self.year <= YEAR_MAX:
            raise ValueError(f"year {self.year} outside [{YEAR_MIN}, {YEAR_MAX}]")
        object.__setattr__(self, "standard_kind", Kind(self.standard_kind))
        object.__setattr__(self, "assessment_mode", Mode(self.assessment_mode))

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.student_id, self.standard_id, self.year)


@dataclass(frozen=True)
class StudentMeta:
    student_id: str
    sex: Sex
    ethnicities: frozenset[str]
    decile: int
    cohort_year: int | None = None
    # eligibility checks that would come from record linkage, precomputed
    flags: Mapping[str, bool] = field(default_factory=dict)
    # free-form attributes (region, synthetic group, ...)
    attrs: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "sex", Sex(self.sex))
        eth = frozenset(self.ethnicities)
        if not eth:
            raise ValueError(f"student {self.student_id}: ethnicities must be non-empty")
        bad = eth.difference(ETHNIC_GROUPS)
        if bad:
            raise ValueError(f"unknown ethnic group(s) {sorted(bad)}")
        object.__setattr__(self, "ethnicities", eth)
        decile_band(self.decile)

    @property
    def decile_band(self) -> DecileBand:
        return decile_band(self.decile)


@dataclass(frozen=True)
class SubpopSelector:
    """Conjunction of optional attribute filters; an empty selector matches everyone."""

    sex: Sex | None = None
    ethnicity: str | None = None
    decile_band: DecileBand | None = None
    cohort_year: int | None = None
    attrs: Mapping[str, str] = field(default_factory=dict)

    def matches(self, s: StudentMeta) -> bool:
        if self.sex is not None and s.sex != Sex(self.sex):
            return False
        if self.ethnicity is not None and self.ethnicity not in s.ethnicities:
            return False
        if self.decile_band is not None and s.decile_band != DecileBand(self.decile_band):
            return False
        if self.cohort_year is not None and s.cohort_year != self.cohort_year:
            return False
        return all(s.attrs.get(k) == v for k, v in self.attrs.items())

    def select(self, students: Iterable[StudentMeta]) -> list[StudentMeta]:
        return [s for s in students if self.matches(s)]


# --------------------------------------------------------------------------
# Parsing / writing
# --------------------------------------------------------------------------

ENROLMENT_COLUMNS = ("student_id", "standard_id", "year", "domain", "kind", "mode")
STUDENT_COLUMNS = ("student_id", "sex", "ethnicities", "decile", "flags")
DEFAULT_SCHEMA = {c: c for c in ENROLMENT_COLUMNS + STUDENT_COLUMNS[1:]}


@dataclass(frozen=True)
class Reject:
    row: int
    reason: str


@dataclass
class ParseResult:
    records: list[EnrolmentRecord]
    students: list[StudentMeta]
    rejects: list[Reject]


def _reader(source: TextIO | str) -> csv.DictReader:
    if isinstance(source, str):
        source = io.StringIO(source)
    text = source.read()
    header = text.split("\n", 1)[0]
    delim = "\t" if header.count("\t") > header.count(",") else ","
    return csv.DictReader(io.StringIO(text), delimiter=delim)


def _parse_flags(text: str) -> dict[str, bool]:
    flags = {}
    for item in filter(None, (t.strip() for t in text.split(";"))):
        name, _, val = item.partition("=")
        if val not in ("0", "1"):
            raise ValueError(f"flag {item!r} must be name=0 or name=1")
        flags[name.strip()] = val == "1"
    return flags


def _format_flags(flags: Mapping[str, bool]) -> str:
    return ";".join(f"{k}={int(v)}" for k, v in sorted(flags.items()))


def _student_from_row(row: Mapping[str, str], schema: Mapping[str, str], extra: Sequence[str]) -> StudentMeta:
    sid = row[schema["student_id"]].strip()
    eth = [e.strip() for e in row[schema["ethnicities"]].split(";") if e.strip()]
    try:
        decile = int(row[schema["decile"]])
    except ValueError:
        raise ValueError(f"decile {row[schema['decile']]!r} is not an integer") from None
    flag_col = schema["flags"]
    flags = _parse_flags(row.get(flag_col) or "") if flag_col in row else {}
    attrs = {k: row[k] for k in extra if row.get(k) not in (None, "")}
    cohort = row.get("cohort_year") or None
    return StudentMeta(
        student_id=sid,
        sex=row[schema["sex"]].strip(),
        ethnicities=frozenset(eth),
        decile=decile,
        cohort_year=int(cohort) if cohort else None,
        flags=flags,
        attrs=attrs,
    )


def parse_enrolments(source: TextIO | str, schema: Mapping[str, str] | None = None) -> ParseResult:
    """Parse an enrolment table (comma or tab delimited, header row required).

    If the table also carries the student columns (sex, ethnicities, decile),
    student metadata is read inline; otherwise ``students`` is empty and
    should come from :func:`parse_students`.  Bad rows land in ``rejects``
    with their 1-based data row number; duplicate (student, standard, year)
    rows collapse silently.
    """
    schema = {**DEFAULT_SCHEMA, **(schema or {})}
    reader = _reader(source)
    header = reader.fieldnames or []
    missing = [c for c in ("student_id", "standard_id", "year") if schema[c] not in header]
    if missing:
        raise SchemaError(f"missing required column(s): {', '.join(schema[c] for c in missing)}")
    inline = all(schema[c] in header for c in ("sex", "ethnicities", "decile"))
    known = {schema[c] for c in ENROLMENT_COLUMNS + STUDENT_COLUMNS} | {"cohort_year"}
    extra = [h for h in header if h not in known]

    records: dict[tuple, EnrolmentRecord] = {}
    students: dict[str, StudentMeta] = {}
    rejects: list[Reject] = []
    for rownum, row in enumerate(reader, start=1):
        try:
            year_txt = row[schema["year"]]
            try:
                year = int(year_txt)
            except (TypeError, ValueError):
                raise ValueError(f"year {year_txt!r} is not an integer") from None
            rec = EnrolmentRecord(
                student_id=row[schema["student_id"]].strip(),
                standard_id=row[schema["standard_id"]].strip(),
                year=year,
                standard_domain=(row.get(schema["domain"]) or "").strip(),
                standard_kind=(row.get(schema["kind"]) or Kind.ACHIEVEMENT.value).strip(),
                assessment_mode=(row.get(schema["mode"]) or Mode.INTERNAL.value).strip(),
            )
            if not rec.student_id or not rec.standard_id:
                raise ValueError("empty student_id or standard_id")
            meta = _student_from_row(row, schema, extra) if inline else None
        except (ValueError, KeyError) as exc:
            rejects.append(Reject(rownum, str(exc)))
            continue
        if meta is not None:
            prev = students.get(meta.student_id)
            if prev is not None and prev != meta:
                rejects.append(Reject(rownum, f"student {meta.student_id} attributes conflict with an earlier row"))
                continue
            students[meta.student_id] = meta
        records.setdefault(rec.key, rec)
    return ParseResult(list(records.values()), list(students.values()), rejects)


def parse_students(source: TextIO | str, schema: Mapping[str, str] | None = None) -> tuple[list[StudentMeta], list[Reject]]:
    schema = {**DEFAULT_SCHEMA, **(schema or {})}
    reader = _reader(source)
    header = reader.fieldnames or []
    missing = [schema[c] for c in ("student_id", "sex", "ethnicities", "decile") if schema[c] not in header]
    if missing:
        raise SchemaError(f"missing required column(s): {', '.join(missing)}")
    known = {schema[c] for c in STUDENT_COLUMNS} | {"cohort_year"}
    extra = [h for h in header if h not in known]
    students: dict[str, StudentMeta] = {}
    rejects = []
    for rownum, row in enumerate(reader, start=1):
        try:
            meta = _student_from_row(row, schema, extra)
        except (ValueError, KeyError) as exc:
            rejects.append(Reject(rownum, str(exc)))
            continue
        if meta.student_id in students:
            rejects.append(Reject(rownum, f"duplicate student {meta.student_id}"))
            continue
        students[meta.student_id] = meta
    return list(students.values()), rejects


def write_enrolments(records: Iterable[EnrolmentRecord], out: TextIO) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(ENROLMENT_COLUMNS)
    for r in records:
        w.writerow([r.student_id, r.standard_id, r.year, r.standard_domain,
                    r.standard_kind.value, r.assessment_mode.value])


def write_students(students: Iterable[StudentMeta], out: TextIO) -> None:
    students = list(students)
    attr_keys = sorted({k for s in students for k in s.attrs})
    w = csv.writer(out, lineterminator="\n")
    w.writerow(STUDENT_COLUMNS + ("cohort_year",) + tuple(attr_keys))
    for s in students:
        w.writerow([s.student_id, s.sex.value, ";".join(sorted(s.ethnicities)), s.decile,
                    _format_flags(s.flags), "" if s.cohort_year is None else s.cohort_year]
                   + [s.attrs.get(k, "") for k in attr_keys])


# --------------------------------------------------------------------------
# Cohorts and population filters
# --------------------------------------------------------------------------

def assign_cohorts(records: Iterable[EnrolmentRecord]) -> dict[str, int]:
    """Cohort year = the year with the most records; ties go to the latest year."""
    per_student: dict[str, Counter] = defaultdict(Counter)
    for r in records:
        per_student[r.student_id][r.year] += 1
    return {sid: max(c.items(), key=lambda kv: (kv[1], kv[0]))[0] for sid, c in per_student.items()}


def with_cohorts(students: Iterable[StudentMeta], cohorts: Mapping[str, int]) -> list[StudentMeta]:
    return [replace(s, cohort_year=cohorts.get(s.student_id, s.cohort_year)) for s in students]


@dataclass
class FilterResult:
    records: list[EnrolmentRecord]
    students: list[StudentMeta]
    removed: dict[str, int]


def filter_population(
    records: Sequence[EnrolmentRecord],
    students: Sequence[StudentMeta],
    rules: Mapping[str, bool],
) -> FilterResult:
    """Keep students whose flag is true for every enabled rule.

    ``rules`` maps a flag name to enabled/disabled.  ``removed`` attributes
    each dropped student to the first enabled rule it fails, in rule order.
    A student lacking a flag fails that rule; a flag no student carries is a
    configuration error.
    """
    enabled = [name for name, on in rules.items() if on]
    present = {k for s in students for k in s.flags}
    unknown = [name for name in enabled if name not in present]
    if unknown and students:
        raise ConfigError(f"filter rule(s) reference absent attribute(s): {', '.join(unknown)}")
    removed = {name: 0 for name in enabled}
    kept = []
    for s in students:
        failed = next((name for name in enabled if not s.flags.get(name, False)), None)
        if failed is None:
            kept.append(s)
        else:
            removed[failed] += 1
    ids = {s.student_id for s in kept}
    return FilterResult([r for r in records if r.student_id in ids], kept, removed)


# --------------------------------------------------------------------------
# Synthetic cohorts
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BlockSpec:
    name: str
    n_standards: int
    kind: Kind = Kind.ACHIEVEMENT
    mode: Mode = Mode.EXTERNAL


@dataclass(frozen=True)
class GroupSpec:
    name: str
    n_students: int
    weights: tuple[float, ...]
    sex: Sex = Sex.FEMALE
    ethnicities: tuple[str, ...] = ("European",)
    decile: int = 5


@dataclass(frozen=True)
class GeneratorConfig:
    blocks: tuple[BlockSpec, ...]
    groups: tuple[GroupSpec, ...]
    years: tuple[int, ...] = (2016,)
    standards_per_student: tuple[int, int] = (10, 14)
    # chance that a record is filed one year before the student's main year
    spill: float = 0.1
    flags: tuple[str, ...] = ("state_school", "resident", "prior_level")

    def validate(self) -> None:
        if not self.blocks or sum(b.n_standards for b in self.blocks) == 0:
            raise ConfigError("generator needs at least one standard")
        if any(b.n_standards < 0 for b in self.blocks):
            raise ConfigError("block sizes must be non-negative")
        if not self.groups or sum(g.n_students for g in self.groups) == 0:
            raise ConfigError("generator needs at least one student")
        for g in self.groups:
            if len(g.weights) != len(self.blocks):
                raise ConfigError(f"group {g.name}: {len(g.weights)} weights for {len(self.blocks)} blocks")
            w = np.asarray(g.weights, dtype=float)
            if (w < 0).any() or w @ [b.n_standards > 0 for b in self.blocks] <= 0:
                raise ConfigError(f"group {g.name}: weights must be non-negative and hit a non-empty block")
        lo, hi = self.standards_per_student
        if not 1 <= lo <= hi:
            raise ConfigError("standards_per_student must satisfy 1 <= min <= max")
        if not self.years:
            raise ConfigError("generator needs at least one year")
        if not 0 <= self.spill < 1:
            raise ConfigError("spill must be in [0, 1)")

    @classmethod
    def from_dict(cls, d: Mapping) -> "GeneratorConfig":
        gen = d.get("generator", {})
        blocks = tuple(
            BlockSpec(b["name"], int(b["n_standards"]), Kind(b.get("kind", "achievement")),
                      Mode(b.get("mode", "external")))
            for b in d.get("blocks", [])
        )
        groups = tuple(
            GroupSpec(g["name"], int(g["n_students"]), tuple(float(x) for x in g["weights"]),
                      Sex(g.get("sex", "female")), tuple(g.get("ethnicities", ["European"])),
                      int(g.get("decile", 5)))
            for g in d.get("groups", [])
        )
        kw = {}
        if "years" in gen:
            kw["years"] = tuple(int(y) for y in gen["years"])
        if "standards_per_student" in gen:
            kw["standards_per_student"] = tuple(int(x) for x in gen["standards_per_student"])
        if "spill" in gen:
            kw["spill"] = float(gen["spill"])
        if "flags" in gen:
            kw["flags"] = tuple(gen["flags"])
        cfg = cls(blocks=blocks, groups=groups, **kw)
        cfg.validate()
        return cfg

    def standard_ids(self) -> list[tuple[str, int]]:
        """(standard_id, block index) for every generated standard, in order."""
        out = []
        for bi, b in enumerate(self.blocks):
            out.extend((f"{b.name}-{k:03d}", bi) for k in range(b.n_standards))
        return out


@dataclass
class SyntheticCohort:
    records: list[EnrolmentRecord]
    students: list[StudentMeta]
    planted: dict[str, int]


def _draw_standards(rng: np.random.Generator, weights: np.ndarray, sizes: np.ndarray, k: int) -> list[tuple[int, int]]:
    # block first, then a not-yet-taken standard uniformly within it
    remaining = sizes.copy()
    taken: set[tuple[int, int]] = set()
    cdf = np.cumsum(weights * (remaining > 0))
    k = min(k, int(sizes[weights > 0].sum()))
    while len(taken) < k:
        b = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        free = [j for j in range(sizes[b]) if (b, j) not in taken]
        taken.add((b, free[int(rng.integers(len(free)))]))
        remaining[b] -= 1
        if remaining[b] == 0:
            cdf = np.cumsum(weights * (remaining > 0))
    return sorted(taken)


def generate_synthetic(config: GeneratorConfig, seed: int) -> SyntheticCohort:
    """Draw a planted-block cohort; a pure function of ``(config, seed)``."""
    config.validate()
    rng = np.random.default_rng(seed)
    sizes = np.array([b.n_standards for b in config.blocks])
    lo, hi = config.standards_per_student
    records, students = [], []
    sid_counter = 0
    for g in config.groups:
        weights = np.asarray(g.weights, dtype=float)
        for _ in range(g.n_students):
            sid = f"S{sid_counter:06d}"
            sid_counter += 1
            year = config.years[int(rng.integers(len(config.years)))]
            k = int(rng.integers(lo, hi + 1))
            for b, j in _draw_standards(rng, weights, sizes, k):
                block = config.blocks[b]
                ry = year - 1 if rng.random() < config.spill and year - 1 >= YEAR_MIN else year
                records.append(EnrolmentRecord(sid, f"{block.name}-{j:03d}", ry, block.name, block.kind, block.mode))
            students.append(StudentMeta(
                student_id=sid, sex=g.sex, ethnicities=frozenset(g.ethnicities), decile=g.decile,
                flags={f: True for f in config.flags}, attrs={"group": g.name},
            ))
    planted = {sid: b for sid, b in config.standard_ids()}
    return SyntheticCohort(records, students, planted)
