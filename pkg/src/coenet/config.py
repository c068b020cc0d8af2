"""Run configuration: loading, aggregated validation, seed splitting."""
from __future__ import annotations

import hashlib
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .graphcore import SliceSpec
from .ingest import ETHNIC_GROUPS, YEAR_MAX, YEAR_MIN, ConfigError, DecileBand, GeneratorConfig, Sex, SubpopSelector


class ConfigValidationError(ConfigError):
    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__(f"{len(errors)} configuration error(s):\n" + "\n".join(f"  - {e}" for e in errors))


@dataclass(frozen=True)
class NamedSelector:
    id: str
    selector: SubpopSelector


@dataclass(frozen=True)
class RunConfig:
    seed: int
    output_dir: Path
    slices: tuple[SliceSpec, ...]
    selectors: tuple[NamedSelector, ...]
    generator: GeneratorConfig | None = None
    enrolments: Path | None = None
    students: Path | None = None
    filters: Mapping[str, bool] = field(default_factory=dict)
    rcp_threshold: float = 1.0
    trials: int = 10
    infomap_seed: int | None = None
    tau: float = 0.15
    reps: int = 1000
    perturb: float = 0.20
    threads: int = 1
    config_hash: str = ""


def stage_seed(master: int, *parts: Any) -> int:
    """Deterministic 63-bit seed for one stage, independent of other stages."""
    key = repr((int(master),) + tuple(str(p) for p in parts)).encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big") >> 1


def _line_of(text: str, section: str | None, key: str | None, index: int = 0) -> int | None:
    """1-based line of ``key`` inside ``[section]`` (``index``-th ``[[section]]``)."""
    current, seen = None, -1
    header = re.compile(r"^\s*\[\[?\s*([^\]]+?)\s*\]\]?\s*$")
    for no, line in enumerate(text.splitlines(), start=1):
        m = header.match(line)
        if m:
            current = m.group(1)
            if current == section:
                seen += 1
                if key is None and seen == index:
                    return no
            continue
        if current == section and (seen == index or section is None) and key is not None:
            if re.match(rf"^\s*{re.escape(key)}\s*=", line):
                return no
    return None


class _Errors:
    def __init__(self, text: str):
        self.text = text
        self.items: list[str] = []

    def add(self, field_name: str, msg: str, section: str | None = None, key: str | None = None, index: int = 0):
        line = _line_of(self.text, section, key, index) if self.text else None
        where = f" (line {line})" if line else ""
        self.items.append(f"{field_name}: {msg}{where}")


def _num(errs, d, key, kind, default, lo=None, hi=None, lo_open=False, hi_open=False, section=None):
    name = f"{section}.{key}" if section else key
    if key not in d:
        return default
    v = d[key]
    ok_type = isinstance(v, (int, float)) and not isinstance(v, bool)
    if kind is int:
        ok_type = isinstance(v, int) and not isinstance(v, bool)
    if not ok_type:
        errs.add(name, f"must be {'an integer' if kind is int else 'a number'}, got {v!r}", section, key)
        return default
    bad = ((lo is not None and (v <= lo if lo_open else v < lo))
           or (hi is not None and (v >= hi if hi_open else v > hi)))
    if bad:
        lb = "(" if lo_open else "["
        rb = ")" if hi_open else "]"
        rng = f"{lb}{'-inf' if lo is None else lo}, {'inf' if hi is None else hi}{rb}"
        errs.add(name, f"{v!r} outside allowed range {rng}", section, key)
        return default
    return kind(v)


def _enum(errs, value, enum, name, section, key, index):
    try:
        return enum(value)
    except ValueError:
        errs.add(name, f"{value!r} is not one of {[e.value for e in enum]}", section, key, index)
        return None


def _selector_fields(errs, d, section, index) -> dict:
    out: dict[str, Any] = {}
    label = f"{section}[{index}]"
    if section == "slices":
        known = {"id", "decile_band", "cohort_year", "attrs"}
    else:
        known = {"id", "sex", "ethnicity", "decile_band", "cohort_year", "attrs"}
    for k in d:
        if k not in known:
            errs.add(f"{label}.{k}", "unknown key", section, k, index)
    if "sex" in d and section == "selectors":
        out["sex"] = _enum(errs, d["sex"], Sex, f"{label}.sex", section, "sex", index)
    if "ethnicity" in d:
        if d["ethnicity"] not in ETHNIC_GROUPS:
            errs.add(f"{label}.ethnicity", f"{d['ethnicity']!r} is not one of {list(ETHNIC_GROUPS)}",
                     section, "ethnicity", index)
        else:
            out["ethnicity"] = d["ethnicity"]
    if "decile_band" in d:
        out["decile_band"] = _enum(errs, d["decile_band"], DecileBand, f"{label}.decile_band",
                                   section, "decile_band", index)
    if "cohort_year" in d:
        y = d["cohort_year"]
        if not isinstance(y, int) or not YEAR_MIN <= y <= YEAR_MAX:
            errs.add(f"{label}.cohort_year", f"{y!r} is not a year in [{YEAR_MIN}, {YEAR_MAX}]",
                     section, "cohort_year", index)
        else:
            out["cohort_year"] = y
    if "attrs" in d:
        if not isinstance(d["attrs"], dict):
            errs.add(f"{label}.attrs", "must be a table of string values", section, "attrs", index)
        else:
            out["attrs"] = {str(k): str(v) for k, v in d["attrs"].items()}
    return out


def validate(raw: Mapping[str, Any], text: str = "", base_dir: Path | str = ".") -> RunConfig:
    """Check every field and cross-field constraint; raise all problems at once."""
    base_dir = Path(base_dir)
    errs = _Errors(text)
    known_top = {"seed", "threads", "input", "filters", "slices", "selectors", "rcp", "infomap", "bootstrap", "output"}
    for k in raw:
        if k not in known_top:
            errs.add(k, "unknown top-level key", None, k)

    seed = _num(errs, raw, "seed", int, 0, lo=0)
    threads = _num(errs, raw, "threads", int, 1, lo=1)

    inp = raw.get("input", {})
    generator = enrol = stud = None
    has_gen = "generator" in inp
    has_files = "enrolments" in inp
    if has_gen == has_files:
        errs.add("input", "give exactly one of input.generator or input.enrolments", "input", None)
    if has_gen:
        gsrc = inp["generator"]
        try:
            if isinstance(gsrc, str):
                gpath = base_dir / gsrc
                if not gpath.exists():
                    raise ConfigError(f"file {gpath} does not exist")
                gsrc = tomllib.loads(gpath.read_text(encoding="utf-8"))
            generator = GeneratorConfig.from_dict(gsrc)
        except (ConfigError, KeyError, TypeError, ValueError) as exc:
            errs.add("input.generator", str(exc), "input", "generator")
    if has_files:
        enrol = base_dir / inp["enrolments"]
        if not enrol.exists():
            errs.add("input.enrolments", f"file {enrol} does not exist", "input", "enrolments")
        if "students" in inp:
            stud = base_dir / inp["students"]
            if not stud.exists():
                errs.add("input.students", f"file {stud} does not exist", "input", "students")

    filters = raw.get("filters", {})
    for k, v in filters.items():
        if not isinstance(v, bool):
            errs.add(f"filters.{k}", f"must be true or false, got {v!r}", "filters", k)

    slices = []
    raw_slices = raw.get("slices", [])
    if not raw_slices:
        errs.add("slices", "at least one slice is required", None, None)
    seen: set[str] = set()
    for i, d in enumerate(raw_slices):
        sid = str(d.get("id", f"slice{i}"))
        if sid in seen:
            errs.add(f"slices[{i}].id", f"duplicate slice id {sid!r}", "slices", "id", i)
        seen.add(sid)
        f = _selector_fields(errs, d, "slices", i)
        slices.append(SliceSpec(id=sid, **{k: v for k, v in f.items() if v is not None}))

    selectors = []
    raw_sel = raw.get("selectors", [])
    if not raw_sel:
        errs.add("selectors", "at least one selector is required", None, None)
    seen = set()
    for i, d in enumerate(raw_sel):
        sid = str(d.get("id", f"selector{i}"))
        if sid in seen:
            errs.add(f"selectors[{i}].id", f"duplicate selector id {sid!r}", "selectors", "id", i)
        seen.add(sid)
        f = _selector_fields(errs, d, "selectors", i)
        selectors.append(NamedSelector(sid, SubpopSelector(**{k: v for k, v in f.items() if v is not None})))

    rcp = raw.get("rcp", {})
    threshold = _num(errs, rcp, "threshold", float, 1.0, lo=0, lo_open=True, section="rcp")
    im = raw.get("infomap", {})
    trials = _num(errs, im, "trials", int, 10, lo=1, section="infomap")
    tau = _num(errs, im, "tau", float, 0.15, lo=0, hi=1, lo_open=True, hi_open=True, section="infomap")
    im_seed = _num(errs, im, "seed", int, None, lo=0, section="infomap")
    bs = raw.get("bootstrap", {})
    reps = _num(errs, bs, "reps", int, 1000, lo=1, section="bootstrap")
    perturb = _num(errs, bs, "perturb", float, 0.20, lo=0, hi=1, lo_open=True, hi_open=True, section="bootstrap")

    out = raw.get("output", {})
    if "dir" not in out:
        errs.add("output.dir", "output directory is required", "output", None)

    if errs.items:
        raise ConfigValidationError(errs.items)
    return RunConfig(
        seed=seed,
        output_dir=base_dir / out["dir"],
        slices=tuple(slices),
        selectors=tuple(selectors),
        generator=generator,
        enrolments=enrol,
        students=stud,
        filters=dict(filters),
        rcp_threshold=threshold,
        trials=trials,
        infomap_seed=im_seed,
        tau=tau,
        reps=reps,
        perturb=perturb,
        threads=threads,
        config_hash=hashlib.sha256(text.encode() if text else repr(sorted(raw.items())).encode()).hexdigest(),
    )


def loads(text: str, base_dir: Path | str = ".") -> RunConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigValidationError([f"config is not valid TOML: {exc}"]) from None
    return validate(raw, text, base_dir)


def load(path: str | Path) -> RunConfig:
    path = Path(path)
    return loads(path.read_text(encoding="utf-8"), path.parent)


def load_generator(path: str | Path) -> GeneratorConfig:
    return GeneratorConfig.from_dict(tomllib.loads(Path(path).read_text(encoding="utf-8")))
