"""End-to-end run: ingest -> slice -> project -> RCP -> prune -> communities -> entropy."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .community import Partition, modularity, nmi, run_infomap
from .config import RunConfig, stage_seed
from .entropy import UndefinedEntropyError, bootstrap_entropy, subpop_counts
from .export import _atomic_write, export_graph, graph_json, partition_csv_text
from .graphcore import CoGraph, SliceSpec, build_bipartite, project_standards
from .ingest import (EnrolmentRecord, StudentMeta, SubpopSelector, assign_cohorts, filter_population,
                     generate_synthetic, parse_enrolments, parse_students, with_cohorts)
from .rcp import RcpResult, compute_rcp, prune

log = logging.getLogger(__name__)

ENTROPY_COLUMNS = ("slice", "selector", "x_total", "n_standards", "S_point", "S_mean", "S_std",
                   "ci_low", "ci_high", "reps", "seed")
BASELINE = "all_students"
UNION_SUFFIX = "@union"


def thread_budget(requested: int = 1) -> int:
    cap = os.environ.get("COENET_THREADS")
    if cap:
        try:
            return max(1, min(requested, int(cap)))
        except ValueError:
            log.warning("ignoring non-integer COENET_THREADS=%r", cap)
    return max(1, requested)


@dataclass
class Inputs:
    records: list[EnrolmentRecord]
    students: list[StudentMeta]
    planted: dict[str, int] | None = None
    notes: dict = field(default_factory=dict)


def load_inputs(cfg: RunConfig) -> Inputs:
    if cfg.generator is not None:
        cohort = generate_synthetic(cfg.generator, stage_seed(cfg.seed, "generate"))
        records, students, planted = cohort.records, cohort.students, cohort.planted
        notes = {"source": "generator"}
    else:
        parsed = parse_enrolments(cfg.enrolments.read_text(encoding="utf-8"))
        records, students = parsed.records, parsed.students
        rejects = list(parsed.rejects)
        if cfg.students is not None:
            students, srej = parse_students(cfg.students.read_text(encoding="utf-8"))
            rejects += srej
        known = {s.student_id for s in students}
        orphans = sum(r.student_id not in known for r in records)
        records = [r for r in records if r.student_id in known]
        planted = None
        notes = {"source": "files", "rejects": len(rejects),
                 "reject_samples": [f"row {r.row}: {r.reason}" for r in rejects[:20]],
                 "records_without_student": orphans}
    students = with_cohorts(students, assign_cohorts(records))
    filtered = filter_population(records, students, cfg.filters)
    notes["removed_by_filter"] = filtered.removed
    notes["students"] = len(filtered.students)
    notes["records"] = len(filtered.records)
    return Inputs(filtered.records, filtered.students, planted, notes)


@dataclass
class SliceGraphs:
    raw: CoGraph
    rcp: RcpResult


def slice_network(records, students, spec: SliceSpec, threshold: float) -> SliceGraphs | None:
    """Raw projection and pruned RCP graph, or ``None`` when the slice has no co-enrolments."""
    raw = project_standards(build_bipartite(records, students, spec))
    if raw.n_edges == 0:
        return None
    return SliceGraphs(raw, prune(compute_rcp(raw), threshold))


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, float) else str(x)


def _entropy_rows(cfg: RunConfig, inputs: Inputs, spec: SliceSpec, network: CoGraph | None,
                  union: CoGraph | None, workers: int, warnings: list[str]) -> list[list[str]]:
    targets = [(ns.id, ns.selector, network) for ns in cfg.selectors]
    targets.append((BASELINE, SubpopSelector(), network))
    if union is not None:
        targets.append((BASELINE + UNION_SUFFIX, SubpopSelector(), union))
    rows = []
    for sel_id, selector, net in targets:
        seed = stage_seed(cfg.seed, "bootstrap", spec.id, sel_id)
        nodes = () if net is None else net.nodes
        counts = subpop_counts(inputs.records, inputs.students, selector, spec, nodes)
        row = [spec.id, sel_id, _fmt(counts.total), str(counts.n_standards)]
        try:
            est = bootstrap_entropy(counts, cfg.reps, cfg.perturb, seed, workers)
            row += [_fmt(est.point), _fmt(est.mean), _fmt(est.std), _fmt(est.ci_low), _fmt(est.ci_high)]
        except UndefinedEntropyError as exc:
            warnings.append(f"slice {spec.id} selector {sel_id}: {exc}")
            row += [""] * 5
        rows.append(row + [str(cfg.reps), str(seed)])
    return rows


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _run_slice(cfg: RunConfig, inputs: Inputs, spec: SliceSpec, union: CoGraph | None,
               workers: int) -> tuple[dict, list[Path]]:
    t0 = time.perf_counter()
    out = cfg.output_dir / spec.id
    out.mkdir(parents=True, exist_ok=True)
    summary: dict = {"id": spec.id, "status": "ok", "warnings": []}
    files: list[Path] = []
    graphs = slice_network(inputs.records, inputs.students, spec, cfg.rcp_threshold)
    if graphs is None:
        summary["status"] = "skipped"
        summary["warnings"].append("slice has no co-enrolments")
        summary["seconds"] = time.perf_counter() - t0
        return summary, files

    raw, res = graphs.raw, graphs.rcp
    files.append(export_graph(raw, None, "edge_csv", out / "raw_edges.csv"))
    files.append(export_graph(raw, None, "graphml", out / "raw.graphml"))
    summary.update(nodes_raw=raw.n_nodes, edges_raw=raw.n_edges, pruning=res.report())

    g = res.graph
    im_seed = cfg.infomap_seed if cfg.infomap_seed is not None else stage_seed(cfg.seed, "infomap", spec.id)
    if g.n_nodes:
        result = run_infomap(g, im_seed, cfg.trials, cfg.tau, workers=workers)
        part = result.partition
        meta = result.metadata()
        meta["modularity"] = modularity(g, part)
    else:
        part = Partition({})
        meta = {"seed": im_seed, "trials": cfg.trials, "tau": cfg.tau, "codelength_per_trial": [],
                "chosen_trial": None, "codelength": None, "num_communities": 0, "modularity": None}
        summary["warnings"].append("pruned network is empty")
    summary.update(communities=meta["num_communities"], modularity=meta["modularity"],
                   codelength=meta["codelength"])
    if inputs.planted is not None and g.n_nodes:
        summary["nmi_planted"] = nmi(part.labels_for(g.nodes), [inputs.planted[n] for n in g.nodes])

    files.append(export_graph(g, None, "edge_csv", out / "rcp_edges.csv"))
    files.append(export_graph(g, part, "graphml", out / "rcp.graphml"))
    files.append(export_graph(g, part, "json", out / "rcp.json"))
    for name, text in (
        ("partition.csv", partition_csv_text(part, g.nodes)),
        ("pruning.json", json.dumps(res.report(), indent=1, sort_keys=True) + "\n"),
        ("infomap.json", json.dumps(meta, indent=1, sort_keys=True) + "\n"),
    ):
        _atomic_write(out / name, text)
        files.append(out / name)

    rows = _entropy_rows(cfg, inputs, spec, g, union, workers, summary["warnings"])
    _atomic_write(out / "entropy.csv", _csv_text(ENTROPY_COLUMNS, rows))
    files.append(out / "entropy.csv")
    summary["entropy"] = {r[1]: (float(r[4]) if r[4] else None) for r in rows}
    summary["seconds"] = time.perf_counter() - t0
    return summary, files


@dataclass
class RunOutcome:
    manifest: dict
    exit_code: int
    manifest_path: Path


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_pipeline(cfg: RunConfig, threads: int | None = None) -> RunOutcome:
    """Run every slice; a failing slice is recorded and the others continue.

    Exit code 0 when every slice succeeded or was skipped, 1 if any failed.
    """
    timings: dict[str, float] = {}
    t = time.perf_counter()
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    inputs = load_inputs(cfg)
    timings["load"] = time.perf_counter() - t

    t = time.perf_counter()
    union_graphs = slice_network(inputs.records, inputs.students, SliceSpec("union"), cfg.rcp_threshold)
    union = union_graphs.rcp.graph if union_graphs is not None else None
    timings["union_network"] = time.perf_counter() - t

    workers = thread_budget(threads if threads is not None else cfg.threads)

    def one(spec: SliceSpec):
        try:
            return _run_slice(cfg, inputs, spec, union, workers)
        except Exception as exc:  # noqa: BLE001 - a failed slice must not abort the others
            log.exception("slice %s failed", spec.id)
            return {"id": spec.id, "status": "failed", "error": f"{type(exc).__name__}: {exc}"}, []

    t = time.perf_counter()
    if workers > 1 and len(cfg.slices) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, cfg.slices))
    else:
        results = [one(s) for s in cfg.slices]
    timings["slices"] = time.perf_counter() - t

    files = sorted({p for _, fs in results for p in fs})
    manifest = {
        "tool": "coenet",
        "version": __version__,
        "config_hash": cfg.config_hash,
        "master_seed": cfg.seed,
        "parameters": {"rcp_threshold": cfg.rcp_threshold, "trials": cfg.trials, "tau": cfg.tau,
                       "reps": cfg.reps, "perturb": cfg.perturb, "filters": dict(cfg.filters)},
        "inputs": inputs.notes,
        "union_network": None if union is None else {"nodes": union.n_nodes, "edges": union.n_edges},
        "timings": timings,
        "slices": [r[0] for r in results],
        "files": [{"path": str(p.relative_to(cfg.output_dir)), "sha256": _sha256(p)} for p in files],
    }
    path = cfg.output_dir / "manifest.json"
    _atomic_write(path, json.dumps(manifest, indent=1, sort_keys=True, default=str) + "\n")
    failed = any(r[0]["status"] == "failed" for r in results)
    for r in results:
        for w in r[0].get("warnings", []):
            log.warning("slice %s: %s", r[0]["id"], w)
    return RunOutcome(manifest, 1 if failed else 0, path)
