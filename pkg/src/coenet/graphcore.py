"""Bipartite student-standard networks and their projection onto standards."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .ingest import DecileBand, EnrolmentRecord, StudentMeta

log = logging.getLogger(__name__)

RAW_COUNT = "raw_count"
RCP = "rcp"


@dataclass(frozen=True)
class SliceSpec:
    """Which students (and hence which enrolments) enter a graph."""

    id: str = "all"
    cohort_year: int | None = None
    decile_band: DecileBand | None = None
    attrs: Mapping[str, str] = field(default_factory=dict)

    def matches(self, s: StudentMeta) -> bool:
        if self.cohort_year is not None and s.cohort_year != self.cohort_year:
            return False
        if self.decile_band is not None and s.decile_band != DecileBand(self.decile_band):
            return False
        return all(s.attrs.get(k) == v for k, v in self.attrs.items())


@dataclass(frozen=True)
class StandardInfo:
    domain: str = ""
    kind: str = ""
    mode: str = ""


@dataclass(frozen=True)
class BipartiteGraph:
    """Students x standards incidence; rows are students, columns standards."""

    students: tuple[str, ...]
    standards: tuple[str, ...]
    incidence: sp.csr_matrix
    standard_info: Mapping[str, StandardInfo] = field(default_factory=dict)

    @property
    def n_edges(self) -> int:
        return int(self.incidence.nnz)

    def neighbors(self, student: str) -> list[str]:
        i = self.students.index(student)
        row = self.incidence.indices[self.incidence.indptr[i]:self.incidence.indptr[i + 1]]
        return [self.standards[j] for j in row]


@dataclass(frozen=True)
class CoGraph:
    """Undirected weighted standard-standard graph.

    ``weights`` is a symmetric CSR matrix with an empty diagonal.  Sums over
    it run over ordered pairs, so ``total`` is twice the undirected weight.
    """

    nodes: tuple[str, ...]
    weights: sp.csr_matrix
    weight_mode: str = RAW_COUNT
    info: Mapping[str, StandardInfo] = field(default_factory=dict)

    def __post_init__(self):
        w = sp.csr_matrix(self.weights, dtype=float)
        w.eliminate_zeros()
        w.sort_indices()
        n = len(self.nodes)
        if w.shape != (n, n):
            raise ValueError(f"weight matrix shape {w.shape} does not match {n} nodes")
        if n and w.diagonal().any():
            raise ValueError("self-loops are not allowed")
        object.__setattr__(self, "weights", w)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return int(sp.triu(self.weights, k=1).nnz)

    @property
    def strength(self) -> np.ndarray:
        return np.asarray(self.weights.sum(axis=1)).ravel()

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    @property
    def undirected_total(self) -> float:
        return self.total / 2

    def index(self) -> dict[str, int]:
        return {n: i for i, n in enumerate(self.nodes)}

    def weight(self, a: str, b: str) -> float:
        idx = self.index()
        return float(self.weights[idx[a], idx[b]])

    def edges(self) -> list[tuple[str, str, float]]:
        """Undirected edges (i < j by node order) with weights."""
        upper = sp.triu(self.weights, k=1).tocoo()
        order = np.lexsort((upper.col, upper.row))
        return [(self.nodes[upper.row[k]], self.nodes[upper.col[k]], float(upper.data[k])) for k in order]

    def subgraph(self, keep: np.ndarray) -> "CoGraph":
        """Induced subgraph on the node indices (or boolean mask) ``keep``."""
        keep = np.flatnonzero(keep) if np.asarray(keep).dtype == bool else np.asarray(keep, dtype=int)
        nodes = tuple(self.nodes[i] for i in keep)
        w = self.weights[keep][:, keep]
        return CoGraph(nodes, w, self.weight_mode, {n: self.info[n] for n in nodes if n in self.info})

    def with_weights(self, weights: sp.spmatrix, mode: str) -> "CoGraph":
        return CoGraph(self.nodes, weights, mode, self.info)

    def drop_isolates(self) -> "CoGraph":
        return self.subgraph(self.weights.getnnz(axis=1) > 0)

    @classmethod
    def from_edges(cls, nodes: Sequence[str], edges: Iterable[tuple[str, str, float]],
                   weight_mode: str = RAW_COUNT, info: Mapping[str, StandardInfo] | None = None) -> "CoGraph":
        idx = {n: i for i, n in enumerate(nodes)}
        rows, cols, vals = [], [], []
        for a, b, w in edges:
            if a == b:
                raise ValueError(f"self-loop on {a}")
            rows += [idx[a], idx[b]]
            cols += [idx[b], idx[a]]
            vals += [w, w]
        n = len(nodes)
        mat = sp.csr_matrix((vals, (rows, cols)), shape=(n, n), dtype=float)
        return cls(tuple(nodes), mat, weight_mode, dict(info or {}))


def build_bipartite(
    records: Iterable[EnrolmentRecord],
    students: Iterable[StudentMeta],
    slice: SliceSpec | None = None,
) -> BipartiteGraph:
    """Student and standard nodes for the slice, one edge per distinct (student, standard)."""
    slice = slice or SliceSpec()
    chosen = {s.student_id for s in students if slice.matches(s)}
    pairs: set[tuple[str, str]] = set()
    info: dict[str, StandardInfo] = {}
    for r in records:
        if r.student_id in chosen:
            pairs.add((r.student_id, r.standard_id))
            info.setdefault(r.standard_id, StandardInfo(r.standard_domain, r.standard_kind.value,
                                                       r.assessment_mode.value))
    stu = tuple(sorted({p[0] for p in pairs}))
    std = tuple(sorted({p[1] for p in pairs}))
    si = {s: i for i, s in enumerate(stu)}
    ti = {s: i for i, s in enumerate(std)}
    rows = [si[a] for a, _ in pairs]
    cols = [ti[b] for _, b in pairs]
    inc = sp.csr_matrix((np.ones(len(pairs)), (rows, cols)), shape=(len(stu), len(std)))
    inc.sort_indices()
    return BipartiteGraph(stu, std, inc, info)


def project_standards(b: BipartiteGraph, cap: int = 60) -> CoGraph:
    """Co-enrolment graph: weight(i, j) = number of students taking both i and j.

    Warns if any student exceeds ``cap`` standards, since each student
    contributes deg*(deg-1)/2 pairs.
    """
    deg = np.diff(b.incidence.indptr)
    if deg.size and deg.max() > cap:
        warnings.warn(f"{int((deg > cap).sum())} student(s) exceed {cap} standards "
                      f"(max {int(deg.max())}); projection cost grows quadratically", RuntimeWarning)
    co = (b.incidence.T @ b.incidence).tocsr()
    co.setdiag(0)
    return CoGraph(b.standards, co, RAW_COUNT, dict(b.standard_info))
