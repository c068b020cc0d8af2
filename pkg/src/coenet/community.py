"""Two-level map-equation community detection and weighted modularity.

Flow model: node visit rates come from a random walk that follows edges in
proportion to weight and teleports uniformly with probability ``tau``.
Teleportation shapes the visit rates only; codelengths encode link flow
``f(a->b) = p_a * w_ab / s_a``, i.e. steps actually taken along edges.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .graphcore import CoGraph

log = logging.getLogger(__name__)

MIN_IMPROVEMENT = 1e-10


class ConvergenceError(RuntimeError):
    pass


class PartitionError(ValueError):
    pass


@dataclass(frozen=True)
class VisitRates:
    nodes: tuple[str, ...]
    p: np.ndarray
    tau: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class Partition:
    assignment: Mapping[str, int]

    def __post_init__(self):
        labels = sorted(set(self.assignment.values()))
        if labels != list(range(len(labels))):
            raise PartitionError("community labels must be contiguous from 0")

    @property
    def num_communities(self) -> int:
        return len(set(self.assignment.values()))

    def labels_for(self, nodes: Sequence[str]) -> np.ndarray:
        missing = [n for n in nodes if n not in self.assignment]
        if missing:
            raise PartitionError(f"partition does not cover {len(missing)} node(s), e.g. {missing[0]!r}")
        return np.array([self.assignment[n] for n in nodes], dtype=int)

    def groups(self) -> list[set[str]]:
        out: list[set[str]] = [set() for _ in range(self.num_communities)]
        for n, c in self.assignment.items():
            out[c].add(n)
        return out

    @classmethod
    def from_labels(cls, nodes: Sequence[str], labels: Sequence[int]) -> "Partition":
        """Relabel densely in order of first appearance along ``nodes``."""
        remap: dict[int, int] = {}
        assignment = {}
        for n, lab in zip(nodes, labels):
            assignment[n] = remap.setdefault(int(lab), len(remap))
        return cls(assignment)

    @classmethod
    def single(cls, nodes: Sequence[str]) -> "Partition":
        return cls({n: 0 for n in nodes})

    @classmethod
    def singletons(cls, nodes: Sequence[str]) -> "Partition":
        return cls({n: i for i, n in enumerate(nodes)})


# --------------------------------------------------------------------------
# Flow
# --------------------------------------------------------------------------

def stationary_visit_rates(g: CoGraph, tau: float = 0.15, tol: float = 1e-12,
                           max_iter: int = 10_000) -> VisitRates:
    """Power iteration for the teleporting weighted random walk on ``g``."""
    n = g.n_nodes
    if n == 0:
        raise ValueError("graph has no nodes")
    if not 0 <= tau < 1:
        raise ValueError("tau must be in [0, 1)")
    if g.weights.nnz and g.weights.data.min() < 0:
        raise ValueError("weights must be non-negative")
    s = g.strength
    dangling = s == 0
    inv = np.where(dangling, 0.0, 1.0 / np.where(dangling, 1.0, s))
    step = (sp.diags(inv) @ g.weights).T.tocsr()
    p = np.full(n, 1.0 / n)
    for it in range(1, max_iter + 1):
        nxt = (1 - tau) * (step @ p) + ((1 - tau) * p[dangling].sum() + tau) / n
        nxt /= nxt.sum()
        diff = np.abs(nxt - p).sum()
        p = nxt
        if diff < tol:
            return VisitRates(g.nodes, p, tau, it, True)
    raise ConvergenceError(f"visit rates did not converge in {max_iter} iterations (L1 change {diff:.3g})")


def _plogp(x: float) -> float:
    return x * math.log2(x) if x > 0 else 0.0


def _entropy_bits(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def link_flow(g: CoGraph, rates: VisitRates) -> sp.csr_matrix:
    """Directed flow along each edge: row a, column b holds p_a * w_ab / s_a."""
    s = g.strength
    scale = np.divide(rates.p, s, out=np.zeros_like(s), where=s > 0)
    return (sp.diags(scale) @ g.weights).tocsr()


def map_equation(g: CoGraph, rates: VisitRates, part: Partition) -> float:
    """Two-level map-equation codelength in bits.

    L = q H(Q) + sum_m p_m H(P_m): index codebook over module exits plus one
    codebook per module covering its nodes and its exit.
    """
    if tuple(rates.nodes) != tuple(g.nodes):
        raise ValueError("visit rates were computed on a different graph")
    labels = part.labels_for(g.nodes)
    k = labels.max() + 1 if labels.size else 0
    flow = link_flow(g, rates).tocoo()
    crossing = labels[flow.row] != labels[flow.col]
    exit_m = np.bincount(labels[flow.row[crossing]], weights=flow.data[crossing], minlength=k)
    q = exit_m.sum()
    index = q * _entropy_bits(exit_m / q) if q > 0 else 0.0
    modules = 0.0
    for m in range(k):
        members = rates.p[labels == m]
        p_circ = exit_m[m] + members.sum()
        if p_circ > 0:
            modules += p_circ * _entropy_bits(np.append(members, exit_m[m]) / p_circ)
    return float(index + modules)


# --------------------------------------------------------------------------
# Optimizer
# --------------------------------------------------------------------------

class _FlowLevel:
    """Nodes of one aggregation level with directed link flows between them."""

    def __init__(self, node_flow: np.ndarray, out_links: list[dict[int, float]]):
        self.n = len(node_flow)
        self.node_flow = node_flow
        self.out_links = out_links
        self.in_links: list[dict[int, float]] = [dict() for _ in range(self.n)]
        for a, nbrs in enumerate(out_links):
            for b, f in nbrs.items():
                self.in_links[b][a] = f
        self.out_total = np.array([sum(d.values()) for d in out_links])

    @classmethod
    def from_graph(cls, g: CoGraph, rates: VisitRates) -> "_FlowLevel":
        flow = link_flow(g, rates)
        out = []
        for a in range(g.n_nodes):
            lo, hi = flow.indptr[a], flow.indptr[a + 1]
            out.append(dict(zip(flow.indices[lo:hi].tolist(), flow.data[lo:hi].tolist())))
        return cls(rates.p.copy(), out)

    def aggregate(self, modules: np.ndarray) -> tuple["_FlowLevel", np.ndarray]:
        """Collapse modules into nodes; returns the new level and node->new index."""
        uniq, new_index = np.unique(modules, return_inverse=True)
        flow = np.bincount(new_index, weights=self.node_flow, minlength=len(uniq))
        out: list[dict[int, float]] = [dict() for _ in range(len(uniq))]
        for a, nbrs in enumerate(self.out_links):
            ma = new_index[a]
            for b, f in nbrs.items():
                mb = new_index[b]
                if ma != mb:
                    out[ma][mb] = out[ma].get(mb, 0.0) + f
        return _FlowLevel(flow, out), new_index


class _ModuleState:
    """Per-module flow/exit bookkeeping with O(degree) move deltas."""

    def __init__(self, level: _FlowLevel, modules: np.ndarray, node_term: float):
        self.level = level
        self.modules = modules.copy()
        n = level.n
        self.flow = np.bincount(modules, weights=level.node_flow, minlength=n).astype(float)
        self.exit = np.zeros(n)
        for a, nbrs in enumerate(level.out_links):
            ma = modules[a]
            for b, f in nbrs.items():
                if modules[b] != ma:
                    self.exit[ma] += f
        self.size = np.bincount(modules, minlength=n)
        self.node_term = node_term
        self.sum_exit = float(self.exit.sum())
        self.sum_plogp_exit = sum(_plogp(x) for x in self.exit)
        self.sum_plogp_total = sum(_plogp(e + f) for e, f in zip(self.exit, self.flow))

    def codelength(self) -> float:
        return _plogp(self.sum_exit) - 2 * self.sum_plogp_exit + self.sum_plogp_total + self.node_term

    def _neighbour_flows(self, a: int) -> tuple[dict[int, float], dict[int, float]]:
        lv, mods = self.level, self.modules
        out_m: dict[int, float] = {}
        in_m: dict[int, float] = {}
        for b, f in lv.out_links[a].items():
            out_m[mods[b]] = out_m.get(mods[b], 0.0) + f
        for b, f in lv.in_links[a].items():
            in_m[mods[b]] = in_m.get(mods[b], 0.0) + f
        return out_m, in_m

    def _after(self, a: int, src: int, dst: int, out_m, in_m) -> tuple[float, float, float, float]:
        lv = self.level
        pa, oa = lv.node_flow[a], lv.out_total[a]
        if self.size[src] == 1:
            exit_src, flow_src = 0.0, 0.0
        else:
            exit_src = self.exit[src] - (oa - out_m.get(src, 0.0)) + in_m.get(src, 0.0)
            flow_src = self.flow[src] - pa
        exit_dst = self.exit[dst] + (oa - out_m.get(dst, 0.0)) - in_m.get(dst, 0.0)
        return max(exit_src, 0.0), flow_src, max(exit_dst, 0.0), self.flow[dst] + pa

    def delta(self, a: int, dst: int, out_m, in_m) -> float:
        src = self.modules[a]
        es, fs, ed, fd = self._after(a, src, dst, out_m, in_m)
        old_e, old_d = self.exit[src], self.exit[dst]
        new_sum = self.sum_exit - old_e - old_d + es + ed
        return (
            _plogp(new_sum) - _plogp(self.sum_exit)
            - 2 * (_plogp(es) + _plogp(ed) - _plogp(old_e) - _plogp(old_d))
            + _plogp(es + fs) + _plogp(ed + fd)
            - _plogp(old_e + self.flow[src]) - _plogp(old_d + self.flow[dst])
        )

    def move(self, a: int, dst: int, out_m, in_m) -> None:
        src = self.modules[a]
        es, fs, ed, fd = self._after(a, src, dst, out_m, in_m)
        for m, e, f in ((src, es, fs), (dst, ed, fd)):
            self.sum_exit += e - self.exit[m]
            self.sum_plogp_exit += _plogp(e) - _plogp(self.exit[m])
            self.sum_plogp_total += _plogp(e + f) - _plogp(self.exit[m] + self.flow[m])
            self.exit[m], self.flow[m] = e, f
        self.size[src] -= 1
        self.size[dst] += 1
        self.modules[a] = dst


@dataclass
class _Trace:
    codelengths: list[float] = field(default_factory=list)
    delta_errors: list[float] = field(default_factory=list)


def _move_nodes(state: _ModuleState, rng: np.random.Generator, max_sweeps: int,
                trace: _Trace | None, check: Callable[[np.ndarray], float] | None) -> int:
    """Greedy local moves until a full sweep changes nothing; returns moves made."""
    lv = state.level
    moves = 0
    for _ in range(max_sweeps):
        moved = 0
        for a in rng.permutation(lv.n):
            out_m, in_m = state._neighbour_flows(a)
            src = state.modules[a]
            candidates = sorted((set(out_m) | set(in_m)) - {src})
            if state.size[src] > 1:
                empty = np.flatnonzero(state.size == 0)
                if empty.size:
                    candidates.append(int(empty[0]))
            best, best_delta = -1, -MIN_IMPROVEMENT
            for m in candidates:
                d = state.delta(a, m, out_m, in_m)
                if d < best_delta:
                    best, best_delta = m, d
            if best < 0:
                continue
            before = state.codelength()
            state.move(a, best, out_m, in_m)
            moved += 1
            if trace is not None:
                trace.codelengths.append(before + best_delta)
                if check is not None:
                    trace.delta_errors.append(abs(check(state.modules) - (before + best_delta)))
        moves += moved
        if not moved:
            break
    return moves


@dataclass(frozen=True)
class InfomapResult:
    partition: Partition
    codelength: float
    trial_codelengths: tuple[float, ...]
    best_trial: int
    seed: int
    trials: int
    tau: float
    trajectories: tuple[tuple[float, ...], ...] = ()
    delta_errors: tuple[float, ...] = ()

    def metadata(self) -> dict:
        return {
            "seed": self.seed,
            "trials": self.trials,
            "tau": self.tau,
            "codelength_per_trial": list(self.trial_codelengths),
            "chosen_trial": self.best_trial,
            "codelength": self.codelength,
            "num_communities": self.partition.num_communities,
        }


def _one_trial(base: _FlowLevel, node_term: float, rng: np.random.Generator, max_sweeps: int,
               trace: _Trace | None, check: Callable[[np.ndarray], float] | None,
               max_outer: int = 10) -> tuple[np.ndarray, float]:
    assignment = np.arange(base.n)
    best_len = _ModuleState(base, assignment, node_term).codelength()
    if trace is not None:
        trace.codelengths.append(best_len)
    for _ in range(max_outer):
        # node-level moves from the current partition, then coarsen until stable
        state = _ModuleState(base, assignment, node_term)
        _move_nodes(state, rng, max_sweeps, trace, check)
        assignment = state.modules.copy()
        level, mods, orig_to_level = base, assignment, np.arange(base.n)
        while True:
            coarse, index = level.aggregate(mods)
            orig_to_level = index[orig_to_level]
            if coarse.n <= 1:
                break
            state = _ModuleState(coarse, np.arange(coarse.n), node_term)
            lifted = None if check is None else (lambda m, _o=orig_to_level: check(m[_o]))
            if _move_nodes(state, rng, max_sweeps, trace, lifted) == 0:
                break
            level, mods = coarse, state.modules
            assignment = mods[orig_to_level]
        assignment = np.unique(assignment, return_inverse=True)[1]
        length = _ModuleState(base, assignment, node_term).codelength()
        improved = length < best_len - MIN_IMPROVEMENT
        best_len = min(best_len, length)
        if not improved:
            break
    return assignment, best_len


def run_infomap(g: CoGraph, seed: int, trials: int = 10, tau: float = 0.15, max_sweeps: int = 100,
                workers: int = 1, record_trace: bool = False, check_deltas: bool = False) -> InfomapResult:
    """Best-of-``trials`` two-level map-equation partition of ``g``.

    Each trial starts from singletons and alternates greedy node moves with
    module aggregation.  Trial RNGs derive from ``(seed, trial)``; equal
    codelengths resolve to the lowest trial index.  ``check_deltas`` recomputes
    the full codelength after each accepted move (slow, for verification).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if g.n_nodes == 0:
        return InfomapResult(Partition({}), 0.0, (0.0,) * trials, 0, seed, trials, tau)
    rates = stationary_visit_rates(g, tau)
    base = _FlowLevel.from_graph(g, rates)
    node_term = _entropy_bits(rates.p)
    check = None
    if check_deltas:
        check = lambda mods: map_equation(g, rates, Partition.from_labels(g.nodes, mods))

    def trial(t: int):
        rng = np.random.default_rng([seed, t])
        trace = _Trace() if (record_trace or check_deltas) else None
        labels, length = _one_trial(base, node_term, rng, max_sweeps, trace, check)
        return labels, length, trace

    if workers > 1 and trials > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(trial, range(trials)))
    else:
        results = [trial(t) for t in range(trials)]
    lengths = tuple(r[1] for r in results)
    best = min(range(trials), key=lambda t: (lengths[t], t))
    traces = [r[2] for r in results if r[2] is not None]
    return InfomapResult(
        partition=Partition.from_labels(g.nodes, results[best][0]),
        codelength=lengths[best],
        trial_codelengths=lengths,
        best_trial=best,
        seed=seed,
        trials=trials,
        tau=tau,
        trajectories=tuple(tuple(t.codelengths) for t in traces),
        delta_errors=tuple(e for t in traces for e in t.delta_errors),
    )


def detect_infomap(g: CoGraph, seed: int, trials: int = 10, tau: float = 0.15, workers: int = 1) -> Partition:
    return run_infomap(g, seed, trials, tau, workers=workers).partition


# --------------------------------------------------------------------------
# Scoring
# --------------------------------------------------------------------------

def modularity(g: CoGraph, part: Partition) -> float:
    """Weighted Newman modularity: sum_c [w_c / W - (s_c / 2W)^2]."""
    labels = part.labels_for(g.nodes)
    W = g.undirected_total
    if W <= 0:
        raise ValueError("modularity needs positive total weight")
    k = labels.max() + 1
    w = g.weights.tocoo()
    same = labels[w.row] == labels[w.col]
    intra = np.bincount(labels[w.row[same]], weights=w.data[same], minlength=k) / 2
    strength = np.bincount(labels, weights=g.strength, minlength=k)
    return float((intra / W - (strength / (2 * W)) ** 2).sum())


def nmi(a: Sequence, b: Sequence) -> float:
    """Normalized mutual information with arithmetic-mean normalization."""
    a = np.unique(np.asarray(a), return_inverse=True)[1]
    b = np.unique(np.asarray(b), return_inverse=True)[1]
    n = len(a)
    if n == 0:
        return 1.0
    table = np.zeros((a.max() + 1, b.max() + 1))
    np.add.at(table, (a, b), 1)
    pab = table / n
    pa, pb = pab.sum(axis=1), pab.sum(axis=0)
    nz = pab > 0
    mi = float((pab[nz] * np.log(pab[nz] / np.outer(pa, pb)[nz])).sum())
    ha = float(-(pa[pa > 0] * np.log(pa[pa > 0])).sum())
    hb = float(-(pb[pb > 0] * np.log(pb[pb > 0])).sum())
    if ha == 0 and hb == 0:
        return 1.0
    return mi / ((ha + hb) / 2) if ha + hb > 0 else 0.0
