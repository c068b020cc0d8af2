"""Revealed Comparative Preference weighting and threshold pruning."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import scipy.sparse as sp

from .graphcore import RAW_COUNT, RCP, CoGraph

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RcpResult:
    graph: CoGraph
    removed_edges: int
    removed_isolates: int
    nodes_before: int
    edges_before: int

    @property
    def nodes_after(self) -> int:
        return self.graph.n_nodes

    @property
    def edges_after(self) -> int:
        return self.graph.n_edges

    def report(self) -> dict:
        return {
            "edges_removed": self.removed_edges,
            "isolates_removed": self.removed_isolates,
            "nodes_before": self.nodes_before,
            "nodes_after": self.nodes_after,
            "edges_before": self.edges_before,
            "edges_after": self.edges_after,
        }


def compute_rcp(g: CoGraph) -> CoGraph:
    """Re-weight a raw co-enrolment graph by RCP.

    RCP(i, j) = (x_ij / s_i) / (s_j / T) = x_ij * T / (s_i * s_j), with s the
    row sums and T the sum over all ordered pairs.  Zero-strength nodes have
    no defined RCP and are dropped (logged) before computing.
    """
    if g.weight_mode != RAW_COUNT:
        raise ValueError(f"compute_rcp expects a raw_count graph, got {g.weight_mode}")
    if g.n_edges == 0:
        raise ValueError("compute_rcp needs at least one edge")
    if (g.weights.data <= 0).any():
        raise ValueError("raw co-enrolment weights must be positive")
    h = g.drop_isolates()
    if h.n_nodes < g.n_nodes:
        log.info("compute_rcp: dropped %d zero-strength node(s)", g.n_nodes - h.n_nodes)
    s = h.strength
    total = s.sum()
    w = h.weights.tocoo()
    vals = w.data * total / (s[w.row] * s[w.col])
    rcp = sp.csr_matrix((vals, (w.row, w.col)), shape=w.shape)
    return h.with_weights(rcp, RCP)


def prune(g: CoGraph, threshold: float = 1.0) -> RcpResult:
    """Drop edges with weight strictly below ``threshold``, then isolated nodes."""
    if g.weight_mode != RCP:
        raise ValueError(f"prune expects an rcp graph, got {g.weight_mode}")
    w = g.weights.copy()
    w.data[w.data < threshold] = 0.0
    w.eliminate_zeros()
    kept = g.with_weights(w, RCP)
    pruned = kept.drop_isolates()
    return RcpResult(
        graph=pruned,
        removed_edges=g.n_edges - kept.n_edges,
        removed_isolates=kept.n_nodes - pruned.n_nodes,
        nodes_before=g.n_nodes,
        edges_before=g.n_edges,
    )

