"""Graph and partition serialization: GraphML, edge-list CSV, JSON."""
from __future__ import annotations

import csv
import io
import json
import os
from pathlib import Path
from typing import Iterable

import networkx as nx

from .community import Partition
from .graphcore import CoGraph, StandardInfo

FORMATS = ("graphml", "edge_csv", "json")


def to_networkx(g: CoGraph, part: Partition | None = None) -> nx.Graph:
    labels = part.labels_for(g.nodes) if part is not None else None
    G = nx.Graph(weight_mode=g.weight_mode)
    for i, n in enumerate(g.nodes):
        info = g.info.get(n, StandardInfo())
        attrs = {"domain": info.domain, "kind": info.kind, "mode": info.mode}
        if labels is not None:
            attrs["community"] = int(labels[i])
        G.add_node(n, **attrs)
    for a, b, w in g.edges():
        G.add_edge(a, b, weight=w)
    return G


def from_networkx(G: nx.Graph) -> tuple[CoGraph, Partition | None]:
    nodes = list(G.nodes)
    info = {n: StandardInfo(str(d.get("domain", "")), str(d.get("kind", "")), str(d.get("mode", "")))
            for n, d in G.nodes(data=True)}
    edges = [(a, b, float(d["weight"])) for a, b, d in G.edges(data=True)]
    g = CoGraph.from_edges(nodes, edges, G.graph.get("weight_mode", "raw_count"), info)
    part = None
    if nodes and all("community" in d for _, d in G.nodes(data=True)):
        part = Partition({n: int(d["community"]) for n, d in G.nodes(data=True)})
    return g, part


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def edge_csv_text(g: CoGraph) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["source", "target", "weight"])
    for a, b, wt in g.edges():
        w.writerow([a, b, repr(wt)])
    return buf.getvalue()


def graph_json(g: CoGraph, part: Partition | None = None) -> dict:
    labels = part.labels_for(g.nodes) if part is not None else None
    nodes = []
    for i, n in enumerate(g.nodes):
        info = g.info.get(n, StandardInfo())
        d = {"id": n, "domain": info.domain, "kind": info.kind, "mode": info.mode}
        if labels is not None:
            d["community"] = int(labels[i])
        nodes.append(d)
    return {
        "weight_mode": g.weight_mode,
        "nodes": nodes,
        "edges": [{"source": a, "target": b, "weight": w} for a, b, w in g.edges()],
    }


def export_graph(g: CoGraph, part: Partition | None, fmt: str, path: str | os.PathLike) -> Path:
    """Write ``g`` (with community labels when ``part`` is given) as ``fmt``."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    path = Path(path)
    if fmt == "graphml":
        text = "\n".join(nx.generate_graphml(to_networkx(g, part))) + "\n"
    elif fmt == "edge_csv":
        text = edge_csv_text(g)
    else:
        text = json.dumps(graph_json(g, part), indent=1) + "\n"
    try:
        _atomic_write(path, text)
    except OSError as exc:
        raise OSError(f"cannot write {fmt} to {path}: {exc.strerror or exc}") from exc
    return path


def read_graph(path: str | os.PathLike, fmt: str) -> tuple[CoGraph, Partition | None]:
    path = Path(path)
    if fmt == "graphml":
        return from_networkx(nx.read_graphml(path))
    if fmt == "json":
        data = json.loads(path.read_text(encoding="utf-8"))
        nodes = [d["id"] for d in data["nodes"]]
        info = {d["id"]: StandardInfo(d.get("domain", ""), d.get("kind", ""), d.get("mode", ""))
                for d in data["nodes"]}
        g = CoGraph.from_edges(nodes, ((e["source"], e["target"], float(e["weight"])) for e in data["edges"]),
                               data.get("weight_mode", "raw_count"), info)
        part = None
        if nodes and all("community" in d for d in data["nodes"]):
            part = Partition({d["id"]: int(d["community"]) for d in data["nodes"]})
        return g, part
    if fmt == "edge_csv":
        return read_edge_csv(path), None
    raise ValueError(f"unknown format {fmt!r}")


def read_edge_csv(path: str | os.PathLike, weight_mode: str = "raw_count") -> CoGraph:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    edges = [(r["source"], r["target"], float(r["weight"])) for r in rows]
    nodes = sorted({n for a, b, _ in edges for n in (a, b)})
    return CoGraph.from_edges(nodes, edges, weight_mode)


def partition_csv_text(part: Partition, nodes: Iterable[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["standard_id", "community_label"])
    for n in nodes:
        w.writerow([n, part.assignment[n]])
    return buf.getvalue()


def read_partition_csv(path: str | os.PathLike) -> Partition:
    with open(path, encoding="utf-8", newline="") as fh:
        return Partition({r["standard_id"]: int(r["community_label"]) for r in csv.DictReader(fh)})
