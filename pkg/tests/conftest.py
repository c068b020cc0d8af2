import itertools
from datetime import timedelta

import numpy as np
import pytest
from hypothesis import settings

from coenet.graphcore import CoGraph
from coenet.ingest import BlockSpec, GeneratorConfig, GroupSpec

settings.register_profile("default", max_examples=60, deadline=timedelta(milliseconds=5000))
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def dense_graph(mat, names=None, mode="raw_count") -> CoGraph:
    mat = np.asarray(mat, dtype=float)
    names = names or [f"n{i}" for i in range(len(mat))]
    return CoGraph(tuple(names), mat, mode)


def random_weighted_graph(rng, n, density=0.5, integer=False) -> CoGraph:
    w = rng.integers(1, 10, size=(n, n)).astype(float) if integer else rng.uniform(0.1, 5.0, size=(n, n))
    mask = rng.random((n, n)) < density
    w = np.triu(w * mask, 1)
    w = w + w.T
    # keep it connected with a ring so no node is isolated
    for i in range(n):
        j = (i + 1) % n
        if n > 1 and w[i, j] == 0:
            w[i, j] = w[j, i] = 1.0
    return dense_graph(w)


def barbell(k=5) -> CoGraph:
    names = [f"n{i}" for i in range(2 * k)]
    edges = [(names[i], names[j], 1.0) for c in (range(k), range(k, 2 * k)) for i, j in itertools.combinations(c, 2)]
    edges.append((names[k - 1], names[k], 1.0))
    return CoGraph.from_edges(names, edges)


def planted_config(n_students=400, within=0.85, blocks=4, size=25) -> GeneratorConfig:
    off = (1 - within) / (blocks - 1)
    groups = tuple(
        GroupSpec(f"g{b}", n_students, tuple(within if j == b else off for j in range(blocks)))
        for b in range(blocks)
    )
    return GeneratorConfig(
        blocks=tuple(BlockSpec(f"b{b}", size) for b in range(blocks)),
        groups=groups,
        years=(2016,),
        standards_per_student=(8, 12),
        spill=0.0,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
