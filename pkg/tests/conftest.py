from __future__ import annotations

import io

import networkx as nx
import numpy as np
import pytest

from polarmin.graph import Graph, add_candidate, grounded_laplacian, leader_config, load_edge_list

CRITERIA: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA):
            terminalreporter.write_line(line)


def report(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    CRITERIA.append(line)
    print(line)


def parse(text: str, **kw) -> Graph:
    return load_edge_list(io.StringIO(text), **kw)


def trace_inv(g, cfg, edges=()):
    """Oracle: R_Q from a fresh numpy inverse of the augmented grounded Laplacian."""
    sys = grounded_laplacian(g, cfg)
    for e in edges:
        sys = add_candidate(sys, e)
    return float(np.trace(np.linalg.inv(sys.dense())))


def random_connected(n: int, rng: np.random.Generator, p: float = 0.25, weighted: bool = True) -> Graph:
    while True:
        G = nx.gnp_random_graph(n, p, seed=int(rng.integers(2**31)))
        if nx.is_connected(G):
            break
    edges = [(a, b, float(rng.uniform(0.5, 2.0)) if weighted else 1.0) for a, b in G.edges()]
    return Graph.from_edges(n, edges)


@pytest.fixture
def p3():
    """Path 1-2-3 with leader 3 (internal ids 0, 1, 2)."""
    g = parse("1 2\n2 3\n")
    return g, leader_config(g, [2])


@pytest.fixture
def k3():
    g = Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)])
    return g, leader_config(g, [0])


@pytest.fixture
def p4():
    """Path 1-2-3-4 with leader 4 (internal ids 0..3)."""
    g = parse("1 2\n2 3\n3 4\n")
    return g, leader_config(g, [3])


@pytest.fixture
def karate():
    from polarmin.corpus import corpus_graph

    return corpus_graph("karate")
