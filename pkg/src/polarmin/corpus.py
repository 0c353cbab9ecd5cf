"""Small named graphs and seeded synthetic generators used by tests and the CLI."""

from __future__ import annotations

import io
from typing import Callable

import networkx as nx

from .errors import ValidationError
from .graph import Graph, largest_connected_component

__all__ = ["CORPUS", "SMALL_CORPUS", "corpus_graph", "synthetic", "from_networkx", "write_edge_list"]


def from_networkx(G: nx.Graph, weighted: bool = False) -> Graph:
    """Unit-weight (or ``weight``-attribute) copy of ``G`` on its largest component."""
    nodes = sorted(G.nodes(), key=lambda v: (str(type(v)), v))
    index = {v: i for i, v in enumerate(nodes)}
    edges = [(index[a], index[b], float(d.get("weight", 1.0)) if weighted else 1.0) for a, b, d in G.edges(data=True)]
    g = Graph.from_edges(len(nodes), edges, labels=tuple(nodes))
    return largest_connected_component(g)


def synthetic(kind: str, n: int, seed: int = 0) -> Graph:
    """Seeded sparse graphs: ``ba`` (m=3), ``ws`` (k=6, p=0.1), ``grid``, ``rgg`` (mean degree ~8)."""
    if kind == "ba":
        G = nx.barabasi_albert_graph(n, 3, seed=seed)
    elif kind == "ws":
        G = nx.connected_watts_strogatz_graph(n, 6, 0.1, seed=seed)
    elif kind == "grid":
        side = max(2, round(n**0.5))
        G = nx.convert_node_labels_to_integers(nx.grid_2d_graph(side, side))
    elif kind == "rgg":
        radius = (8.0 / (3.141592653589793 * n)) ** 0.5
        G = nx.random_geometric_graph(n, radius, seed=seed)
    else:
        raise ValidationError(f"unknown synthetic graph kind {kind!r}")
    return from_networkx(G)


CORPUS: dict[str, Callable[[], Graph]] = {
    "karate": lambda: from_networkx(nx.karate_club_graph()),
    "florentine": lambda: from_networkx(nx.florentine_families_graph()),
    "lesmis": lambda: from_networkx(nx.les_miserables_graph()),
    "davis": lambda: from_networkx(nx.davis_southern_women_graph()),
    "ba1000": lambda: synthetic("ba", 1000, seed=1),
    "ws2000": lambda: synthetic("ws", 2000, seed=2),
    "grid1600": lambda: synthetic("grid", 1600),
    "rgg3000": lambda: synthetic("rgg", 3000, seed=3),
    "ba5000": lambda: synthetic("ba", 5000, seed=5),
}

SMALL_CORPUS = ("karate", "florentine", "lesmis", "davis")


def corpus_graph(name: str) -> Graph:
    try:
        return CORPUS[name]()
    except KeyError:
        raise ValidationError(f"unknown corpus graph {name!r}; choose from {sorted(CORPUS)}") from None


def write_edge_list(g: Graph, stream: io.TextIOBase | None = None, weighted: bool = False) -> str | None:
    """Write ``g`` as "u v [w]" lines using its labels when present."""
    out = stream or io.StringIO()
    lab = g.labels if g.labels else range(g.n)
    for u, v, w in g.edges:
        a, b = str(lab[u]).replace(" ", "_"), str(lab[v]).replace(" ", "_")
        out.write(f"{a} {b} {w!r}\n" if weighted else f"{a} {b}\n")
    return out.getvalue() if stream is None else None
