"""Weighted undirected graphs, leader configurations and grounded Laplacians.

Vertex ids are contiguous integers in ``[0, n)``. The original tokens read
from an edge list are kept in ``Graph.labels`` so results can be reported in
the caller's id space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Sequence, TextIO

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import DuplicateEdgeError, ParseError, ValidationError

__all__ = [
    "Graph",
    "CandidateEdge",
    "LeaderConfig",
    "GroundedSystem",
    "load_edge_list",
    "largest_connected_component",
    "write_id_mapping",
    "leader_config",
    "candidate_universe",
    "grounded_laplacian",
    "add_candidate",
    "remove_candidate",
]


@dataclass(frozen=True, eq=False)
class Graph:
    """Simple weighted undirected graph stored as an edge array.

    Edges are kept with ``heads < tails`` and sorted lexicographically, one
    entry per unordered pair.
    """

    n: int
    heads: np.ndarray
    tails: np.ndarray
    weights: np.ndarray
    labels: tuple = field(default=())

    @classmethod
    def from_edges(
        cls,
        n: int,
        edges: Iterable[tuple[int, int] | tuple[int, int, float]],
        labels: Sequence | None = None,
    ) -> Graph:
        """Build a graph, merging parallel edges by summing and dropping self-loops."""
        us, vs, ws = [], [], []
        for e in edges:
            u, v = int(e[0]), int(e[1])
            w = float(e[2]) if len(e) > 2 else 1.0
            us.append(u)
            vs.append(v)
            ws.append(w)
        return cls._build(n, np.asarray(us, dtype=np.int64), np.asarray(vs, dtype=np.int64),
                          np.asarray(ws, dtype=float), labels)

    @classmethod
    def _build(cls, n, u, v, w, labels=None) -> Graph:
        if n < 0:
            raise ValidationError("vertex count must be nonnegative")
        if u.size and (min(u.min(), v.min()) < 0 or max(u.max(), v.max()) >= n):
            raise ValidationError(f"vertex id out of range [0, {n})")
        if w.size and not (np.all(np.isfinite(w)) and np.all(w > 0)):
            raise ValidationError("edge weights must be finite and strictly positive")
        keep = u != v
        u, v, w = u[keep], v[keep], w[keep]
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        if lo.size:
            # coo -> csr sums duplicates; sorted indices give the canonical order
            mat = sp.coo_matrix((w, (lo, hi)), shape=(n, n)).tocsr()
            mat.sum_duplicates()
            mat.sort_indices()
            coo = mat.tocoo()
            lo, hi, w = coo.row.astype(np.int64), coo.col.astype(np.int64), coo.data.astype(float)
        if labels is None:
            labels = tuple(range(n))
        elif len(labels) != n:
            raise ValidationError("labels must have one entry per vertex")
        return cls(n=n, heads=lo, tails=hi, weights=w, labels=tuple(labels))

    @property
    def m(self) -> int:
        return int(self.weights.size)

    @property
    def edges(self) -> list[tuple[int, int, float]]:
        return list(zip(self.heads.tolist(), self.tails.tolist(), self.weights.tolist()))

    @property
    def w_min(self) -> float:
        return float(self.weights.min()) if self.m else math.nan

    @property
    def w_max(self) -> float:
        return float(self.weights.max()) if self.m else math.nan

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Symmetric weighted adjacency matrix (CSR, sorted indices)."""
        rows = np.concatenate([self.heads, self.tails])
        cols = np.concatenate([self.tails, self.heads])
        data = np.concatenate([self.weights, self.weights])
        a = sp.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))
        a.sort_indices()
        return a

    @cached_property
    def degree(self) -> np.ndarray:
        """Weighted degrees."""
        deg = np.zeros(self.n)
        np.add.at(deg, self.heads, self.weights)
        np.add.at(deg, self.tails, self.weights)
        return deg

    def neighbors(self, u: int) -> tuple[np.ndarray, np.ndarray]:
        a = self.adjacency
        lo, hi = a.indptr[u], a.indptr[u + 1]
        return a.indices[lo:hi], a.data[lo:hi]

    def has_edge(self, u: int, v: int) -> bool:
        nbrs, _ = self.neighbors(u)
        i = np.searchsorted(nbrs, v)
        return bool(i < nbrs.size and nbrs[i] == v)

    def laplacian(self) -> sp.csr_matrix:
        lap = (sp.diags(self.degree) - self.adjacency).tocsr()
        lap.sort_indices()
        return lap

    def incidence(self) -> sp.csr_matrix:
        """Signed m x n incidence matrix: +1 at the head, -1 at the tail."""
        rows = np.repeat(np.arange(self.m), 2)
        cols = np.column_stack([self.heads, self.tails]).ravel()
        data = np.tile([1.0, -1.0], self.m)
        return sp.csr_matrix((data, (rows, cols)), shape=(self.m, self.n))

    def components(self) -> tuple[int, np.ndarray]:
        return connected_components(self.adjacency, directed=False)

    def is_connected(self) -> bool:
        return self.n > 0 and self.components()[0] == 1

    def subgraph(self, vertices: Sequence[int]) -> Graph:
        """Induced subgraph; ids recompacted in ascending order of ``vertices``."""
        keep = np.unique(np.asarray(vertices, dtype=np.int64))
        remap = np.full(self.n, -1, dtype=np.int64)
        remap[keep] = np.arange(keep.size)
        mask = (remap[self.heads] >= 0) & (remap[self.tails] >= 0)
        labels = tuple(self.labels[i] for i in keep.tolist())
        return Graph(n=int(keep.size), heads=remap[self.heads[mask]], tails=remap[self.tails[mask]],
                     weights=self.weights[mask].copy(), labels=labels)

    def label_index(self) -> dict:
        return {lab: i for i, lab in enumerate(self.labels)}

    def __repr__(self) -> str:
        return f"Graph(n={self.n}, m={self.m})"


def _label_key(token: str):
    try:
        return (0, int(token), token)
    except ValueError:
        return (1, 0, token)


def load_edge_list(
    stream: TextIO | Iterable[str],
    weighted: bool | None = None,
    comment_prefixes: Sequence[str] = ("#", "%"),
) -> Graph:
    """Parse ``u v [w]`` lines into a :class:`Graph`.

    ``weighted=None`` uses a third column when present; ``False`` ignores it;
    ``True`` requires it. Extra columns (KONECT timestamps) are ignored.
    Integer tokens are compacted in numeric order, others in lexical order.
    """
    prefixes = tuple(comment_prefixes)
    src, dst, wts = [], [], []
    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line or line.startswith(prefixes):
            continue
        parts = line.replace(",", " ").split()
        if len(parts) < 2:
            raise ParseError(f"expected 'u v [w]', got {line!r}", lineno)
        w = 1.0
        if weighted is True and len(parts) < 3:
            raise ParseError("missing weight column", lineno)
        if weighted is not False and len(parts) >= 3:
            try:
                w = float(parts[2])
            except ValueError:
                raise ParseError(f"bad weight {parts[2]!r}", lineno) from None
            if not (math.isfinite(w) and w > 0):
                raise ValidationError(f"line {lineno}: nonpositive or non-finite weight {w}")
        src.append(parts[0])
        dst.append(parts[1])
        wts.append(w)

    tokens = sorted(set(src) | set(dst), key=_label_key)
    index = {t: i for i, t in enumerate(tokens)}
    labels = tuple(int(t) if _label_key(t)[0] == 0 else t for t in tokens)
    u = np.fromiter((index[t] for t in src), dtype=np.int64, count=len(src))
    v = np.fromiter((index[t] for t in dst), dtype=np.int64, count=len(dst))
    return Graph._build(len(tokens), u, v, np.asarray(wts, dtype=float), labels)


def largest_connected_component(g: Graph, return_mapping: bool = False):
    """Induced subgraph on the largest component.

    Ties go to the component holding the smallest vertex id. With
    ``return_mapping`` also returns the array mapping new ids to ids of ``g``.
    """
    if g.n == 0:
        raise ValidationError("empty graph has no components")
    ncomp, lab = g.components()
    sizes = np.bincount(lab, minlength=ncomp)
    first = np.full(ncomp, g.n, dtype=np.int64)
    np.minimum.at(first, lab, np.arange(g.n))
    best = min(range(ncomp), key=lambda c: (-sizes[c], first[c]))
    verts = np.flatnonzero(lab == best)
    sub = g.subgraph(verts)
    return (sub, verts) if return_mapping else sub


def write_id_mapping(stream: TextIO, g: Graph) -> None:
    """Write ``orig_id new_id`` lines for a (sub)graph with carried labels."""
    for new, orig in enumerate(g.labels):
        stream.write(f"{orig} {new}\n")


@dataclass(frozen=True)
class CandidateEdge:
    leader: int
    follower: int
    weight: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.weight) and self.weight > 0):
            raise ValidationError(f"candidate weight must be positive, got {self.weight}")

    @property
    def key(self) -> tuple[int, int]:
        return (self.follower, self.leader)


@dataclass(frozen=True, eq=False)
class LeaderConfig:
    """Leader set, candidate edges and follower ordering.

    Candidates are stored as parallel arrays sorted by (follower, leader);
    ``follower_index[v]`` is the row of ``v`` in the grounded Laplacian or -1
    for leaders.
    """

    n: int
    leaders: tuple[int, ...]
    followers: np.ndarray
    follower_index: np.ndarray
    cand_leader: np.ndarray
    cand_follower: np.ndarray
    cand_weight: np.ndarray

    @property
    def q(self) -> int:
        return len(self.leaders)

    @property
    def dim(self) -> int:
        return int(self.followers.size)

    def __len__(self) -> int:
        return int(self.cand_leader.size)

    def candidate(self, i: int) -> CandidateEdge:
        return CandidateEdge(int(self.cand_leader[i]), int(self.cand_follower[i]),
                             float(self.cand_weight[i]))

    @property
    def candidates(self) -> list[CandidateEdge]:
        return [self.candidate(i) for i in range(len(self))]

    def iter_candidates(self) -> Iterator[CandidateEdge]:
        for i in range(len(self)):
            yield self.candidate(i)

    @cached_property
    def _keys(self) -> np.ndarray:
        return self.cand_follower * self.n + self.cand_leader

    def find(self, e: CandidateEdge) -> int:
        """Index of ``e`` among the candidates (weight must match), or -1."""
        key = e.follower * self.n + e.leader
        i = int(np.searchsorted(self._keys, key))
        if i < len(self) and self._keys[i] == key and self.cand_weight[i] == e.weight:
            return i
        return -1

    @cached_property
    def cand_row(self) -> np.ndarray:
        """Grounded-Laplacian row of each candidate's follower."""
        return self.follower_index[self.cand_follower]


def _sorted_candidates(lead, foll, wts):
    order = np.lexsort((lead, foll))
    return lead[order], foll[order], wts[order]


def candidate_universe(g: Graph, leaders: Iterable[int], weight: float = 1.0) -> list[CandidateEdge]:
    """All absent (leader, follower) pairs with the given weight, by (follower, leader)."""
    lead, foll, wts = _universe_arrays(g, sorted(set(int(v) for v in leaders)), weight)
    return [CandidateEdge(int(a), int(b), float(c)) for a, b, c in zip(lead, foll, wts)]


def _universe_arrays(g: Graph, leaders: list[int], weight: float):
    if not (math.isfinite(weight) and weight > 0):
        raise ValidationError(f"candidate weight must be positive, got {weight}")
    is_leader = np.zeros(g.n, dtype=bool)
    is_leader[leaders] = True
    lead_parts, foll_parts = [], []
    for v in leaders:
        absent = ~is_leader.copy()
        nbrs, _ = g.neighbors(v)
        absent[nbrs] = False
        f = np.flatnonzero(absent)
        lead_parts.append(np.full(f.size, v, dtype=np.int64))
        foll_parts.append(f.astype(np.int64))
    lead = np.concatenate(lead_parts) if lead_parts else np.zeros(0, np.int64)
    foll = np.concatenate(foll_parts) if foll_parts else np.zeros(0, np.int64)
    return _sorted_candidates(lead, foll, np.full(lead.size, float(weight)))


def leader_config(
    g: Graph,
    leaders: Iterable[int],
    candidates: Iterable[CandidateEdge] | None = None,
    weight: float = 1.0,
) -> LeaderConfig:
    """Validate a leader set and its candidates.

    ``candidates=None`` uses the full universe of absent leader-follower pairs
    with weight ``weight``.
    """
    lset = sorted(set(int(v) for v in leaders))
    if not lset:
        raise ValidationError("leader set must be nonempty")
    if lset[0] < 0 or lset[-1] >= g.n:
        raise ValidationError("leader id out of range")
    if len(lset) >= g.n:
        raise ValidationError("leader set must be a proper subset of V")
    is_leader = np.zeros(g.n, dtype=bool)
    is_leader[lset] = True
    followers = np.flatnonzero(~is_leader)
    findex = np.full(g.n, -1, dtype=np.int64)
    findex[followers] = np.arange(followers.size)

    if candidates is None:
        lead, foll, wts = _universe_arrays(g, lset, weight)
    else:
        cands = list(candidates)
        lead = np.array([c.leader for c in cands], dtype=np.int64)
        foll = np.array([c.follower for c in cands], dtype=np.int64)
        wts = np.array([c.weight for c in cands], dtype=float)
        if lead.size:
            if min(lead.min(), foll.min()) < 0 or max(lead.max(), foll.max()) >= g.n:
                raise ValidationError("candidate endpoint out of range")
            if not np.all(is_leader[lead]):
                raise ValidationError("candidate leader endpoint is not in Q")
            if np.any(is_leader[foll]):
                raise ValidationError("candidate follower endpoint is in Q")
            for a, b in zip(lead.tolist(), foll.tolist()):
                if g.has_edge(a, b):
                    raise ValidationError(f"candidate ({a}, {b}) duplicates an existing edge")
        lead, foll, wts = _sorted_candidates(lead, foll, wts)
        keys = foll * g.n + lead
        if keys.size and np.any(np.diff(keys) == 0):
            raise ValidationError("duplicate candidate pair")
    return LeaderConfig(n=g.n, leaders=tuple(lset), followers=followers, follower_index=findex,
                        cand_leader=lead, cand_follower=foll, cand_weight=wts)


@dataclass(frozen=True, eq=False)
class GroundedSystem:
    """Grounded Laplacian of the graph augmented with ``added`` edges.

    ``base`` is L_Q of the original graph; the augmented matrix adds
    ``diag_bump`` on the diagonal. Instances are immutable: adding or
    removing a candidate returns a new system.
    """

    graph: Graph
    config: LeaderConfig
    base: sp.csr_matrix
    added: tuple[CandidateEdge, ...] = ()
    diag_bump: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.diag_bump is None:
            object.__setattr__(self, "diag_bump", _bump(self.config, self.added))

    @property
    def dim(self) -> int:
        return self.config.dim

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        mat = (self.base + sp.diags(self.diag_bump)).tocsr()
        mat.sort_indices()
        return mat

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    @cached_property
    def leader_conductance(self) -> np.ndarray:
        """Per-follower total weight of original edges into Q."""
        g, fi = self.graph, self.config.follower_index
        out = np.zeros(self.dim)
        hu, tv = fi[g.heads], fi[g.tails]
        to_q = (hu >= 0) & (tv < 0)
        np.add.at(out, hu[to_q], g.weights[to_q])
        to_q = (tv >= 0) & (hu < 0)
        np.add.at(out, tv[to_q], g.weights[to_q])
        return out

    @property
    def n_added(self) -> int:
        return len(self.added)


def _bump(cfg: LeaderConfig, added: Sequence[CandidateEdge]) -> np.ndarray:
    # Recomputed from scratch in insertion order so removal restores the exact bits.
    bump = np.zeros(cfg.dim)
    for e in added:
        bump[cfg.follower_index[e.follower]] += e.weight
    return bump


def grounded_laplacian(g: Graph, cfg: LeaderConfig) -> GroundedSystem:
    """L_Q with rows/columns ordered by ascending follower id."""
    if cfg.n != g.n:
        raise ValidationError("leader config built for a different graph")
    if not g.is_connected():
        raise ValidationError("graph must be connected for L_Q to be positive definite")
    lap = g.laplacian()
    f = cfg.followers
    lq = lap[f][:, f].tocsr()
    lq.sort_indices()
    return GroundedSystem(graph=g, config=cfg, base=lq)


def add_candidate(sys: GroundedSystem, e: CandidateEdge) -> GroundedSystem:
    """Return the system with candidate ``e`` added (a diagonal bump)."""
    if e in sys.added:
        raise DuplicateEdgeError(f"candidate {e} already added")
    if sys.config.find(e) < 0:
        raise ValidationError(f"{e} is not a candidate of this configuration")
    return GroundedSystem(graph=sys.graph, config=sys.config, base=sys.base,
                          added=sys.added + (e,))


def remove_candidate(sys: GroundedSystem, e: CandidateEdge) -> GroundedSystem:
    if e not in sys.added:
        raise ValidationError(f"candidate {e} was not added")
    added = list(sys.added)
    added.remove(e)
    return GroundedSystem(graph=sys.graph, config=sys.config, base=sys.base, added=tuple(added))
