"""Comparison strategies, the brute-force optimum and the exact polarization."""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CapacityError, ValidationError
from .graph import CandidateEdge, Graph, LeaderConfig, add_candidate, grounded_laplacian
from .greedy_approx import ApproxParams, sketched_trace
from .greedy_exact import SelectionResult, _check_budget, effective_resistance, exact_trajectory
from .linalg import DEFAULT_DENSE_CAP, dense_inverse

__all__ = [
    "STRATEGIES",
    "StrategyTag",
    "BRUTE_FORCE_CAP",
    "run_random",
    "run_top_degree",
    "run_top_cent",
    "centrality_scores",
    "brute_force_size",
    "run_brute_force",
    "exact_polarization",
    "selection_trajectory",
]

STRATEGIES = ("Random", "TopDegree", "TopCent", "BruteForce")
BRUTE_FORCE_CAP = 10**6


@dataclass(frozen=True)
class StrategyTag:
    name: str
    seed: int | None = None

    def __post_init__(self):
        if self.name not in STRATEGIES:
            raise ValidationError(f"unknown strategy {self.name!r}; expected one of {STRATEGIES}")


def selection_trajectory(
    g: Graph,
    cfg: LeaderConfig,
    chosen: Sequence[CandidateEdge],
    dense_cap: int = DEFAULT_DENSE_CAP,
    params: ApproxParams | None = None,
) -> list[float]:
    """R_Q after each prefix of ``chosen``: exact within the cap, sketched above it."""
    if cfg.dim <= dense_cap:
        return exact_trajectory(g, cfg, chosen, dense_cap)
    params = params or ApproxParams()
    sys = grounded_laplacian(g, cfg)
    out = [sketched_trace(sys, params, stream=0)]
    for i, e in enumerate(chosen, start=1):
        sys = add_candidate(sys, e)
        out.append(sketched_trace(sys, params, stream=i))
    return out


def _result(name, g, cfg, chosen, t0, dense_cap, params, meta):
    traj = selection_trajectory(g, cfg, chosen, dense_cap, params)
    meta = dict(meta, dense_cap=dense_cap)
    return SelectionResult(name, list(chosen), traj, [time.perf_counter() - t0], meta)


def run_random(
    g: Graph,
    cfg: LeaderConfig,
    k: int,
    seed: int = 0,
    dense_cap: int = DEFAULT_DENSE_CAP,
    params: ApproxParams | None = None,
) -> SelectionResult:
    """``k`` candidates drawn uniformly without replacement."""
    _check_budget(cfg, k)
    t0 = time.perf_counter()
    idx = np.random.default_rng(seed).choice(len(cfg), size=k, replace=False)
    chosen = [cfg.candidate(int(i)) for i in idx]
    return _result("random", g, cfg, chosen, t0, dense_cap, params, {"seed": seed})


def _link_ranked(cfg: LeaderConfig, ranking: np.ndarray, k: int, rng: np.random.Generator) -> list[CandidateEdge]:
    """Walk followers in rank order, linking each to random distinct available leaders."""
    _check_budget(cfg, k)
    chosen: list[CandidateEdge] = []
    starts = np.searchsorted(cfg.cand_follower, ranking, side="left")
    stops = np.searchsorted(cfg.cand_follower, ranking, side="right")
    for lo, hi in zip(starts, stops):
        if len(chosen) == k:
            break
        if hi == lo:
            continue
        take = min(k - len(chosen), hi - lo)
        picks = rng.choice(np.arange(lo, hi), size=take, replace=False)
        chosen.extend(cfg.candidate(int(i)) for i in picks)
    if len(chosen) < k:
        raise ValidationError(f"only {len(chosen)} of the requested {k} edges could be placed")
    return chosen


def run_top_degree(
    g: Graph,
    cfg: LeaderConfig,
    k: int,
    seed: int = 0,
    dense_cap: int = DEFAULT_DENSE_CAP,
    params: ApproxParams | None = None,
) -> SelectionResult:
    """Highest weighted-degree followers first (ties: smaller id), random leaders each."""
    t0 = time.perf_counter()
    f = cfg.followers
    ranking = f[np.lexsort((f, -g.degree[f]))]
    chosen = _link_ranked(cfg, ranking, k, np.random.default_rng(seed))
    return _result("top-degree", g, cfg, chosen, t0, dense_cap, params, {"seed": seed})


def centrality_scores(
    g: Graph, cfg: LeaderConfig, score: str = "resistance", dense_cap: int = DEFAULT_DENSE_CAP
) -> np.ndarray:
    """Per-follower score, smaller meaning more central.

    ``"resistance"``: resistance centrality Tr(L_{v}^{-1}) = n L+_vv + Tr(L+) of
    the whole graph. ``"grounded"``: (L_Q^{-1})_uu, the resistance to the leaders.
    """
    if score == "grounded":
        return np.diagonal(dense_inverse(grounded_laplacian(g, cfg), dense_cap).inv).copy()
    if score != "resistance":
        raise ValidationError(f"unknown centrality score {score!r}")
    n = g.n
    if n > dense_cap:
        raise CapacityError(f"resistance centrality on {n} vertices exceeds dense cap {dense_cap}")
    shifted = g.laplacian().toarray() + 1.0 / n
    pinv = np.linalg.inv(shifted) - 1.0 / n
    diag = np.diagonal(pinv)
    return (n * diag + diag.sum())[cfg.followers]


def run_top_cent(
    g: Graph,
    cfg: LeaderConfig,
    k: int,
    seed: int = 0,
    score: str = "resistance",
    dense_cap: int = DEFAULT_DENSE_CAP,
    params: ApproxParams | None = None,
) -> SelectionResult:
    """Most central followers first (smallest score, ties: smaller id), random leaders each.

    Scores are rounded to nine significant digits before ranking so that values
    equal up to rounding noise fall back to the id order.
    """
    t0 = time.perf_counter()
    s = centrality_scores(g, cfg, score, dense_cap)
    scale = float(np.max(np.abs(s))) if s.size else 1.0
    quant = np.round(s / (scale or 1.0), 9)
    f = cfg.followers
    ranking = f[np.lexsort((f, quant))]
    chosen = _link_ranked(cfg, ranking, k, np.random.default_rng(seed))
    return _result("top-cent", g, cfg, chosen, t0, dense_cap, params, {"seed": seed, "score": score})


# -- brute force ------------------------------------------------------------

def _follower_options(cfg: LeaderConfig, k: int):
    """Per follower: distinct (count, bump) choices with their smallest edge subset."""
    rows = cfg.cand_row
    out = []
    for u in np.unique(rows):
        idx = np.flatnonzero(rows == u)
        best: dict[tuple[int, float], tuple[int, ...]] = {}
        for c in range(1, min(k, idx.size) + 1):
            for sub in itertools.combinations(idx.tolist(), c):
                key = (c, math.fsum(cfg.cand_weight[list(sub)]))
                if key not in best:
                    best[key] = sub  # combinations come in lexicographic order
        out.append((int(u), sorted(best.items())))
    return out


def _count_configs(options, k: int) -> int:
    ways = [1] + [0] * k
    for _, opts in options:
        nxt = ways.copy()
        for (c, _), _sub in opts:
            for used in range(k - c + 1):
                nxt[used + c] += ways[used]
        ways = nxt
    return ways[k]


def brute_force_size(cfg: LeaderConfig, k: int) -> int:
    """Number of distinct objective evaluations an exhaustive search needs.

    Edge sets that put the same total weight on the same followers give the
    same grounded matrix, so only those bump patterns are enumerated.
    """
    _check_budget(cfg, k)
    return _count_configs(_follower_options(cfg, k), k)


def _enumerate(options, k: int):
    def rec(i, left):
        if left == 0:
            yield ()
            return
        if i == len(options):
            return
        yield from rec(i + 1, left)
        u, opts = options[i]
        for (c, bump), sub in opts:
            if c <= left:
                for rest in rec(i + 1, left - c):
                    yield ((u, bump, sub),) + rest

    yield from rec(0, k)


def _batched_traces(M: np.ndarray, M2: np.ndarray, F: np.ndarray, D: np.ndarray) -> np.ndarray:
    """tr((M^-1 + sum_j D_j e_Fj e_Fj^T)^-1) for every row of F, D (Woodbury)."""
    base = np.trace(M)
    if F.shape[1] == 0:
        return np.full(F.shape[0], base)
    A = M[F[:, :, None], F[:, None, :]]
    idx = np.arange(F.shape[1])
    A[:, idx, idx] += 1.0 / D
    Bm = M2[F[:, :, None], F[:, None, :]]
    return base - np.trace(np.linalg.solve(A, Bm), axis1=1, axis2=2)


def run_brute_force(
    g: Graph,
    cfg: LeaderConfig,
    k: int,
    cap: int = BRUTE_FORCE_CAP,
    dense_cap: int = DEFAULT_DENSE_CAP,
    chunk: int = 20000,
) -> SelectionResult:
    """Exact minimizer of R_Q over all ``k``-subsets of the candidates.

    Ties (relative 1e-12) go to the lexicographically smallest sorted edge list.
    """
    t0 = time.perf_counter()
    _check_budget(cfg, k)
    options = _follower_options(cfg, k)
    total = _count_configs(options, k)
    if total > cap:
        raise CapacityError(f"brute force needs {total} evaluations, cap is {cap}")
    sys = grounded_laplacian(g, cfg)
    M = dense_inverse(sys, dense_cap).inv
    M2 = M @ M
    best_val, best_key = math.inf, None
    by_size: dict[int, list] = {}

    def flush(size):
        nonlocal best_val, best_key
        items = by_size.pop(size, [])
        if not items:
            return
        F = np.array([[u for u, _, _ in it] for it in items], dtype=np.int64).reshape(len(items), size)
        D = np.array([[b for _, b, _ in it] for it in items], dtype=float).reshape(len(items), size)
        vals = _batched_traces(M, M2, F, D)
        if best_key is not None and float(vals.min()) > best_val * (1 + 1e-12):
            return
        for j in np.argsort(vals, kind="stable"):
            v = float(vals[j])
            if best_key is not None and v > best_val * (1 + 1e-12):
                break
            key = tuple(sorted(i for _, _, sub in items[j] for i in sub))
            if best_key is None or v < best_val * (1 - 1e-12):
                best_val, best_key = v, key
            elif key < best_key:
                best_val, best_key = min(v, best_val), key

    for cfg_ in _enumerate(options, k):
        size = len(cfg_)
        by_size.setdefault(size, []).append(cfg_)
        if len(by_size[size]) >= chunk:
            flush(size)
    for size in list(by_size):
        flush(size)
    chosen = [cfg.candidate(i) for i in best_key]
    traj = exact_trajectory(g, cfg, chosen, dense_cap)
    return SelectionResult("brute-force", chosen, traj, [time.perf_counter() - t0],
                           {"evaluations": total, "cap": cap})


def exact_polarization(g: Graph, cfg: LeaderConfig, dense_cap: int = DEFAULT_DENSE_CAP) -> float:
    """Steady-state polarization, half the trace of L_Q^{-1}."""
    sys = grounded_laplacian(g, cfg)
    if sys.dim > dense_cap:
        raise CapacityError(f"dense inverse of dimension {sys.dim} exceeds cap {dense_cap}")
    return 0.5 * effective_resistance(sys, dense_cap)
