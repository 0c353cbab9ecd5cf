"""Randomized invariant suites behind ``polarmin validate``.

Every suite reports its worst slack: the smallest margin by which a trial met
its threshold, negative when some trial failed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .baselines import exact_polarization
from .dynamics import SimulationConfig, simulate
from .graph import Graph, LeaderConfig, add_candidate, grounded_laplacian, leader_config
from .greedy_approx import ApproxParams, f_gains_est
from .greedy_exact import exact_gains
from .linalg import dense_inverse, sdd_decompose, solve_handle

__all__ = ["SuiteResult", "approx_equal", "run_suites"]


@dataclass
class SuiteResult:
    name: str
    passed: bool
    trials: int
    worst_slack: float
    detail: str = ""


def approx_equal(a, b, eps):
    """Whether ``b`` is an ``eps``-approximation of ``a``: (1-eps)a <= b <= (1+eps)a."""
    return ((1 - eps) * a <= b) & (b <= (1 + eps) * a)


def _random_config(g: Graph, rng: np.random.Generator, qmax: int = 5) -> LeaderConfig | None:
    for _ in range(20):
        q = int(rng.integers(1, min(qmax, g.n - 1) + 1))
        cfg = leader_config(g, rng.choice(g.n, size=q, replace=False).tolist())
        if len(cfg):
            return cfg
    return None


def _trace_after(g, cfg, edges):
    sys = grounded_laplacian(g, cfg)
    for e in edges:
        sys = add_candidate(sys, e)
    return float(np.trace(np.linalg.inv(sys.dense()))), sys


def gain_identity(graphs, rng, trials=60) -> SuiteResult:
    worst = np.inf
    done = 0
    for _ in range(trials):
        g = graphs[int(rng.integers(len(graphs)))]
        cfg = _random_config(g, rng)
        if cfg is None:
            continue
        e = cfg.candidate(int(rng.integers(len(cfg))))
        r0, sys = _trace_after(g, cfg, [])
        r1, _ = _trace_after(g, cfg, [e])
        gain = exact_gains(sys, dense_inverse(sys), [e])[0].gain
        worst = min(worst, 1e-9 - abs(gain - (r0 - r1)) / abs(r0 - r1))
        done += 1
    return SuiteResult("gain identity", bool(worst >= 0), done, float(worst))


def _nested_sets(cfg, rng):
    order = rng.permutation(len(cfg))
    t = int(rng.integers(1, len(cfg)))
    s = int(rng.integers(0, t))
    return [cfg.candidate(int(i)) for i in order[:s]], [cfg.candidate(int(i)) for i in order[:t]], cfg.candidate(int(order[t]))


def monotone_supermodular(graphs, rng, trials=200) -> tuple[SuiteResult, SuiteResult]:
    w_mono, w_sup = np.inf, np.inf
    done = 0
    for _ in range(trials):
        g = graphs[int(rng.integers(len(graphs)))]
        cfg = _random_config(g, rng)
        if cfg is None or len(cfg) < 2:
            continue
        S, T, e = _nested_sets(cfg, rng)
        rs, _ = _trace_after(g, cfg, S)
        rse, _ = _trace_after(g, cfg, S + [e])
        rt, _ = _trace_after(g, cfg, T)
        rte, _ = _trace_after(g, cfg, T + [e])
        w_mono = min(w_mono, rs - rse, rt - rte)
        w_sup = min(w_sup, (rs - rse) - (rt - rte) + 1e-10)
        done += 1
    return (SuiteResult("monotonicity", bool(w_mono > 0), done, float(w_mono)),
            SuiteResult("supermodularity", bool(w_sup >= 0), done, float(w_sup)))


def split_identity(graphs, rng) -> SuiteResult:
    worst, done = np.inf, 0
    for g in graphs:
        cfg = _random_config(g, rng)
        if cfg is None:
            continue
        sys = grounded_laplacian(g, cfg)
        inv = np.linalg.inv(sys.dense())
        dec = sdd_decompose(sys)
        edge_part = (dec.sqrt_weights[:, None] * (inv[dec.heads] - inv[dec.tails])) ** 2
        diag_part = (dec.sqrt_x[:, None] * inv) ** 2
        total = edge_part.sum(axis=0) + diag_part.sum(axis=0)
        rel = np.abs(total - np.diagonal(inv)) / np.diagonal(inv)
        worst = min(worst, 1e-10 - float(rel.max()))
        done += 1
    return SuiteResult("denominator split identity", bool(worst >= 0), done, float(worst))


def solve_contract(graphs, rng) -> SuiteResult:
    worst, done = np.inf, 0
    for g in graphs:
        cfg = _random_config(g, rng)
        if cfg is None:
            continue
        sys = grounded_laplacian(g, cfg)
        S = sys.dense()
        for delta in (1e-2, 1e-6):
            b = rng.standard_normal(sys.dim)
            x = solve_handle(sys, delta=delta).solve(b)
            xs = np.linalg.solve(S, b)
            err = x - xs
            rel = np.sqrt(err @ S @ err) / np.sqrt(xs @ S @ xs)
            worst = min(worst, delta - rel)
            done += 1
    return SuiteResult("solve contract", bool(worst >= 0), done, float(worst))


def dynamics_check(graphs, rng, seed) -> SuiteResult:
    worst, done = np.inf, 0
    for g in graphs:
        if g.n > 100:
            continue
        cfg = _random_config(g, rng, qmax=3)
        if cfg is None:
            continue
        exact = exact_polarization(g, cfg)
        est = simulate(g, cfg, SimulationConfig(seed=seed, n_paths=8, t_sample=200.0))
        tol = max(3 * est.stderr, 0.05 * exact)
        worst = min(worst, tol - abs(est.value - exact))
        done += 1
    return SuiteResult("simulated polarization", bool(worst >= 0), done, float(worst))


def concentration(graphs, rng, seeds=10, epsilon=0.25) -> SuiteResult:
    hits = total = 0
    for g in graphs:
        if g.n > 100:
            continue
        cfg = _random_config(g, rng)
        if cfg is None:
            continue
        sys = grounded_laplacian(g, cfg)
        exact = np.array([e.gain for e in exact_gains(sys, dense_inverse(sys))])
        for s in range(seeds):
            est = np.array([e.gain for e in f_gains_est(sys, ApproxParams(epsilon=epsilon, seed=s, strict_delta=True))])
            hits += int(np.count_nonzero(approx_equal(exact, est, 3 * epsilon)))
            total += exact.size
    frac = hits / total if total else 1.0
    return SuiteResult("sketch concentration", frac >= 0.9, total, frac - 0.9, f"fraction={frac:.4f}")


def run_suites(graphs: Sequence[tuple[str, Graph]], seed: int = 0, strict_delta: bool = False) -> list[SuiteResult]:
    rng = np.random.default_rng(seed)
    small = [g for _, g in graphs if g.n <= 200]
    dense = [g for _, g in graphs if g.n <= 2000]
    out = [gain_identity(small, rng)] if small else []
    if small:
        out.extend(monotone_supermodular(small, rng))
        out.append(split_identity(small, rng))
    if dense:
        out.append(solve_contract(dense, rng))
    if small:
        out.append(dynamics_check(small, rng, seed))
    if strict_delta and small:
        out.append(concentration(small, rng))
    if not out:
        out.append(SuiteResult("no graph small enough", False, 0, float("nan")))
    return out
