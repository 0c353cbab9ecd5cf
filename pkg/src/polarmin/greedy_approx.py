"""Sketch-based gain estimation and the approximate greedy.

Every probe ``i`` draws three sign vectors from its own counter-based stream:
a node-space vector for the numerator ``||L^{-1} e_u||^2`` and an edge-space
plus a diagonal-space vector whose solves add up to the denominator
``e_u^T L^{-1} e_u``. Probes are processed in fixed-size blocks whose partial
sums are reduced in block order, so results do not depend on the number of
worker threads.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConvergenceError, ValidationError
from .graph import Graph, GroundedSystem, LeaderConfig, add_candidate, grounded_laplacian
from .greedy_exact import GainEstimate, SelectionResult, _check_budget
from . import _kernels
from .linalg import SddDecomposition, probe_rng, sdd_decompose, sketch_dimension, solve_handle

__all__ = [
    "ApproxParams",
    "SketchAccumulators",
    "theoretical_deltas",
    "gains_est",
    "f_gains_est",
    "sketched_trace",
    "run_approx",
]

DELTA_FLOOR = 1e-12


@dataclass(frozen=True)
class ApproxParams:
    """Sketch and solver settings.

    ``strict_delta`` uses the solver tolerances that carry the proof through
    (clamped at 1e-12); otherwise both tolerances are ``epsilon / 6`` with a
    relative-residual stopping fallback. ``block`` fixes the probe partition
    and so the floating-point summation order. ``precision="auto"`` solves in
    single precision unless ``strict_delta`` is set; sums are kept in double.
    """

    epsilon: float = 0.2
    seed: int = 0
    strict_delta: bool = False
    workers: int = 1
    block: int = 64
    preconditioner: str = "jacobi"
    maxiter: int | None = None
    p: int | None = None
    precision: str = "auto"

    def __post_init__(self):
        if self.precision not in ("auto", "single", "double"):
            raise ValidationError("precision must be 'auto', 'single' or 'double'")
        if not 0 < self.epsilon <= 0.25:
            raise ValidationError("epsilon must lie in (0, 1/4]")
        if self.workers < 1 or self.block < 1:
            raise ValidationError("workers and block must be positive")
        if self.p is not None and self.p < 1:
            raise ValidationError("p must be at least 1")

    @property
    def dtype(self):
        if self.precision == "single" or (self.precision == "auto" and not self.strict_delta):
            return np.float32
        return np.float64

    def sketch_size(self, n: int) -> int:
        return self.p if self.p is not None else sketch_dimension(n, self.epsilon)

    def deltas(self, sys: GroundedSystem) -> tuple[float, float]:
        if self.strict_delta:
            return theoretical_deltas(sys, self.epsilon)
        return self.epsilon / 6.0, self.epsilon / 6.0


def theoretical_deltas(sys: GroundedSystem, epsilon: float) -> tuple[float, float]:
    """Solver tolerances for the numerator and denominator sketches, floored at 1e-12."""
    g = sys.graph
    weights = [g.w_min, g.w_max] + [e.weight for e in sys.added]
    wmin, wmax = min(weights), max(weights)
    n, m = g.n, g.m + len(sys.added)
    d1 = epsilon * math.sqrt(1 - epsilon) * wmin / (6 * n**3 * wmax)
    d2 = math.sqrt(epsilon * wmin**2 / (16 * n**5 * m**2) * math.sqrt((2 - 2 * epsilon) / wmax))
    return max(d1, DELTA_FLOOR), max(d2, DELTA_FLOOR)


@dataclass
class SketchAccumulators:
    t_hat: np.ndarray
    r_hat: np.ndarray
    probes_done: int


class _ProbeEngine:
    """Solves the three probe families for a block of probe indices."""

    def __init__(self, sys: GroundedSystem, params: ApproxParams, stream: int, want_t: bool = True):
        self.sys = sys
        self.params = params
        self.stream = stream
        self.want_t = want_t
        self.p = params.sketch_size(sys.graph.n)
        self.dec: SddDecomposition = sdd_decompose(sys)
        self.sqrt_w = self.dec.sqrt_weights.astype(params.dtype)
        self.sqrt_x = self.dec.sqrt_x.astype(params.dtype)
        self.d1, self.d2 = params.deltas(sys)
        self.handle = solve_handle(sys, delta=max(self.d1, self.d2), fallback=not params.strict_delta,
                                   preconditioner=params.preconditioner, maxiter=params.maxiter,
                                   dtype=params.dtype)

    def blocks(self) -> list[range]:
        b = self.params.block
        return [range(s, min(s + b, self.p)) for s in range(0, self.p, b)]

    def raw_bits(self, probes: range) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Sign bits of each probe: node, edge and diagonal vectors in draw order."""
        wd, we = -(-self.sys.dim // 64), -(-self.dec.m // 64)
        raw_p = np.empty((len(probes), wd), dtype=np.uint64)
        raw_q = np.empty((len(probes), we), dtype=np.uint64)
        raw_r = np.empty((len(probes), wd), dtype=np.uint64)
        for j, i in enumerate(probes):
            bits = probe_rng(self.params.seed, self.stream, i).bit_generator
            raw_p[j] = bits.random_raw(wd)
            raw_q[j] = bits.random_raw(we)
            raw_r[j] = bits.random_raw(wd)
        return raw_p, raw_q, raw_r

    def rhs(self, probes: range) -> np.ndarray:
        """Right-hand sides ``[P | B'^T W'^(1/2) Q | X^(1/2) R]`` of a block, dim x 3B."""
        dt = self.params.dtype
        out = np.empty((self.sys.dim, 3 * len(probes)), dtype=dt)
        _kernels.assemble_rhs(*self.raw_bits(probes), self.dec.heads, self.dec.tails,
                              self.sqrt_w, self.sqrt_x, dt(1.0 / math.sqrt(self.p)), out)
        return out

    def solve_block(self, probes: range) -> np.ndarray:
        """Solutions for the block, laid out like :meth:`rhs`."""
        rhs = self.rhs(probes)
        B = len(probes)
        if not self.want_t:
            rhs = np.ascontiguousarray(rhs[:, B:])
            deltas = self.d2
        else:
            deltas = np.concatenate([np.full(B, self.d1), np.full(2 * B, self.d2)])
        try:
            return self.handle.solve(rhs, delta=deltas)
        except ConvergenceError as exc:
            raise ConvergenceError("sketch solve did not converge", exc.residual, exc.iterations,
                                   probe=probes.start) from exc

    def partial_sums(self, probes: range):
        return _reduce_block(self.solve_block(probes), len(probes), self.want_t)

    def map(self, fn, blocks):
        if self.params.workers == 1 or len(blocks) == 1:
            return [fn(b) for b in blocks]
        with ThreadPoolExecutor(max_workers=self.params.workers) as pool:
            return list(pool.map(fn, blocks))


def _reduce_block(Z: np.ndarray, B: int, want_t: bool):
    """Per-row squared norms: numerator part and denominator part of one block."""
    dim = Z.shape[0]
    s1, s2 = np.empty(dim), np.empty(dim)
    if want_t:
        t = np.empty(dim)
        _kernels.row_sumsq(Z, 0, B, t)
        _kernels.row_sumsq(Z, B, 2 * B, s1)
        _kernels.row_sumsq(Z, 2 * B, 3 * B, s2)
        return t, s1 + s2
    _kernels.row_sumsq(Z, 0, B, s1)
    _kernels.row_sumsq(Z, B, 2 * B, s2)
    return None, s1 + s2


def _accumulate(dim: int, parts, p: int, want_t: bool) -> SketchAccumulators:
    t_hat = np.zeros(dim)
    r_hat = np.zeros(dim)
    for t, r in parts:
        if want_t:
            t_hat += t
        r_hat += r
    return SketchAccumulators(t_hat, r_hat, p)


def _estimates(cfg: LeaderConfig, acc: SketchAccumulators) -> list[GainEstimate]:
    out = []
    for i, e in enumerate(cfg.iter_candidates()):
        u = cfg.cand_row[i]
        t, r = float(acc.t_hat[u]), float(acc.r_hat[u])
        out.append(GainEstimate(e, t, r, e.weight * t / (1.0 + e.weight * r)))
    return out


def f_gains_est(sys: GroundedSystem, params: ApproxParams, stream: int = 0,
                return_accumulators: bool = False):
    """Streaming estimator: per-block solves folded straight into t_hat, r_hat."""
    eng = _ProbeEngine(sys, params, stream)
    parts = eng.map(eng.partial_sums, eng.blocks())
    acc = _accumulate(sys.dim, parts, eng.p, True)
    if return_accumulators:
        return acc
    return _estimates(sys.config, acc)


def gains_est(sys: GroundedSystem, params: ApproxParams, stream: int = 0,
              return_accumulators: bool = False):
    """Estimator that materializes the full dim x p solution matrices first."""
    eng = _ProbeEngine(sys, params, stream)
    blocks = eng.blocks()
    Z = np.hstack(eng.map(eng.solve_block, blocks))
    parts = []
    for b in blocks:
        B = len(b)
        parts.append(_reduce_block(Z[:, 3 * b.start:3 * b.start + 3 * B], B, True))
    acc = _accumulate(sys.dim, parts, eng.p, True)
    if return_accumulators:
        return acc
    return _estimates(sys.config, acc)


def sketched_trace(sys: GroundedSystem, params: ApproxParams, stream: int = 0) -> float:
    """Estimate of Tr(L(S)_Q^{-1}) as the sum of the sketched diagonal."""
    eng = _ProbeEngine(sys, params, stream, want_t=False)
    parts = eng.map(eng.partial_sums, eng.blocks())
    return float(_accumulate(sys.dim, parts, eng.p, False).r_hat.sum())


def run_approx(g: Graph, cfg: LeaderConfig, k: int, params: ApproxParams | None = None) -> SelectionResult:
    """Greedy over sketched gains; round ``i`` draws probes from stream ``i``.

    The trajectory holds sketched traces: rounds reuse their denominator
    accumulators, and one extra denominator-only pass scores the final set.
    """
    params = params or ApproxParams()
    _check_budget(cfg, k)
    sys = grounded_laplacian(g, cfg)
    taken = np.zeros(len(cfg), dtype=bool)
    chosen, trajectory, seconds = [], [], []
    rows, w = cfg.cand_row, cfg.cand_weight
    for i in range(k):
        t0 = time.perf_counter()
        acc = f_gains_est(sys, params, stream=i, return_accumulators=True)
        trajectory.append(float(acc.r_hat.sum()))
        gains = w * acc.t_hat[rows] / (1.0 + w * acc.r_hat[rows])
        gains[taken] = -np.inf
        best = int(np.argmax(gains))
        taken[best] = True
        e = cfg.candidate(best)
        chosen.append(e)
        sys = add_candidate(sys, e)
        seconds.append(time.perf_counter() - t0)
    t0 = time.perf_counter()
    trajectory.append(sketched_trace(sys, params, stream=k))
    seconds.append(time.perf_counter() - t0)
    meta = asdict(params)
    meta["p"] = params.sketch_size(g.n)
    meta["delta1"], meta["delta2"] = params.deltas(sys)
    return SelectionResult("approx", chosen, trajectory, seconds, meta)
