"""Euler-Maruyama simulation of noisy leader-follower opinion dynamics.

Followers integrate ``dx_u = -sum_j w_uj (x_u - x_j) dt + dW_u`` while leaders
stay pinned at ``leader_value``. The steady-state sum of squared follower
deviations is estimated from time and path averages, independently of any
matrix inverse.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence, TextIO

import numpy as np
import scipy.sparse as sp

from .errors import StabilityError, ValidationError
from .graph import CandidateEdge, Graph, GroundedSystem, LeaderConfig, add_candidate, grounded_laplacian

__all__ = ["SimulationConfig", "PolarizationEstimate", "stability_bound", "simulate"]


@dataclass(frozen=True)
class SimulationConfig:
    """Integration settings. ``dt=None`` picks a tenth of the stability bound.

    The sampling window is cut into ``n_batches`` equal pieces per path; the
    batch means give the standard error.
    """

    dt: float | None = None
    t_burn: float = 50.0
    t_sample: float = 200.0
    n_paths: int = 8
    seed: int = 0
    leader_value: float = 0.0
    n_batches: int = 10
    noise: bool = True
    initial_offset: float = 0.0
    chunk_steps: int = 512

    def __post_init__(self):
        if self.dt is not None and not self.dt > 0:
            raise ValidationError("dt must be positive")
        if not (self.t_burn >= 0 and self.t_sample > 0):
            raise ValidationError("horizons must be positive")
        if self.n_paths < 1 or self.n_batches < 1:
            raise ValidationError("n_paths and n_batches must be at least 1")


@dataclass(frozen=True)
class PolarizationEstimate:
    value: float
    stderr: float
    samples_used: int
    dt: float = float("nan")
    state: np.ndarray | None = field(default=None, repr=False, compare=False)


def stability_bound(sys: GroundedSystem | np.ndarray | sp.spmatrix, tol: float = 1e-4, maxiter: int = 5000) -> float:
    """2 / lambda_max for explicit Euler on the drift ``-L(S)_Q x``.

    lambda_max comes from power iteration, padded by the final residual norm
    and clipped to the Gershgorin bound, so it errs on the high side.
    """
    A = sys.matrix if isinstance(sys, GroundedSystem) else sp.csr_matrix(sys, dtype=float)
    n = A.shape[0]
    if n == 0:
        return math.inf
    gersh = float(np.max(np.asarray(abs(A).sum(axis=1)).ravel()))
    v = np.random.default_rng(12345).random(n) + 0.5
    v /= np.linalg.norm(v)
    rho, res = 0.0, math.inf
    for _ in range(maxiter):
        w = A @ v
        rho = float(v @ w)
        res = float(np.linalg.norm(w - rho * v))
        if res <= tol * abs(rho):
            break
        v = w / np.linalg.norm(w)
    lam = min(rho + res, gersh)
    return 2.0 / lam


def simulate(
    g: Graph,
    cfg: LeaderConfig,
    sim: SimulationConfig | None = None,
    added: Sequence[CandidateEdge] = (),
    trajectory: TextIO | None = None,
    record_every: int = 100,
) -> PolarizationEstimate:
    """Simulated steady-state polarization of the followers.

    ``added`` edges are inserted before integrating. ``trajectory`` receives
    "t,follower_id,x" rows for the first path every ``record_every`` steps.
    """
    sim = sim or SimulationConfig()
    sys = grounded_laplacian(g, cfg)
    for e in added:
        sys = add_candidate(sys, e)
    bound = stability_bound(sys)
    dt = 0.1 * bound if sim.dt is None else sim.dt
    if dt >= bound:
        raise StabilityError(dt, bound)
    n_burn = int(math.ceil(sim.t_burn / dt))
    per_batch = max(1, int(math.ceil(sim.t_sample / dt / sim.n_batches)))
    n_steps = n_burn + per_batch * sim.n_batches

    A = sys.matrix
    xbar = sim.leader_value
    # pull of the pinned leaders on each follower
    pull = ((sys.leader_conductance + sys.diag_bump) * xbar)[:, None]
    F = cfg.followers
    xf = np.full((F.size, sim.n_paths), xbar + sim.initial_offset)
    leaders = np.full((cfg.q, sim.n_paths), xbar)
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(sim.seed).spawn(sim.n_paths)]
    sq = math.sqrt(dt)
    sums = np.zeros((sim.n_batches, sim.n_paths))
    writer = csv.writer(trajectory) if trajectory is not None else None
    if writer is not None:
        writer.writerow(["t", "follower_id", "x"])
        ids = [g.labels[u] for u in F] if g.labels else F.tolist()

    step = 0
    while step < n_steps:
        m = min(sim.chunk_steps, n_steps - step)
        if sim.noise:
            noise = np.stack([r.standard_normal((m, F.size)) for r in rngs], axis=2)
            noise *= sq
        for j in range(m):
            drift = A @ xf
            drift -= pull
            drift *= dt
            xf -= drift
            if sim.noise:
                xf += noise[j]
            step += 1
            if step > n_burn:
                dev = xf - xbar
                sums[(step - n_burn - 1) // per_batch] += np.einsum("ij,ij->j", dev, dev)
            if writer is not None and step % record_every == 0:
                t = f"{step * dt:.10g}"
                writer.writerows([t, u, f"{v:.10g}"] for u, v in zip(ids, xf[:, 0]))

    means = (sums / per_batch).ravel()
    value = float(means.mean())
    stderr = float(means.std(ddof=1) / math.sqrt(means.size)) if means.size > 1 else 0.0
    state = np.empty((g.n, sim.n_paths))
    state[F] = xf
    state[list(cfg.leaders)] = leaders
    return PolarizationEstimate(value, stderr, per_batch * sim.n_batches * sim.n_paths, dt, state)
