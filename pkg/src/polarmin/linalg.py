"""Dense inverses, SDD solves and random sign sketches for grounded Laplacians."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .errors import CapacityError, ConvergenceError, NumericalError, ValidationError
from .graph import GroundedSystem

__all__ = [
    "DEFAULT_DENSE_CAP",
    "DenseInverse",
    "dense_inverse",
    "sherman_morrison_update",
    "SolveHandle",
    "SolveInfo",
    "solve_handle",
    "sdd_solve",
    "SketchProbe",
    "make_probe",
    "probe_rng",
    "sketch_dimension",
    "SddDecomposition",
    "sdd_decompose",
]

DEFAULT_DENSE_CAP = 30000


@dataclass
class DenseInverse:
    inv: np.ndarray

    @property
    def dim(self) -> int:
        return self.inv.shape[0]

    def trace(self) -> float:
        return float(np.trace(self.inv))

    def copy(self) -> DenseInverse:
        return DenseInverse(self.inv.copy())


def _as_dense(matrix) -> np.ndarray:
    if isinstance(matrix, GroundedSystem):
        matrix = matrix.matrix
    if sp.issparse(matrix):
        return matrix.toarray()
    return np.array(matrix, dtype=float)


def dense_inverse(sys, dense_cap: int = DEFAULT_DENSE_CAP) -> DenseInverse:
    """Invert L(S)_Q (or any SPD matrix) through a Cholesky factorization."""
    dim = sys.dim if isinstance(sys, GroundedSystem) else np.shape(sys)[0]
    if dim > dense_cap:
        raise CapacityError(f"dense inverse of dimension {dim} exceeds cap {dense_cap}")
    a = _as_dense(sys)
    if dim == 0:
        return DenseInverse(np.zeros((0, 0)))
    c, info = sla.lapack.dpotrf(a, lower=0, clean=0, overwrite_a=1)
    if info != 0:
        raise NumericalError(f"Cholesky factorization failed (info={info}); matrix is not positive definite")
    inv, info = sla.lapack.dpotri(c, lower=0, overwrite_c=1)
    if info != 0:
        raise NumericalError(f"inverse from Cholesky factor failed (info={info})")
    upper = np.triu(inv)
    inv = upper + np.triu(upper, 1).T
    return DenseInverse(np.ascontiguousarray(inv))


def sherman_morrison_update(
    invm: DenseInverse, u: int, w: float, inplace: bool = False
) -> DenseInverse:
    """Inverse after adding ``w`` to diagonal entry ``u``; O(dim^2).

    The correction is a scaled outer product of one column with itself, so an
    exactly symmetric input stays exactly symmetric.
    """
    if not 0 <= u < invm.dim:
        raise ValidationError(f"follower index {u} out of range [0, {invm.dim})")
    if not w > 0:
        raise ValidationError("update weight must be positive")
    out = invm if inplace else invm.copy()
    col = out.inv[:, u].copy()
    coef = w / (1.0 + w * col[u])
    corr = np.multiply.outer(col, col)
    corr *= coef
    out.inv -= corr
    return out


@dataclass
class SolveInfo:
    iterations: np.ndarray
    residual: np.ndarray
    criterion: np.ndarray  # per column: "energy", "residual" or "zero"


@dataclass(eq=False)
class SolveHandle:
    """Preconditioned conjugate gradient for an SPD (SDD) matrix.

    A column stops when the certified energy-norm bound
    ``||r|| / sqrt(lambda_lower) <= delta * (||x_k||_S - that bound)`` holds,
    which implies ``||x - S^{-1} b||_S <= delta ||S^{-1} b||_S``. With
    ``fallback=True`` a relative residual ``||r|| <= delta ||b||`` also stops
    it; the energy bound is then only evaluated every few iterations.
    """

    matrix: sp.csr_matrix
    delta: float = 1e-6
    lambda_lower: float | None = None
    fallback: bool = False
    preconditioner: Literal["jacobi", "ilu", "none"] = "jacobi"
    maxiter: int | None = None
    dtype: type = np.float64
    _precond: object = field(default=None, repr=False)
    _dinv: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.dtype = np.dtype(self.dtype).type
        self.matrix = sp.csr_matrix(self.matrix, dtype=self.dtype)
        self.matrix.sort_indices()
        if not 0 < self.delta < 1:
            raise ValidationError("delta must lie in (0, 1)")
        n = self.matrix.shape[0]
        if self.lambda_lower is None:
            if n <= 2000:
                lam = float(np.linalg.eigvalsh(self.matrix.toarray().astype(float))[0]) if n else 1.0
                if lam <= 0:
                    raise NumericalError("matrix is not positive definite")
                self.lambda_lower = lam * (1 - 1e-10)
            elif not self.fallback:
                raise ValidationError("lambda_lower is required for large systems without fallback")
        diag = self.matrix.diagonal()
        if n and np.any(diag <= 0):
            raise NumericalError("nonpositive diagonal entry; matrix is not positive definite")
        if self.preconditioner == "jacobi":
            self._dinv = (1.0 / diag).astype(self.dtype)
            dinv = self._dinv[:, None]
            self._precond = lambda r, out: np.multiply(r, dinv, out=out)
        elif self.preconditioner == "ilu":
            lu = spla.spilu(self.matrix.astype(float).tocsc(), drop_tol=1e-4, fill_factor=10)
            self._precond = lambda r, out: lu.solve(r.astype(float)).astype(self.dtype)
        elif self.preconditioner == "none":
            self._dinv = np.ones(n, dtype=self.dtype)
            self._precond = lambda r, out: np.copyto(out, r) or out
        else:
            raise ValidationError(f"unknown preconditioner {self.preconditioner!r}")
        if self.maxiter is None:
            self.maxiter = max(100, 10 * n)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def solve(self, b: np.ndarray, delta=None, return_info: bool = False):
        """Solve for one vector or for each column of a 2-D block.

        ``delta`` overrides the handle tolerance; a per-column array is allowed.
        """
        b = np.asarray(b)
        vector = b.ndim == 1
        B = b[:, None] if vector else b
        n, k = B.shape
        if n != self.dim:
            raise ValidationError(f"right-hand side has length {n}, expected {self.dim}")
        deltas = np.broadcast_to(np.asarray(self.delta if delta is None else delta, dtype=float), (k,))
        if np.any((deltas <= 0) | (deltas >= 1)):
            raise ValidationError("delta must lie in (0, 1)")
        solver = _block_pcg if self._dinv is None else _block_pcg_fused
        X, info = solver(self, np.ascontiguousarray(B, dtype=self.dtype), deltas)
        X = X[:, 0] if vector else X
        return (X, info) if return_info else X


def _coldot(a, b):
    return np.einsum("ij,ij->j", a, b, dtype=np.float64)


def _block_pcg(h: SolveHandle, B: np.ndarray, deltas: np.ndarray):
    n, k = B.shape
    A = h.matrix
    out = np.zeros((n, k), dtype=h.dtype)
    iters = np.zeros(k, dtype=np.int64)
    resid = np.zeros(k)
    crit = np.full(k, "", dtype=object)
    bnorm = np.sqrt(_coldot(B, B))
    zero = bnorm == 0
    crit[zero] = "zero"
    cols = np.flatnonzero(~zero)
    if cols.size == 0:
        return out, SolveInfo(iters, resid, crit)
    inv_sqrt_lam = 1.0 / math.sqrt(h.lambda_lower) if h.lambda_lower else math.inf
    energy_every = 4 if h.fallback else 1

    b = B[:, cols]
    bn = bnorm[cols]
    dl = deltas[cols]
    x = np.zeros_like(b)
    r = b.copy()
    z = h._precond(r, np.empty_like(r))
    p = z.copy()
    rz = _coldot(r, z)
    rnorm = bn.copy()
    it = 0
    while True:
        ok_resid = (rnorm <= dl * bn) if h.fallback else np.zeros(cols.size, dtype=bool)
        if it % energy_every == 0 and math.isfinite(inv_sqrt_lam):
            # ||x_k||_S^2 = x_k^T (b - r_k)
            xs = np.sqrt(np.maximum(_coldot(x, b) - _coldot(x, r), 0.0))
            ebound = rnorm * inv_sqrt_lam
            ok_energy = ebound <= dl * (xs - ebound)
        else:
            ok_energy = np.zeros(cols.size, dtype=bool)
        done = ok_energy | ok_resid | (rnorm == 0)
        if np.any(done):
            idx = cols[done]
            out[:, idx] = x[:, done]
            iters[idx] = it
            resid[idx] = rnorm[done] / bn[done]
            crit[idx] = np.where(ok_energy[done] | (rnorm[done] == 0), "energy", "residual")
            keep = ~done
            if not np.any(keep):
                break
            cols, bn, dl, rz, rnorm = cols[keep], bn[keep], dl[keep], rz[keep], rnorm[keep]
            b, x, r, z, p = (np.ascontiguousarray(a[:, keep]) for a in (b, x, r, z, p))
        if it >= h.maxiter:
            worst = float(np.max(rnorm / bn))
            raise ConvergenceError("conjugate gradient hit the iteration cap", worst, it)
        ap = A @ p
        pap = _coldot(p, ap)
        if np.any(pap <= 0):
            raise NumericalError("conjugate gradient breakdown; matrix is not positive definite")
        alpha = (rz / pap).astype(h.dtype)
        x += p * alpha
        ap *= alpha
        r -= ap
        z = h._precond(r, z)
        rz_new = _coldot(r, z)
        rnorm = np.sqrt(_coldot(r, r))
        p *= (rz_new / rz).astype(h.dtype)
        p += z
        rz = rz_new
        it += 1
    return out, SolveInfo(iters, resid, crit)


def _block_pcg_fused(h: SolveHandle, B: np.ndarray, deltas: np.ndarray):
    """Diagonally preconditioned block CG built on the fused row-sweep kernels.

    Finished columns are frozen (zero step, direction reset) and only dropped
    from the working block once they make up half of it, which keeps the
    copying cost low when columns finish within an iteration of each other.
    """
    n, k = B.shape
    A, dinv, dt = h.matrix, h._dinv, h.dtype
    out = np.zeros((n, k), dtype=dt)
    iters = np.zeros(k, dtype=np.int64)
    resid = np.zeros(k)
    crit = np.full(k, "", dtype=object)
    bnorm = np.empty(k)
    _kernels.coldot(B, B, bnorm)
    bnorm = np.sqrt(bnorm)
    zero = bnorm == 0
    crit[zero] = "zero"
    cols = np.flatnonzero(~zero)
    if cols.size == 0:
        return out, SolveInfo(iters, resid, crit)
    inv_sqrt_lam = 1.0 / math.sqrt(h.lambda_lower) if h.lambda_lower else math.inf
    energy_every = 4 if h.fallback else 1

    if cols.size == k:
        b = B
    else:
        b = np.empty((n, cols.size), dtype=dt)
        _kernels.gather_cols(B, cols, b)
    bn, dl = bnorm[cols], deltas[cols]
    x = np.zeros_like(b)
    r = b.copy()
    p = r * dinv[:, None]
    ap = np.empty_like(b)
    c = cols.size
    rz = np.empty(c)
    _kernels.coldot(r, p, rz)
    rnorm = bn.copy()
    finished = np.zeros(c, dtype=bool)
    rz_new, rr, xb, xr = (np.empty(c) for _ in range(4))
    it = 0
    while True:
        live = ~finished
        ok_resid = (rnorm <= dl * bn) if h.fallback else np.zeros(c, dtype=bool)
        # x = 0 at the start, so the energy test cannot pass before the first step
        if it > 0 and it % energy_every == 0 and math.isfinite(inv_sqrt_lam):
            _kernels.energy_terms(x, b, r, xb, xr)
            xs = np.sqrt(np.maximum(xb - xr, 0.0))
            ebound = rnorm * inv_sqrt_lam
            ok_energy = ebound <= dl * (xs - ebound)
        else:
            ok_energy = np.zeros(c, dtype=bool)
        done = (ok_energy | ok_resid | (rnorm == 0)) & live
        if np.any(done):
            idx = np.flatnonzero(done)
            _kernels.scatter_cols(x, idx, out, cols[idx])
            iters[cols[idx]] = it
            resid[cols[idx]] = rnorm[idx] / bn[idx]
            crit[cols[idx]] = np.where(ok_energy[idx] | (rnorm[idx] == 0), "energy", "residual")
            finished |= done
            live = ~finished
            if not np.any(live):
                break
            if 2 * np.count_nonzero(finished) >= c:
                keep = np.flatnonzero(live)
                cols, bn, dl, rz, rnorm = cols[keep], bn[keep], dl[keep], rz[keep], rnorm[keep]
                arrays = []
                for a_ in (b, x, r, p):
                    dst = np.empty((n, keep.size), dtype=dt)
                    _kernels.gather_cols(a_, keep, dst)
                    arrays.append(dst)
                b, x, r, p = arrays
                ap = np.empty_like(b)
                c = keep.size
                finished = np.zeros(c, dtype=bool)
                live = ~finished
                rz_new, rr, xb, xr = (np.empty(c) for _ in range(4))
        if it >= h.maxiter:
            worst = float(np.max((rnorm / bn)[live]))
            raise ConvergenceError("conjugate gradient hit the iteration cap", worst, it)
        pap = np.empty(c)
        _kernels.spmm_dot(A.indptr, A.indices, A.data, p, ap, pap)
        if np.any(pap[live] <= 0):
            raise NumericalError("conjugate gradient breakdown; matrix is not positive definite")
        alpha = np.where(live, rz / np.where(live, pap, 1.0), 0.0).astype(dt)
        _kernels.cg_update(x, r, p, ap, dinv, alpha, rz_new, rr)
        beta = np.where(live, rz_new / np.where(live, rz, 1.0), 0.0).astype(dt)
        _kernels.cg_direction(r, p, dinv, beta)
        rz, rz_new = rz_new, rz
        rnorm = np.sqrt(rr)
        it += 1
    return out, SolveInfo(iters, resid, crit)


def solve_handle(
    sys: GroundedSystem,
    delta: float = 1e-6,
    fallback: bool = False,
    preconditioner: str = "jacobi",
    maxiter: int | None = None,
    dtype: type = np.float64,
) -> SolveHandle:
    """Solver for L(S)_Q using the eigenvalue floor w_min / n^2."""
    g = sys.graph
    wmin = g.w_min
    if sys.added:
        wmin = min(wmin, min(e.weight for e in sys.added))
    lam = wmin / g.n**2
    return SolveHandle(sys.matrix, delta=delta, lambda_lower=lam, fallback=fallback,
                       preconditioner=preconditioner, maxiter=maxiter, dtype=dtype)


def sdd_solve(h: SolveHandle, b: np.ndarray) -> np.ndarray:
    return h.solve(b)


def sketch_dimension(n: int, epsilon: float) -> int:
    """Number of random projections, ceil(24 ln n / eps^2)."""
    if not epsilon > 0:
        raise ValidationError("epsilon must be positive")
    return max(1, math.ceil(24.0 * math.log(max(n, 2)) / epsilon**2))


ProbeKind = Literal["node", "edge", "diagonal"]


@dataclass(frozen=True, eq=False)
class SketchProbe:
    kind: str
    vector: np.ndarray
    p: int


def probe_rng(seed: int, stream: int, index: int) -> np.random.Generator:
    """Counter-based generator: key (seed, stream), counter offset by ``index``."""
    bitgen = np.random.Philox(key=[seed & 0xFFFFFFFFFFFFFFFF, stream],
                              counter=[0, index, 0, 0])
    return np.random.Generator(bitgen)


def random_signs(rng: np.random.Generator, size: int, p: int, dtype=np.float64, out=None) -> np.ndarray:
    """``size`` entries of +-1/sqrt(p), one raw generator bit each."""
    raw = rng.bit_generator.random_raw((size + 63) // 64)
    out = np.empty(size, dtype=dtype) if out is None else out
    _kernels.expand_signs(raw, out, out.dtype.type(1.0 / math.sqrt(p)))
    return out


def make_probe(kind: ProbeKind, dim: int, p: int, rng: np.random.Generator) -> SketchProbe:
    """One row of a p x dim random +-1/sqrt(p) matrix."""
    if p < 1:
        raise ValidationError("sketch dimension must be at least 1")
    if kind not in ("node", "edge", "diagonal"):
        raise ValidationError(f"unknown probe kind {kind!r}")
    return SketchProbe(kind=kind, vector=random_signs(rng, dim, p), p=p)


@dataclass(frozen=True, eq=False)
class SddDecomposition:
    """L(S)_Q = B'^T W' B' + X over the follower-induced subgraph.

    ``heads``/``tails`` are follower indices of follower-follower edges.
    """

    heads: np.ndarray
    tails: np.ndarray
    weights: np.ndarray
    x_diag: np.ndarray
    dim: int

    @property
    def m(self) -> int:
        return int(self.weights.size)

    def incidence(self) -> sp.csr_matrix:
        m = self.m
        rows = np.repeat(np.arange(m), 2)
        cols = np.column_stack([self.heads, self.tails]).ravel()
        data = np.tile([1.0, -1.0], m)
        return sp.csr_matrix((data, (rows, cols)), shape=(m, self.dim))

    @property
    def sqrt_weights(self) -> np.ndarray:
        return np.sqrt(self.weights)

    @property
    def sqrt_x(self) -> np.ndarray:
        return np.sqrt(self.x_diag)

    def reassemble(self) -> sp.csr_matrix:
        b = self.incidence()
        return (b.T @ sp.diags(self.weights) @ b + sp.diags(self.x_diag)).tocsr()


def sdd_decompose(sys: GroundedSystem) -> SddDecomposition:
    g, cfg = sys.graph, sys.config
    fi = cfg.follower_index
    hu, tv = fi[g.heads], fi[g.tails]
    both = (hu >= 0) & (tv >= 0)
    return SddDecomposition(heads=hu[both], tails=tv[both], weights=g.weights[both].copy(),
                            x_diag=sys.leader_conductance + sys.diag_bump, dim=sys.dim)
