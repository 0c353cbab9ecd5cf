"""Fused numba kernels for block conjugate gradient and sign expansion.

Every column is reduced in row order, so a column's result does not depend on
which other columns share its block. Kernels release the GIL.
"""

from __future__ import annotations

import numba as nb
import numpy as np


@nb.njit(nogil=True, cache=True)
def spmm_dot(indptr, indices, data, p, ap, pap):
    """ap = A @ p and pap[c] = <p[:, c], ap[:, c]>."""
    n, k = p.shape
    for c in range(k):
        pap[c] = 0.0
    for i in range(n):
        o = ap[i]
        o[:] = 0.0
        for jj in range(indptr[i], indptr[i + 1]):
            a = data[jj]
            row = p[indices[jj]]
            for c in range(k):
                o[c] += a * row[c]
        own = p[i]
        for c in range(k):
            pap[c] += own[c] * o[c]


@nb.njit(nogil=True, cache=True)
def cg_update(x, r, p, ap, dinv, alpha, rz, rr):
    """x += alpha p; r -= alpha ap; rz = <r, D^{-1} r>; rr = <r, r>."""
    n, k = x.shape
    for c in range(k):
        rz[c] = 0.0
        rr[c] = 0.0
    for i in range(n):
        d = dinv[i]
        for c in range(k):
            x[i, c] += alpha[c] * p[i, c]
            ri = r[i, c] - alpha[c] * ap[i, c]
            r[i, c] = ri
            rz[c] += ri * ri * d
            rr[c] += ri * ri


@nb.njit(nogil=True, cache=True)
def cg_direction(r, p, dinv, beta):
    """p = D^{-1} r + beta p."""
    n, k = p.shape
    for i in range(n):
        d = dinv[i]
        for c in range(k):
            p[i, c] = r[i, c] * d + beta[c] * p[i, c]


@nb.njit(nogil=True, cache=True)
def energy_terms(x, b, r, xb, xr):
    n, k = x.shape
    for c in range(k):
        xb[c] = 0.0
        xr[c] = 0.0
    for i in range(n):
        for c in range(k):
            xb[c] += x[i, c] * b[i, c]
            xr[c] += x[i, c] * r[i, c]


@nb.njit(nogil=True, cache=True)
def expand_signs(raw, out, scale):
    """Fill ``out`` with +-scale, one bit of ``raw`` per entry (LSB first)."""
    n = out.shape[0]
    two = 2 * scale
    for w in range(raw.shape[0]):
        v = raw[w]
        base = w * 64
        top = min(64, n - base)
        for b in range(top):
            out[base + b] = two * ((v >> np.uint64(b)) & np.uint64(1)) - scale


@nb.njit(nogil=True, cache=True)
def assemble_rhs(raw_p, raw_q, raw_r, heads, tails, sqrt_w, sqrt_x, scale, out):
    """Write the three probe families of a block side by side into ``out``.

    Columns ``[0, B)`` hold node signs, ``[B, 2B)`` hold B'^T W'^(1/2) q and
    ``[2B, 3B)`` hold X^(1/2) r, where row ``j`` of each ``raw_*`` supplies the
    sign bits of probe ``j``.
    """
    dim = out.shape[0]
    nb_ = raw_p.shape[0]
    me = heads.shape[0]
    sp = np.empty((nb_, dim), out.dtype)
    sq = np.empty((nb_, me), out.dtype)
    sr = np.empty((nb_, dim), out.dtype)
    for j in range(nb_):
        expand_signs(raw_p[j], sp[j], scale)
        expand_signs(raw_q[j], sq[j], scale)
        expand_signs(raw_r[j], sr[j], scale)
    for i in range(dim):
        sx = sqrt_x[i]
        o = out[i]
        for j in range(nb_):
            o[j] = sp[j, i]
            o[nb_ + j] = 0.0
            o[2 * nb_ + j] = sr[j, i] * sx
    for e in range(me):
        oh = out[heads[e]]
        ot = out[tails[e]]
        sw = sqrt_w[e]
        for j in range(nb_):
            v = sq[j, e] * sw
            oh[nb_ + j] += v
            ot[nb_ + j] -= v


@nb.njit(nogil=True, cache=True)
def gather_cols(src, cols, dst):
    for i in range(src.shape[0]):
        for c in range(cols.shape[0]):
            dst[i, c] = src[i, cols[c]]


@nb.njit(nogil=True, cache=True)
def scatter_cols(src, src_cols, dst, dst_cols):
    for i in range(src.shape[0]):
        for c in range(src_cols.shape[0]):
            dst[i, dst_cols[c]] = src[i, src_cols[c]]


@nb.njit(nogil=True, cache=True)
def row_sumsq(z, start, stop, out):
    """out[i] = sum of z[i, c]^2 over ``start <= c < stop``, in double precision."""
    for i in range(z.shape[0]):
        acc = 0.0
        for c in range(start, stop):
            v = np.float64(z[i, c])
            acc += v * v
        out[i] = acc


@nb.njit(nogil=True, cache=True)
def coldot(a, b, out):
    """out[c] = <a[:, c], b[:, c]> accumulated in double precision."""
    n, k = a.shape
    for c in range(k):
        out[c] = 0.0
    for i in range(n):
        for c in range(k):
            out[c] += np.float64(a[i, c]) * np.float64(b[i, c])
