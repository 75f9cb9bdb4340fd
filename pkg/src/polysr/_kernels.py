"""Compiled inner loops for the undecimated wavelet transform.

Every loop runs along the contiguous axis and indexes its operands with the
bare loop counter, which lets LLVM vectorize it (offset indexing such as
``x[n + s]`` keeps numba's negative-index check in the loop and defeats
that).  Circular wrap is handled by splitting each shifted pass into two
contiguous segments.  Summation order is fixed, so results are deterministic.
"""

import numba
import numpy as np


@numba.njit(cache=True)
def _corr_row(xr, f, dil, acc):
    # acc[n] = sum_k f[k] xr[(n + k dil) mod W]
    W = xr.size
    acc[:] = 0.0
    for k in range(f.size):
        c = f[k]
        s = (k * dil) % W
        m = W - s
        src = xr[s:]
        for i in range(m):
            acc[i] += c * src[i]
        tail = acc[m:]
        for i in range(s):
            tail[i] += c * xr[i]


@numba.njit(cache=True)
def corr_pair_rows(x, f0, f1, dil, o0, o1):
    """``o[r, n] = sum_k f[k] x[r, (n + k dil) mod W]`` for both filters."""
    for r in range(x.shape[0]):
        _corr_row(x[r], f0, dil, o0[r])
        _corr_row(x[r], f1, dil, o1[r])


@numba.njit(cache=True)
def corr_pair_cols(x, f0, f1, dil, o0, o1):
    """``o[r, n] = sum_k f[k] x[(r + k dil) mod H, n]`` for both filters."""
    H = x.shape[0]
    for r in range(H):
        a = o0[r]
        b = o1[r]
        a[:] = 0.0
        b[:] = 0.0
        for k in range(f0.size):
            src = x[(r + k * dil) % H]
            c0 = f0[k]
            c1 = f1[k]
            for n in range(src.size):
                v = src[n]
                a[n] += c0 * v
                b[n] += c1 * v


@numba.njit(cache=True)
def conv_pair_rows(a, b, f0, f1, dil, scale, out):
    """Adjoint of :func:`corr_pair_rows`: ``out = scale (f0^T a + f1^T b)`` along rows."""
    H, W = a.shape
    acc = np.empty(W)
    for r in range(H):
        ar = a[r]
        br = b[r]
        acc[:] = 0.0
        for k in range(f0.size):
            c0 = f0[k]
            c1 = f1[k]
            # acc[n] += f[k] a[(n - k dil) mod W]
            s = (k * dil) % W
            m = W - s
            head = acc[s:]
            for i in range(m):
                head[i] += c0 * ar[i] + c1 * br[i]
            at = ar[m:]
            bt = br[m:]
            for i in range(s):
                acc[i] += c0 * at[i] + c1 * bt[i]
        orow = out[r]
        for n in range(W):
            orow[n] = scale * acc[n]


@numba.njit(cache=True)
def conv_pair_cols(a, b, f0, f1, dil, scale, out):
    """Adjoint of :func:`corr_pair_cols`: ``out = scale (f0^T a + f1^T b)`` along columns."""
    H, W = a.shape
    acc = np.empty(W)
    for r in range(H):
        acc[:] = 0.0
        for k in range(f0.size):
            src = (r - k * dil) % H
            ar = a[src]
            br = b[src]
            c0 = f0[k]
            c1 = f1[k]
            for n in range(W):
                acc[n] += c0 * ar[n] + c1 * br[n]
        orow = out[r]
        for n in range(W):
            orow[n] = scale * acc[n]


@numba.njit(cache=True)
def threshold_into(c, p, lam, literal, out):
    """Elementwise soft (``p=1``) or hard (``p=0``) threshold; ``out`` may alias ``c``."""
    src = c.ravel()
    dst = out.ravel()
    for i in range(src.size):
        v = src[i]
        if p == 1:
            if v > lam:
                dst[i] = v - lam
            elif v < -lam:
                dst[i] = v + lam
            else:
                dst[i] = 0.0
        else:
            keep = v >= lam if literal else abs(v) >= lam
            dst[i] = v if keep else 0.0
