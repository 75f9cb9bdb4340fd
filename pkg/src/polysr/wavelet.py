"""Orthogonal Daubechies wavelets, thresholding and the sparsity projection.

Two transforms share one set of periodic filters:

* ``DECIMATED`` -- the orthonormal periodized DWT (Parseval holds exactly).
* ``CYCLE_SPINNING`` -- the undecimated (a trous) transform.  Its coefficients
  at level ``j`` are those of the decimated DWT of every circular shift of the
  input, so thresholding them and applying the shift-averaged inverse is
  complete cycle spinning.  Frame redundancy: with ``a_Q`` the approximation
  and ``d_j`` the detail bands,
  ``sum_j 4^-j ||d_j||^2 + 4^-Q ||a_Q||^2 = ||x||^2``.
"""

from __future__ import annotations

import enum
import threading
from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np
from scipy import ndimage

from . import _kernels
from .imaging import DimensionError, as_frame


class WaveletMode(enum.Enum):
    DECIMATED = "decimated"
    CYCLE_SPINNING = "cycle_spinning"


@lru_cache(maxsize=None)
def daubechies_filters(vanishing_moments: int):
    """Minimum-phase Daubechies analysis filters ``(lowpass, highpass)``.

    Obtained by spectral factorization of the maximally flat half-band
    polynomial; ``sum(lowpass) = sqrt(2)`` and ``sum(lowpass**2) = 1``.
    """
    N = int(vanishing_moments)
    if N < 1:
        raise ValueError("vanishing_moments must be >= 1")
    # P(y) = sum_k C(N-1+k, k) y^k with y = (2 - z - 1/z) / 4
    coeffs = [comb(N - 1 + k, k) for k in range(N)]
    zeros = []
    for y in np.roots(coeffs[::-1]) if N > 1 else []:
        pair = np.roots([1.0, -(2.0 - 4.0 * y), 1.0])
        zeros.append(pair[np.argmin(np.abs(pair))])
    lo = np.real(np.poly(np.concatenate([np.asarray(zeros, complex), -np.ones(N)])))
    lo = lo * (np.sqrt(2.0) / lo.sum())
    hi = lo[::-1] * (-1.0) ** np.arange(lo.size)
    lo.setflags(write=False)
    hi.setflags(write=False)
    return lo, hi


@dataclass(frozen=True)
class WaveletPlan:
    vanishing_moments: int = 5
    levels: int = 4
    mode: WaveletMode = WaveletMode.CYCLE_SPINNING

    def __post_init__(self):
        object.__setattr__(self, "mode", WaveletMode(self.mode))
        if self.levels < 1:
            raise ValueError("levels must be >= 1")

    @property
    def filters(self):
        return daubechies_filters(self.vanishing_moments)

    def check_shape(self, shape):
        if self.mode is WaveletMode.DECIMATED:
            q = 2**self.levels
            if shape[0] % q or shape[1] % q:
                raise DimensionError(f"frame {shape} not divisible by 2^{self.levels}")


@dataclass
class WaveletCoeffs:
    """Detail bands per level (index 0 is the finest) plus the final approximation."""

    approx: np.ndarray
    details: list
    mode: WaveletMode

    @property
    def levels(self) -> int:
        return len(self.details)

    def energy(self) -> float:
        """Frame-energy-equivalent norm (redundancy weights applied in cycle-spinning mode)."""
        if self.mode is WaveletMode.DECIMATED:
            w = [1.0] * (self.levels + 1)
        else:
            w = [4.0 ** -(j + 1) for j in range(self.levels)] + [4.0 ** -self.levels]
        total = w[-1] * float(np.sum(self.approx**2))
        for wj, bands in zip(w, self.details):
            total += wj * sum(float(np.sum(b**2)) for b in bands)
        return total

    def arrays(self):
        yield self.approx
        for bands in self.details:
            yield from bands


# --------------------------------------------------------------------------- #
# Periodic 1D filtering along an axis
# --------------------------------------------------------------------------- #


def _filter_axis(x: np.ndarray, filt: np.ndarray, axis: int, dilation: int = 1, adjoint: bool = False) -> np.ndarray:
    """Circular correlation ``out[n] = sum_k f[k] x[n + k D]`` (or its adjoint, a convolution)."""
    n = x.shape[axis]
    L = filt.size
    if n % dilation == 0 and n // dilation >= L:
        shape = x.shape[:axis] + (n // dilation, dilation) + x.shape[axis + 1:]
        xr = x.reshape(shape)
        if adjoint:
            out = ndimage.correlate1d(xr, filt[::-1], axis=axis, mode="wrap", origin=L - 1 - L // 2)
        else:
            out = ndimage.correlate1d(xr, filt, axis=axis, mode="wrap", origin=-(L // 2))
        return out.reshape(x.shape)
    out = np.zeros_like(x)
    sign = 1 if adjoint else -1
    for k, f in enumerate(filt):
        out += f * np.roll(x, sign * k * dilation, axis=axis)
    return out


def _analysis_1d(x, lo, hi, axis, dilation, decimated):
    a = _filter_axis(x, lo, axis, dilation)
    d = _filter_axis(x, hi, axis, dilation)
    if decimated:
        sl = [slice(None)] * x.ndim
        sl[axis] = slice(None, None, 2)
        a, d = a[tuple(sl)], d[tuple(sl)]
    return a, d


def _upsample_axis(x, axis):
    shape = list(x.shape)
    shape[axis] *= 2
    out = np.zeros(shape)
    sl = [slice(None)] * x.ndim
    sl[axis] = slice(None, None, 2)
    out[tuple(sl)] = x
    return out


def _synthesis_1d(a, d, lo, hi, axis, dilation, decimated):
    if decimated:
        return _filter_axis(_upsample_axis(a, axis), lo, axis, 1, True) + _filter_axis(_upsample_axis(d, axis), hi, axis, 1, True)
    return 0.5 * (_filter_axis(a, lo, axis, dilation, True) + _filter_axis(d, hi, axis, dilation, True))


# --------------------------------------------------------------------------- #
# 2D transforms
# --------------------------------------------------------------------------- #


def _undecimated_level(a, lo, hi, dil):
    lo_c, hi_c = np.empty_like(a), np.empty_like(a)
    _kernels.corr_pair_rows(a, lo, hi, dil, lo_c, hi_c)
    ll, lh, hl, hh = (np.empty_like(a) for _ in range(4))
    _kernels.corr_pair_cols(lo_c, lo, hi, dil, ll, lh)
    _kernels.corr_pair_cols(hi_c, lo, hi, dil, hl, hh)
    return ll, (lh, hl, hh)


def _undecimated_inverse_level(a, bands, lo, hi, dil):
    lh, hl, hh = (np.ascontiguousarray(b, dtype=np.float64) for b in bands)
    lo_c, hi_c, out = np.empty_like(a), np.empty_like(a), np.empty_like(a)
    _kernels.conv_pair_cols(a, lh, lo, hi, dil, 0.5, lo_c)
    _kernels.conv_pair_cols(hl, hh, lo, hi, dil, 0.5, hi_c)
    _kernels.conv_pair_rows(lo_c, hi_c, lo, hi, dil, 0.5, out)
    return out


def dwt_forward(frame, plan: WaveletPlan | None = None) -> WaveletCoeffs:
    plan = plan or WaveletPlan()
    x = as_frame(frame)
    plan.check_shape(x.shape)
    lo, hi = plan.filters
    dec = plan.mode is WaveletMode.DECIMATED
    if not dec:
        # Compiled fast path; the generic code below computes the same thing.
        details = []
        a = np.ascontiguousarray(x)
        for j in range(plan.levels):
            a, bands = _undecimated_level(a, lo, hi, 2**j)
            details.append(bands)
        return WaveletCoeffs(a, details, plan.mode)
    details = []
    a = x
    for j in range(plan.levels):
        dil = 1 if dec else 2**j
        lo_c, hi_c = _analysis_1d(a, lo, hi, 1, dil, dec)
        ll, lh = _analysis_1d(lo_c, lo, hi, 0, dil, dec)
        hl, hh = _analysis_1d(hi_c, lo, hi, 0, dil, dec)
        details.append((lh, hl, hh))
        a = ll
    return WaveletCoeffs(a, details, plan.mode)


def dwt_inverse(coeffs: WaveletCoeffs, plan: WaveletPlan | None = None) -> np.ndarray:
    plan = plan or WaveletPlan()
    if coeffs.mode is not plan.mode or coeffs.levels != plan.levels:
        raise ValueError("coefficients were produced by a different wavelet plan")
    lo, hi = plan.filters
    dec = plan.mode is WaveletMode.DECIMATED
    a = coeffs.approx
    if not dec:
        a = np.ascontiguousarray(a, dtype=np.float64)
        for j in range(plan.levels - 1, -1, -1):
            a = _undecimated_inverse_level(a, coeffs.details[j], lo, hi, 2**j)
        return a
    for j in range(plan.levels - 1, -1, -1):
        dil = 1 if dec else 2**j
        lh, hl, hh = coeffs.details[j]
        lo_c = _synthesis_1d(a, lh, lo, hi, 0, dil, dec)
        hi_c = _synthesis_1d(hl, hh, lo, hi, 0, dil, dec)
        a = _synthesis_1d(lo_c, hi_c, lo, hi, 1, dil, dec)
    return a


# --------------------------------------------------------------------------- #
# Thresholding
# --------------------------------------------------------------------------- #


def threshold_values(c: np.ndarray, p: int, lambda_tau: float, literal: bool = False) -> np.ndarray:
    """Soft (``p=1``) or hard (``p=0``) thresholding of an array.

    Soft: ``max(|c| - lambda_tau, 0) sign(c)``.  Hard keeps ``|c| >= lambda_tau``;
    with ``literal=True`` it keeps ``c >= lambda_tau`` instead, which also
    discards every negative value.
    """
    if lambda_tau < 0:
        raise ValueError("lambda_tau must be non-negative")
    if p not in (0, 1):
        raise ValueError(f"p must be 0 or 1, got {p}")
    c = np.ascontiguousarray(c, dtype=np.float64)
    out = np.empty_like(c)
    _kernels.threshold_into(c, int(p), float(lambda_tau), bool(literal), out)
    return out


def threshold(coeffs: WaveletCoeffs, p: int, lambda_tau: float, literal: bool = False) -> WaveletCoeffs:
    """Threshold the detail bands; the approximation band passes through."""
    if lambda_tau == 0 and not literal:
        return WaveletCoeffs(coeffs.approx.copy(), [tuple(b.copy() for b in bands) for bands in coeffs.details], coeffs.mode)
    details = [tuple(threshold_values(b, p, lambda_tau, literal) for b in bands) for bands in coeffs.details]
    return WaveletCoeffs(coeffs.approx.copy(), details, coeffs.mode)


_workspace = threading.local()


def _buffers(shape, count):
    """Per-thread scratch arrays; reusing them avoids page-faulting fresh memory every frame."""
    pool = getattr(_workspace, "pool", None)
    if pool is None or pool[0] != shape or len(pool[1]) < count:
        pool = (shape, [np.empty(shape) for _ in range(count)])
        _workspace.pool = pool
    return pool[1]


def _project_undecimated(x, plan: WaveletPlan, p: int, lambda_tau: float, literal: bool) -> np.ndarray:
    """Fused forward transform, in-place thresholding and shift-averaged inverse."""
    lo, hi = plan.filters
    Q = plan.levels
    buf = _buffers(x.shape, 3 * Q + 4)
    t0, t1 = buf[0], buf[1]
    ping = buf[2:4]
    bands = buf[4:]
    a = x
    for j in range(Q):
        dil = 2**j
        lh, hl, hh = bands[3 * j:3 * j + 3]
        _kernels.corr_pair_rows(a, lo, hi, dil, t0, t1)
        a = ping[j % 2]
        _kernels.corr_pair_cols(t0, lo, hi, dil, a, lh)
        _kernels.corr_pair_cols(t1, lo, hi, dil, hl, hh)
        for b in (lh, hl, hh):
            _kernels.threshold_into(b, p, lambda_tau, literal, b)
    for j in range(Q - 1, -1, -1):
        dil = 2**j
        lh, hl, hh = bands[3 * j:3 * j + 3]
        _kernels.conv_pair_cols(a, lh, lo, hi, dil, 0.5, t0)
        _kernels.conv_pair_cols(hl, hh, lo, hi, dil, 0.5, t1)
        out = np.empty(x.shape) if j == 0 else (ping[1] if a is ping[0] else ping[0])
        _kernels.conv_pair_rows(t0, t1, lo, hi, dil, 0.5, out)
        a = out
    return a


def project_omega2(frame, plan: WaveletPlan | None = None, p: int = 0, lambda_tau: float = 10.0, literal: bool = False) -> np.ndarray:
    """``W^+ thr_p(W frame, lambda_tau)``: projection onto the wavelet-sparsity set."""
    plan = plan or WaveletPlan()
    if plan.mode is WaveletMode.CYCLE_SPINNING:
        if lambda_tau < 0:
            raise ValueError("lambda_tau must be non-negative")
        if p not in (0, 1):
            raise ValueError(f"p must be 0 or 1, got {p}")
        x = np.ascontiguousarray(as_frame(frame))
        return _project_undecimated(x, plan, int(p), float(lambda_tau), bool(literal))
    return dwt_inverse(threshold(dwt_forward(frame, plan), p, lambda_tau, literal), plan)
