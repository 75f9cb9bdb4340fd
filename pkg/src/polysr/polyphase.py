"""Polyphase representation of multirate systems on ``Z^2`` with ``M = diag(d, d)``.

Cosets ``k_1..k_{d^2}`` are ordered row-major over ``{0..d-1}^2``, so
``k_1 = (0, 0)``.  Component ``i`` of a frame holds ``x(M n - k_i)`` with
periodic wrap, and a :class:`PolyphaseMatrix` entry ``(i, j)`` maps input
coset ``j`` to output coset ``i``:

    out_i = sum_j entries[i, j] * in_j        (2D convolution on the LR grid)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .imaging import (
    PERIODIC,
    BoundaryRule,
    DecimationSpec,
    DimensionError,
    Kernel2D,
    adjoint_conv2d,
    as_frame,
    conv2d,
    decimate,
    upsample_zero,
)


@dataclass(frozen=True)
class CosetSet:
    d: int

    @property
    def cosets(self) -> list[tuple[int, int]]:
        return DecimationSpec(self.d).cosets

    def __len__(self):
        return self.d * self.d


def _d_of(cosets) -> int:
    if isinstance(cosets, CosetSet):
        return cosets.d
    if isinstance(cosets, DecimationSpec):
        return cosets.d
    return int(cosets)


def polyphase_decompose(frame, cosets) -> np.ndarray:
    """Split ``frame`` into a ``(d^2, H/d, W/d)`` stack of polyphase components."""
    x = as_frame(frame)
    d = _d_of(cosets)
    if x.shape[0] % d or x.shape[1] % d:
        raise DimensionError(f"frame {x.shape} not divisible by scale {d}")
    return np.stack([np.roll(x, k, axis=(0, 1))[::d, ::d] for k in DecimationSpec(d).cosets])


def polyphase_recompose(components, cosets) -> np.ndarray:
    """Inverse of :func:`polyphase_decompose`."""
    comps = np.asarray(components, dtype=np.float64)
    d = _d_of(cosets)
    if comps.ndim != 3 or comps.shape[0] != d * d:
        raise DimensionError(f"expected {d * d} equally sized components, got shape {comps.shape}")
    h, w = comps.shape[1:]
    out = np.zeros((h * d, w * d))
    up = np.zeros_like(out)
    for comp, k in zip(comps, DecimationSpec(d).cosets):
        # component[n] = x[d n - k]; cosets are disjoint so the sum is a placement.
        up[::d, ::d] = comp
        out += np.roll(up, (-k[0], -k[1]), axis=(0, 1))
    return out


@dataclass(eq=False)
class PolyphaseMatrix:
    """``d^2 x d^2`` grid of FIR kernels sharing a centered ``(2R+1)^2`` support.

    ``coeffs[i, j, a, b]`` is the tap of entry ``(i, j)`` at LR offset
    ``(a - R, b - R)``.
    """

    coeffs: np.ndarray
    d: int
    _spectra: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.float64)
        n = self.d * self.d
        if c.ndim != 4 or c.shape[:2] != (n, n) or c.shape[2] != c.shape[3] or c.shape[2] % 2 == 0:
            raise DimensionError(f"coefficient array {c.shape} is not a d^2 x d^2 grid of odd square kernels")
        if not np.all(np.isfinite(c)):
            raise ValueError("polyphase matrix has non-finite coefficients")
        self.coeffs = c

    @property
    def radius(self) -> int:
        return self.coeffs.shape[2] // 2

    @property
    def size(self) -> int:
        return self.d * self.d

    def entry(self, i: int, j: int) -> Kernel2D:
        r = self.radius
        return Kernel2D(self.coeffs[i, j], (r, r))

    @classmethod
    def identity(cls, d: int, scale: float = 1.0) -> "PolyphaseMatrix":
        n = d * d
        c = np.zeros((n, n, 1, 1))
        c[np.arange(n), np.arange(n), 0, 0] = scale
        return cls(c, d)

    @classmethod
    def zeros(cls, d: int, radius: int = 0) -> "PolyphaseMatrix":
        n = d * d
        return cls(np.zeros((n, n, 2 * radius + 1, 2 * radius + 1)), d)

    def padded(self, radius: int) -> "PolyphaseMatrix":
        r = self.radius
        if radius < r:
            raise DimensionError("cannot pad to a smaller radius")
        p = radius - r
        return PolyphaseMatrix(np.pad(self.coeffs, ((0, 0), (0, 0), (p, p), (p, p))), self.d)

    def trimmed(self) -> "PolyphaseMatrix":
        """Drop outer rings of taps that are zero in every entry."""
        c = self.coeffs
        r = self.radius
        while r > 0:
            ring = np.abs(c[:, :, [0, -1], :]).max(initial=0.0) + np.abs(c[:, :, :, [0, -1]]).max(initial=0.0)
            if ring != 0.0:
                break
            c = c[:, :, 1:-1, 1:-1]
            r -= 1
        return PolyphaseMatrix(c.copy(), self.d)

    def transpose_adjoint(self) -> "PolyphaseMatrix":
        """Polyphase matrix of the adjoint operator: entry ``(i, j)`` is ``entry(j, i)(-n)``."""
        return PolyphaseMatrix(self.coeffs.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1].copy(), self.d)

    def spectrum(self, shape) -> np.ndarray:
        """rfft2 of every entry folded periodically onto an LR grid of ``shape``."""
        key = tuple(shape)
        spec = self._spectra.get(key)
        if spec is None:
            h, w = key
            r = self.radius
            n = self.size
            folded = np.zeros((n, n, h, w))
            idx_r = (np.arange(-r, r + 1)) % h
            idx_c = (np.arange(-r, r + 1)) % w
            for a, ra in enumerate(idx_r):
                for b, cb in enumerate(idx_c):
                    folded[:, :, ra, cb] += self.coeffs[:, :, a, b]
            spec = np.fft.rfft2(folded)
            self._spectra[key] = spec
        return spec


def apply_polyphase(matrix: PolyphaseMatrix, frame, boundary: BoundaryRule = PERIODIC) -> np.ndarray:
    """Run ``frame`` through the multirate system described by ``matrix``."""
    x = as_frame(frame)
    d = matrix.d
    if x.shape[0] % d or x.shape[1] % d:
        raise DimensionError(f"frame {x.shape} not divisible by scale {d}")
    if BoundaryRule(boundary) is not BoundaryRule.PERIODIC:
        # Mirror-extend by whole LR samples, filter periodically, crop.
        p = d * (matrix.radius + 1)
        padded = np.pad(x, p, mode="symmetric")
        return apply_polyphase(matrix, padded, PERIODIC)[p:-p, p:-p]
    comps = polyphase_decompose(x, d)
    h, w = comps.shape[1:]
    spec = matrix.spectrum((h, w))
    cf = np.fft.rfft2(comps)
    out_f = np.einsum("ijab,jab->iab", spec, cf)
    out = np.fft.irfft2(out_f, s=(h, w))
    return polyphase_recompose(out, d)


def compose(a: PolyphaseMatrix, b: PolyphaseMatrix) -> PolyphaseMatrix:
    """Product ``a(z) b(z)``: entry ``(i, j) = sum_m a(i, m) * b(m, j)``."""
    if a.d != b.d:
        raise DimensionError(f"scale mismatch: {a.d} vs {b.d}")
    n = a.size
    ra, rb = a.radius, b.radius
    size = 2 * (ra + rb) + 1
    out = np.zeros((n, n, size, size))
    for i in range(n):
        for j in range(n):
            acc = out[i, j]
            for m in range(n):
                ka, kb = a.coeffs[i, m], b.coeffs[m, j]
                if ka.any() and kb.any():
                    acc += signal.convolve2d(ka, kb, mode="full")
    return PolyphaseMatrix(out, a.d)


# --------------------------------------------------------------------------- #
# System transfer matrix
# --------------------------------------------------------------------------- #


def system_operator(x, lambda1: float, alphaT: float, h: Kernel2D, s: Kernel2D, spec) -> np.ndarray:
    """Apply ``lambda1 (H^T D^T D H + alphaT S^T S) + I`` (or the bracket alone for ``lambda1 = inf``)."""
    dh = decimate(conv2d(x, h), spec)
    out = adjoint_conv2d(upsample_zero(dh, spec), h)
    if alphaT:
        out = out + alphaT * adjoint_conv2d(conv2d(x, s), s)
    if math.isinf(lambda1):
        return out
    return lambda1 * out + x


def build_system_transfer(lambda1: float, alphaT: float, h: Kernel2D, s: Kernel2D, spec) -> PolyphaseMatrix:
    """Polyphase matrix ``T(z)`` of the normal-equations operator, found by impulse probing.

    For finite ``lambda1`` the operator is ``lambda1 (H^T D^T D H + alphaT S^T S) + I``;
    ``lambda1 = math.inf`` selects ``H^T D^T D H + alphaT S^T S``.
    """
    spec = spec if isinstance(spec, DecimationSpec) else DecimationSpec(int(spec))
    if alphaT < 0:
        raise ValueError("alphaT must be non-negative")
    if not (lambda1 > 0):
        raise ValueError("lambda1 must be positive or math.inf")
    d = spec.d
    # HR reach of the operator, then in LR samples.
    reach = 2 * max(h.radius, s.radius)
    R = -(-(reach + d - 1) // d)
    lr = max(2 * R + 3, 2 * max(h.shape) + 2 * max(s.shape) + 3)
    c = lr // 2
    n = d * d
    coeffs = np.zeros((n, n, 2 * R + 1, 2 * R + 1))
    for j in range(n):
        comps = np.zeros((n, lr, lr))
        comps[j, c, c] = 1.0
        probe = polyphase_recompose(comps, d)
        resp = polyphase_decompose(system_operator(probe, lambda1, alphaT, h, s, spec), d)
        window = resp[:, c - R:c + R + 1, c - R:c + R + 1]
        leftover = resp.copy()
        leftover[:, c - R:c + R + 1, c - R:c + R + 1] = 0.0
        if np.any(leftover != 0.0):
            raise AssertionError("operator response exceeds the probing window")
        coeffs[:, j] = window
    return PolyphaseMatrix(coeffs, d).trimmed()
