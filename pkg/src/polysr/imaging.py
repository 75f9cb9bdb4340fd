"""Image operators for the acquisition model.

Frames are 2D ``float64`` numpy arrays indexed ``[row, col]``.  The operators
here realize blur (``H``), Laplacian regularization (``S``), decimation
(``D``), zero-insertion upsampling (``D^T``) and inter-frame motion (``G``)
as explicit operations on frames, each paired with its adjoint.

Convolution convention: ``out[n] = sum_m k(m) x[n - m]`` where ``m`` ranges
over the kernel support relative to its origin.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import ndimage


class DimensionError(ValueError):
    """Raised when frame, kernel or motion shapes are incompatible."""


class BoundaryRule(enum.Enum):
    PERIODIC = "periodic"
    SYMMETRIC = "symmetric"


PERIODIC = BoundaryRule.PERIODIC
SYMMETRIC = BoundaryRule.SYMMETRIC


def as_frame(data) -> np.ndarray:
    """Return ``data`` as a finite 2D float64 array (copying only if needed)."""
    frame = np.asarray(data, dtype=np.float64)
    if frame.ndim != 2 or frame.size == 0:
        raise DimensionError(f"frame must be a non-empty 2D array, got shape {frame.shape}")
    if not np.all(np.isfinite(frame)):
        raise ValueError("frame contains non-finite values")
    return frame


class Kernel2D:
    """Finite-support 2D FIR filter.

    ``taps[i, j]`` is the coefficient at spatial offset
    ``(i - origin[0], j - origin[1])``.
    """

    __slots__ = ("taps", "origin")

    def __init__(self, taps, origin=None):
        taps = np.array(taps, dtype=np.float64, ndmin=2)
        if taps.ndim != 2 or taps.size == 0:
            raise DimensionError("kernel taps must be a non-empty 2D array")
        if origin is None:
            origin = (taps.shape[0] // 2, taps.shape[1] // 2)
        self.taps = taps
        self.origin = (int(origin[0]), int(origin[1]))

    @classmethod
    def delta(cls, shift=(0, 0)) -> "Kernel2D":
        """Kronecker delta at spatial offset ``shift`` (row, col)."""
        r, c = int(shift[0]), int(shift[1])
        taps = np.zeros((2 * abs(r) + 1, 2 * abs(c) + 1))
        taps[abs(r) + r, abs(c) + c] = 1.0
        return cls(taps, (abs(r), abs(c)))

    @property
    def shape(self):
        return self.taps.shape

    @property
    def radius(self) -> int:
        """Largest absolute offset (either axis) of any tap slot."""
        (r0, c0), (h, w) = self.origin, self.taps.shape
        return max(r0, h - 1 - r0, c0, w - 1 - c0)

    def flip(self) -> "Kernel2D":
        """Spatial reversal ``k(-n)``; the kernel of the adjoint convolution."""
        h, w = self.taps.shape
        return Kernel2D(self.taps[::-1, ::-1].copy(), (h - 1 - self.origin[0], w - 1 - self.origin[1]))

    def centered(self, radius: int | None = None) -> np.ndarray:
        """Taps zero-padded onto a ``(2r+1, 2r+1)`` grid with the origin at the center."""
        r = self.radius if radius is None else radius
        if r < self.radius:
            raise DimensionError(f"radius {r} smaller than kernel radius {self.radius}")
        out = np.zeros((2 * r + 1, 2 * r + 1))
        top, left = r - self.origin[0], r - self.origin[1]
        h, w = self.taps.shape
        out[top:top + h, left:left + w] = self.taps
        return out

    def __eq__(self, other):
        if not isinstance(other, Kernel2D):
            return NotImplemented
        return self.origin == other.origin and np.array_equal(self.taps, other.taps)

    def __hash__(self):
        return hash((self.origin, self.taps.shape, self.taps.tobytes()))

    def __repr__(self):
        return f"Kernel2D(shape={self.taps.shape}, origin={self.origin})"


def uniform_blur(size: int = 3) -> Kernel2D:
    """``size x size`` uniform mask with unit DC gain."""
    return Kernel2D(np.full((size, size), 1.0 / (size * size)))


def laplacian() -> Kernel2D:
    """5-point Laplacian scaled by 1/8 so its frequency response stays within [-1, 0]."""
    return Kernel2D(np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]]) / 8.0)


@dataclass(frozen=True)
class DecimationSpec:
    """Decimation by ``M = diag(d, d)``: ``output(n) = input(M n)``."""

    d: int

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"scale factor must be a positive integer, got {self.d}")

    @property
    def matrix(self) -> np.ndarray:
        return np.diag([self.d, self.d])

    @property
    def cosets(self) -> list[tuple[int, int]]:
        """Coset offsets in row-major order over ``{0..d-1}^2``."""
        return [(i, j) for i in range(self.d) for j in range(self.d)]


def _as_spec(spec) -> DecimationSpec:
    return spec if isinstance(spec, DecimationSpec) else DecimationSpec(int(spec))


def _pad_mode(boundary: BoundaryRule) -> str:
    return "wrap" if BoundaryRule(boundary) is BoundaryRule.PERIODIC else "symmetric"


def conv2d(frame, kernel: Kernel2D, boundary: BoundaryRule = PERIODIC) -> np.ndarray:
    """Same-size 2D convolution of ``frame`` by ``kernel``."""
    x = as_frame(frame)
    kh, kw = kernel.taps.shape
    if kh > x.shape[0] or kw > x.shape[1]:
        raise DimensionError(f"kernel {kernel.taps.shape} larger than frame {x.shape}")
    o0, o1 = kernel.origin
    before = (kh - 1 - o0, kw - 1 - o1)
    xp = np.pad(x, ((before[0], o0), (before[1], o1)), mode=_pad_mode(boundary))
    H, W = x.shape
    out = np.zeros_like(x)
    # out[n] += k[i, j] * x[n - (i - o0), j - o1]; fixed summation order.
    for i in range(kh):
        r = before[0] - (i - o0)
        for j in range(kw):
            t = kernel.taps[i, j]
            if t != 0.0:
                c = before[1] - (j - o1)
                out += t * xp[r:r + H, c:c + W]
    return out


def adjoint_conv2d(frame, kernel: Kernel2D, boundary: BoundaryRule = PERIODIC) -> np.ndarray:
    """Adjoint of :func:`conv2d` (exact under periodic boundary)."""
    return conv2d(frame, kernel.flip(), boundary)


def decimate(frame, spec) -> np.ndarray:
    x = as_frame(frame)
    d = _as_spec(spec).d
    if x.shape[0] % d or x.shape[1] % d:
        raise DimensionError(f"frame {x.shape} not divisible by scale {d}")
    return x[::d, ::d].copy()


def upsample_zero(frame, spec) -> np.ndarray:
    y = as_frame(frame)
    d = _as_spec(spec).d
    out = np.zeros((y.shape[0] * d, y.shape[1] * d))
    out[::d, ::d] = y
    return out


# --------------------------------------------------------------------------- #
# Motion
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class GlobalShift:
    """Translation by ``dx`` columns and ``dy`` rows: ``warp(f)(r, c) = f(r - dy, c - dx)``."""

    dx: float
    dy: float


@dataclass(frozen=True, eq=False)
class DenseFlow:
    """Per-pixel displacement defined on the target grid: ``warp(f)(p) = f(p - (v, u))``."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        if np.shape(self.u) != np.shape(self.v) or np.ndim(self.u) != 2:
            raise DimensionError("flow components must be 2D arrays of equal shape")

    @property
    def shape(self):
        return np.shape(self.u)


MotionEstimate = GlobalShift | DenseFlow


def bilinear_sample(frame: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Bilinear interpolation at real coordinates; out-of-frame clamps to the edge."""
    H, W = frame.shape
    rows = np.clip(rows, 0.0, H - 1.0)
    cols = np.clip(cols, 0.0, W - 1.0)
    r0 = np.minimum(np.floor(rows).astype(np.intp), H - 2) if H > 1 else np.zeros(rows.shape, np.intp)
    c0 = np.minimum(np.floor(cols).astype(np.intp), W - 2) if W > 1 else np.zeros(cols.shape, np.intp)
    fr = rows - r0
    fc = cols - c0
    r1 = np.minimum(r0 + 1, H - 1)
    c1 = np.minimum(c0 + 1, W - 1)
    top = frame[r0, c0] * (1.0 - fc) + frame[r0, c1] * fc
    bot = frame[r1, c0] * (1.0 - fc) + frame[r1, c1] * fc
    return top * (1.0 - fr) + bot * fr


def _shift_axis(x: np.ndarray, shift: float, axis: int) -> np.ndarray:
    """Separable linear-interpolation shift along one axis with edge replication."""
    n = x.shape[axis]
    whole = np.floor(shift)
    frac = shift - whole
    src = np.clip(np.arange(n) - int(whole), 0, n - 1)
    a = np.take(x, src, axis=axis)
    if frac == 0.0:
        return a
    src1 = np.clip(np.arange(n) - int(whole) - 1, 0, n - 1)
    b = np.take(x, src1, axis=axis)
    return (1.0 - frac) * a + frac * b


def warp(frame, motion) -> np.ndarray:
    """Apply ``G``: resample ``frame`` at motion-displaced coordinates (bilinear)."""
    x = as_frame(frame)
    if isinstance(motion, GlobalShift):
        if motion.dx == 0 and motion.dy == 0:
            return x.copy()
        # Bilinear sampling of a uniform shift is separable.
        return _shift_axis(_shift_axis(x, float(motion.dy), 0), float(motion.dx), 1)
    if isinstance(motion, DenseFlow):
        if motion.shape != x.shape:
            raise DimensionError(f"flow {motion.shape} does not match frame {x.shape}")
        rr, cc = np.indices(x.shape, dtype=np.float64)
        return bilinear_sample(x, rr - motion.v, cc - motion.u)
    raise TypeError(f"unsupported motion estimate {type(motion).__name__}")


# --------------------------------------------------------------------------- #
# Interpolation
# --------------------------------------------------------------------------- #


def _cubic_weights(t: np.ndarray, a: float = -0.5) -> np.ndarray:
    """Keys cubic convolution weights for the 4 neighbours at offsets -1, 0, 1, 2."""
    def k(s):
        s = np.abs(s)
        return np.where(
            s <= 1,
            (a + 2) * s**3 - (a + 3) * s**2 + 1,
            np.where(s < 2, a * s**3 - 5 * a * s**2 + 8 * a * s - 4 * a, 0.0),
        )

    return np.stack([k(t + 1), k(t), k(1 - t), k(2 - t)], axis=-1)


def _cubic_matrix(n_in: int, d: int) -> np.ndarray:
    """1D upscaling matrix mapping LR sample ``n`` to HR position ``d * n``."""
    pos = np.arange(n_in * d) / d
    base = np.floor(pos).astype(np.intp)
    w = _cubic_weights(pos - base)
    mat = np.zeros((n_in * d, n_in))
    rows = np.arange(n_in * d)
    for t, off in enumerate((-1, 0, 1, 2)):
        np.add.at(mat, (rows, np.clip(base + off, 0, n_in - 1)), w[:, t])
    return mat


def bicubic_upscale(frame, spec) -> np.ndarray:
    """Catmull-Rom (a = -0.5) interpolation by ``d`` with edge replication.

    LR sample ``n`` lands on HR position ``d * n`` so the result is aligned
    with :func:`decimate`.
    """
    y = as_frame(frame)
    d = _as_spec(spec).d
    if d == 1:
        return y.copy()
    mr = _cubic_matrix(y.shape[0], d)
    mc = _cubic_matrix(y.shape[1], d)
    return mr @ y @ mc.T


def resize_bilinear(field: np.ndarray, shape, align: str = "center") -> np.ndarray:
    """Resample a 2D array to ``shape`` with bilinear interpolation.

    ``align="center"`` maps pixel centers; ``align="grid"`` maps sample ``n`` of
    the input to ``n * scale`` of the output (the decimation grid).
    """
    field = np.asarray(field, dtype=np.float64)
    H, W = shape
    h, w = field.shape
    if align == "grid":
        rows = np.arange(H) * (h / H)
        cols = np.arange(W) * (w / W)
    else:
        rows = (np.arange(H) + 0.5) * (h / H) - 0.5
        cols = (np.arange(W) + 0.5) * (w / W) - 0.5
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return bilinear_sample(field, rr, cc)


def gaussian_smooth(frame: np.ndarray, sigma: float) -> np.ndarray:
    return ndimage.gaussian_filter(frame, sigma, mode="nearest")
