"""Registration between consecutive frames.

Two estimators are provided: a global translation from phase correlation
(fast path for translational sequences) and a coarse-to-fine Horn-Schunck
dense flow.  Both follow the convention of :func:`polysr.imaging.warp`:
``warp(prev, estimate) ~= curr``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .imaging import (
    DenseFlow,
    DimensionError,
    GlobalShift,
    as_frame,
    gaussian_smooth,
    resize_bilinear,
    warp,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FlowParams:
    lambda_smooth: float = 1e3
    pyramid_levels: int = 4
    pyramid_spacing: float = 2.0
    iterations_per_level: int = 50

    def __post_init__(self):
        if self.lambda_smooth <= 0:
            raise ValueError("lambda_smooth must be positive")
        if self.pyramid_levels < 1:
            raise ValueError("pyramid_levels must be >= 1")
        if self.pyramid_spacing <= 1:
            raise ValueError("pyramid_spacing must be > 1")
        if self.iterations_per_level < 1:
            raise ValueError("iterations_per_level must be >= 1")


def _check_pair(prev, curr):
    prev, curr = as_frame(prev), as_frame(curr)
    if prev.shape != curr.shape:
        raise DimensionError(f"frame shapes differ: {prev.shape} vs {curr.shape}")
    return prev, curr


def _parabolic_offset(ym, y0, yp) -> float:
    denom = ym - 2.0 * y0 + yp
    if denom >= 0:  # not a maximum; keep the integer peak
        return 0.0
    return float(np.clip(0.5 * (ym - yp) / denom, -0.5, 0.5))


def _phase_correlation(prev, curr):
    H, W = prev.shape
    win = np.outer(np.hanning(H), np.hanning(W)) if min(H, W) > 2 else 1.0
    fa = np.fft.fft2((prev - prev.mean()) * win)
    fb = np.fft.fft2((curr - curr.mean()) * win)
    cross = fb * np.conj(fa)
    mag = np.abs(cross)
    cross = np.where(mag > 1e-12 * max(mag.max(), 1e-300), cross / np.maximum(mag, 1e-300), 0.0)
    corr = np.real(np.fft.ifft2(cross))
    r, c = np.unravel_index(int(np.argmax(corr)), corr.shape)
    dr = _parabolic_offset(corr[(r - 1) % H, c], corr[r, c], corr[(r + 1) % H, c]) if H > 2 else 0.0
    dc = _parabolic_offset(corr[r, (c - 1) % W], corr[r, c], corr[r, (c + 1) % W]) if W > 2 else 0.0
    # Wrap peak position into (-N/2, N/2].
    dy = ((r + H // 2) % H) - H // 2 + dr
    dx = ((c + W // 2) % W) - W // 2 + dc
    return float(dx), float(dy)


def _refine_shift(prev, curr, dx, dy, iterations=5):
    """Gauss-Newton steps on ``sum (curr - warp(prev, d))^2`` over the frame interior."""
    H, W = prev.shape
    m = int(np.ceil(max(abs(dx), abs(dy)))) + 2
    if H <= 2 * m + 2 or W <= 2 * m + 2:
        return dx, dy
    sl = (slice(m, H - m), slice(m, W - m))
    x0, y0 = dx, dy
    for _ in range(iterations):
        w = warp(prev, GlobalShift(dx, dy))
        gy, gx = np.gradient(w)
        # warp(f, d)(p) = f(p - d), so its derivative in dx is -f_x.
        jx, jy, e = -gx[sl].ravel(), -gy[sl].ravel(), (curr - w)[sl].ravel()
        A = np.array([[jx @ jx, jx @ jy], [jx @ jy, jy @ jy]])
        b = np.array([jx @ e, jy @ e])
        if np.linalg.cond(A) > 1e8:
            break
        step = np.clip(np.linalg.solve(A, b), -0.5, 0.5)
        dx, dy = dx + step[0], dy + step[1]
        if np.abs(step).max() < 1e-4:
            break
    if max(abs(dx - x0), abs(dy - y0)) > 1.0:  # diverged; keep the correlation peak
        return x0, y0
    return float(dx), float(dy)


def estimate_global_shift(prev, curr) -> GlobalShift:
    """Translation maximizing the phase correlation of ``prev`` and ``curr``.

    The integer peak is refined per axis by a three-point parabolic fit.  A
    Hann window suppresses the border discontinuity of non-circular motion,
    but it also pulls the fitted peak towards zero, so a few Gauss-Newton
    steps on the intensity residual finish the subpixel estimate.
    """
    prev, curr = _check_pair(prev, curr)
    dx, dy = _phase_correlation(prev, curr)
    dx, dy = _refine_shift(prev, curr, dx, dy)
    return GlobalShift(dx=dx, dy=dy)


# --------------------------------------------------------------------------- #
# Horn-Schunck
# --------------------------------------------------------------------------- #


def _gradients(img: np.ndarray):
    """Central differences with replicate boundary."""
    p = np.pad(img, 1, mode="edge")
    gx = 0.5 * (p[1:-1, 2:] - p[1:-1, :-2])
    gy = 0.5 * (p[2:, 1:-1] - p[:-2, 1:-1])
    return gx, gy


def _neighbour_sum(f: np.ndarray):
    """Sum over 4-neighbours inside the frame and the neighbour count."""
    s = np.zeros_like(f)
    s[1:, :] += f[:-1, :]
    s[:-1, :] += f[1:, :]
    s[:, 1:] += f[:, :-1]
    s[:, :-1] += f[:, 1:]
    return s


def _neighbour_count(shape) -> np.ndarray:
    return _neighbour_sum(np.ones(shape))


def hs_energy(u, v, u0, v0, ix, iy, it, lam) -> float:
    """Linearized Horn-Schunck energy around the flow ``(u0, v0)``."""
    data = it + ix * (u - u0) + iy * (v - v0)
    smooth = (
        np.sum(np.diff(u, axis=0) ** 2) + np.sum(np.diff(u, axis=1) ** 2)
        + np.sum(np.diff(v, axis=0) ** 2) + np.sum(np.diff(v, axis=1) ** 2)
    )
    return float(np.sum(data**2) + lam * smooth)


def _hs_level(prev, curr, u, v, params: FlowParams, history=None):
    warped = warp(prev, DenseFlow(u, v))
    gx1, gy1 = _gradients(warped)
    gx2, gy2 = _gradients(curr)
    ix, iy = 0.5 * (gx1 + gx2), 0.5 * (gy1 + gy2)
    it = curr - warped
    u0, v0 = u.copy(), v.copy()
    lam = params.lambda_smooth
    denom = lam * _neighbour_count(u.shape) + ix**2 + iy**2
    rr, cc = np.indices(u.shape)
    colours = [(rr + cc) % 2 == 0, (rr + cc) % 2 == 1]
    count = _neighbour_count(u.shape)
    if history is not None:
        history.append(hs_energy(u, v, u0, v0, ix, iy, it, lam))
    for _ in range(params.iterations_per_level):
        # Red-black sweeps: each half-sweep is an exact block minimization,
        # so the energy never increases.
        for mask in colours:
            ubar = _neighbour_sum(u) / count
            vbar = _neighbour_sum(v) / count
            resid = it + ix * (ubar - u0) + iy * (vbar - v0)
            corr = resid / denom
            u = np.where(mask, ubar - ix * corr, u)
            v = np.where(mask, vbar - iy * corr, v)
        if history is not None:
            history.append(hs_energy(u, v, u0, v0, ix, iy, it, lam))
    return u, v


def estimate_dense_flow(prev, curr, params: FlowParams | None = None, history: list | None = None) -> DenseFlow:
    """Coarse-to-fine Horn-Schunck flow from ``prev`` to ``curr``.

    If ``history`` is a list, the linearized energy at the finest level is
    appended before the first and after every iteration.
    """
    params = params or FlowParams()
    prev, curr = _check_pair(prev, curr)
    H, W = prev.shape
    if min(H, W) < 2 ** (params.pyramid_levels - 1):
        raise DimensionError(f"frame {prev.shape} too small for {params.pyramid_levels} pyramid levels")

    shapes = [(H, W)]
    for _ in range(params.pyramid_levels - 1):
        h, w = shapes[-1]
        shapes.append((max(1, int(round(h / params.pyramid_spacing))), max(1, int(round(w / params.pyramid_spacing)))))

    pyr_prev, pyr_curr = [prev], [curr]
    # Anti-alias blur tied to the spacing.
    sigma = 1.0 / np.sqrt(2.0) * np.sqrt(params.pyramid_spacing**2 - 1.0)
    for shape in shapes[1:]:
        pyr_prev.append(resize_bilinear(gaussian_smooth(pyr_prev[-1], sigma), shape))
        pyr_curr.append(resize_bilinear(gaussian_smooth(pyr_curr[-1], sigma), shape))

    u = np.zeros(shapes[-1])
    v = np.zeros(shapes[-1])
    for level in range(params.pyramid_levels - 1, -1, -1):
        shape = shapes[level]
        if u.shape != shape:
            sy, sx = shape[0] / u.shape[0], shape[1] / u.shape[1]
            u = resize_bilinear(u, shape) * sx
            v = resize_bilinear(v, shape) * sy
        u, v = _hs_level(pyr_prev[level], pyr_curr[level], u, v, params, history if level == 0 else None)
    return DenseFlow(u, v)


def upscale_motion(motion, d: int):
    """Map a motion estimate on the LR grid onto the HR grid."""
    if d < 1:
        raise ValueError("scale must be >= 1")
    if d == 1:
        return motion
    if isinstance(motion, GlobalShift):
        return GlobalShift(motion.dx * d, motion.dy * d)
    if isinstance(motion, DenseFlow):
        shape = (motion.shape[0] * d, motion.shape[1] * d)
        return DenseFlow(resize_bilinear(motion.u, shape, align="grid") * d,
                         resize_bilinear(motion.v, shape, align="grid") * d)
    raise TypeError(f"unsupported motion estimate {type(motion).__name__}")
