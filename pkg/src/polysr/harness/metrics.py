"""Frame quality metrics on the 8-bit intensity scale."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from ..imaging import DimensionError

PEAK = 255.0


def _pair(reference, test):
    a = np.asarray(reference, dtype=np.float64)
    b = np.asarray(test, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"frame shapes differ: {a.shape} vs {b.shape}")
    return a, b


def mse(reference, test) -> float:
    """Mean squared error per pixel."""
    a, b = _pair(reference, test)
    d = a - b
    return float(np.mean(d * d))


def psnr(reference, test, peak: float = PEAK) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical frames."""
    m = mse(reference, test)
    if m == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / m)


def to_db(value: float) -> float:
    return 10.0 * math.log10(value) if value > 0 else -math.inf


def mse_db(reference, test) -> float:
    """``10 log10(mse)``."""
    return to_db(mse(reference, test))


def ssim(reference, test, data_range: float = PEAK, sigma: float = 1.5, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean structural similarity with an 11x11 Gaussian window.

    Local statistics use population (not sample) covariance, and the mean is
    taken over pixels whose window lies fully inside the frame.
    """
    a, b = _pair(reference, test)
    radius = 5
    if min(a.shape) < 2 * radius + 1:
        raise DimensionError(f"frame {a.shape} smaller than the 11x11 SSIM window")

    def blur(f):
        return ndimage.gaussian_filter(f, sigma, mode="reflect", truncate=radius / sigma)

    mu_a, mu_b = blur(a), blur(b)
    va = blur(a * a) - mu_a * mu_a
    vb = blur(b * b) - mu_b * mu_b
    cov = blur(a * b) - mu_a * mu_b
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a**2 + mu_b**2 + c1) * (va + vb + c2))
    return float(s[radius:-radius, radius:-radius].mean())


@dataclass(frozen=True)
class FrameMetrics:
    mse: float
    psnr: float
    ssim: float

    @property
    def mse_db(self) -> float:
        return to_db(self.mse)

    def as_dict(self) -> dict:
        out = asdict(self)
        out["mse_db"] = self.mse_db
        return out


def frame_metrics(reference, test) -> FrameMetrics:
    return FrameMetrics(mse(reference, test), psnr(reference, test), ssim(reference, test))
