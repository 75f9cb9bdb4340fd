"""Synthetic sequences: a window translating over a still image.

Each frame the window moves by a random unit step in the 8-neighbourhood.
Steps that would push the window outside the source are clamped.  An
optional black square occludes the middle of the window for a few frames
(an innovation outlier), and LR observations are blurred, decimated and
corrupted by white Gaussian noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..imaging import DecimationSpec, GlobalShift, Kernel2D, as_frame, conv2d, decimate, uniform_blur

STEPS = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0)]
BUILTIN_SOURCES = ("camera", "astronaut", "coffee", "chelsea", "rocket", "moon", "brick", "grass")


class SourceError(ValueError):
    """Source image missing or too small."""


def load_source(source) -> np.ndarray:
    """A grayscale source image from an array, a file path or a scikit-image sample name."""
    if isinstance(source, np.ndarray):
        return as_frame(source)
    name = str(source)
    if Path(name).exists():
        from .frameio import detect_format, read_pgm, read_png

        return read_pgm(name) if detect_format(name) == "pgm" else read_png(name)
    if name in BUILTIN_SOURCES:
        try:
            from skimage import color, data
        except ImportError:
            raise SourceError(f"built-in source {name!r} needs scikit-image") from None
        img = getattr(data, name)()
        if img.ndim == 3:
            img = color.rgb2gray(img[..., :3]) * 255.0
        return np.asarray(img, dtype=np.float64)
    raise SourceError(f"source image {name!r} not found")


@dataclass
class SyntheticSpec:
    source: object = "camera"
    window: int = 256
    frame_count: int = 40
    d: int = 2
    noise_variance: float = 10.0
    outlier: bool = True
    outlier_size: int = 128
    outlier_value: float = 0.0
    outlier_onset: int = 32
    outlier_offset: int = 35
    blur: Kernel2D = field(default_factory=lambda: uniform_blur(3))
    seed: int = 0


@dataclass
class SyntheticSequence:
    hr: list
    lr: list
    motions: list  # motions[k] maps HR frame k-1 to k; motions[0] is None
    origins: list


def random_walk(shape, window: int, count: int, rng) -> list:
    """Window origins of a clamped unit-step walk starting at the center."""
    max_r, max_c = shape[0] - window, shape[1] - window
    r, c = max_r // 2, max_c // 2
    origins = [(r, c)]
    for _ in range(count - 1):
        dr, dc = STEPS[int(rng.integers(len(STEPS)))]
        r = min(max(r + dr, 0), max_r)
        c = min(max(c + dc, 0), max_c)
        origins.append((r, c))
    return origins


def generate_synthetic(spec: SyntheticSpec) -> SyntheticSequence:
    src = load_source(spec.source)
    w = spec.window
    if spec.frame_count < 1:
        raise ValueError("frame_count must be >= 1")
    if w % spec.d:
        raise ValueError(f"window {w} not divisible by scale {spec.d}")
    kh, kw = spec.blur.taps.shape
    margin = max(kh, kw)
    if src.shape[0] < w + 2 * margin + 2 or src.shape[1] < w + 2 * margin + 2:
        raise SourceError(f"source {src.shape} too small for a {w}x{w} window")
    rng = np.random.default_rng(spec.seed)
    # The walk stays clear of a border margin so the blur never needs padding.
    inner = src[margin:-margin, margin:-margin]
    origins = random_walk(inner.shape, w, spec.frame_count, rng)
    dspec = DecimationSpec(spec.d)
    sigma = float(np.sqrt(spec.noise_variance))
    lo = (w - spec.outlier_size) // 2
    hr, lr, motions = [], [], []
    for k, (r, c) in enumerate(origins):
        r0, c0 = r + margin, c + margin
        patch = src[r0 - margin:r0 + w + margin, c0 - margin:c0 + w + margin].copy()
        if spec.outlier and spec.outlier_onset <= k < spec.outlier_offset:
            patch[margin + lo:margin + lo + spec.outlier_size, margin + lo:margin + lo + spec.outlier_size] = spec.outlier_value
        x = patch[margin:-margin, margin:-margin]
        blurred = conv2d(patch, spec.blur)[margin:-margin, margin:-margin]
        y = decimate(blurred, dspec)
        if sigma > 0:
            y = y + rng.normal(0.0, sigma, y.shape)
        hr.append(x.copy())
        lr.append(y)
        if k == 0:
            motions.append(None)
        else:
            pr, pc = origins[k - 1]
            motions.append(GlobalShift(dx=float(pc - c), dy=float(pr - r)))
    return SyntheticSequence(hr, lr, motions, origins)
