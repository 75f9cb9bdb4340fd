"""Online super-resolution loops over the temporal state ``x(k-1)``.

Three reconstructions share the acquisition model ``y = D H x + e`` and the
temporal prior ``x(k) ~ G x(k-1)``:

* ``mtsr`` -- one application of a precomputed inverse filterbank per frame,
  solving ``[H'D'DH + (a + aT) S'S] x = H'D'y + aT S'S G x(k-1)``.
* ``wmtsr`` -- alternating projections between the data/temporal set (a
  filterbank solve weighted by ``lambda1``) and a wavelet-sparsity set
  (thresholding with cycle spinning).
* ``ltsr`` -- a few steepest-descent steps on the same cost, the classic
  LMS-style baseline.

Motion estimates passed to the step functions live on the HR grid.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .design import DEFAULT_RIDGE, DesignSpec, InverseFilterbankCache, MissingDesignError, build_cache
from .imaging import (
    DecimationSpec,
    DimensionError,
    Kernel2D,
    adjoint_conv2d,
    as_frame,
    bicubic_upscale,
    conv2d,
    decimate,
    laplacian,
    uniform_blur,
    upsample_zero,
    warp,
)
from .polyphase import apply_polyphase
from .wavelet import WaveletPlan, project_omega2

log = logging.getLogger(__name__)

INF = math.inf
METHODS = ("bicubic", "ltsr", "mtsr", "wmtsr")


@dataclass(frozen=True)
class SrrParams:
    d: int = 2
    alpha: float = 0.005
    alphaT: float = 0.015
    lambda_tau: float = 10.0
    p: int = 0
    J: int = 1
    lambda1_schedule: tuple = (INF,)
    mu: float = 3.4
    J_baseline: int = 2
    literal_threshold: bool = False

    def __post_init__(self):
        object.__setattr__(self, "lambda1_schedule", tuple(float(v) for v in self.lambda1_schedule))
        if int(self.d) != self.d or self.d < 1:
            raise ValueError("d must be a positive integer")
        for name in ("alpha", "alphaT", "lambda_tau", "mu"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.p not in (0, 1):
            raise ValueError("p must be 0 or 1")
        if self.J < 1 or self.J_baseline < 0:
            raise ValueError("iteration counts must be positive")
        if len(self.lambda1_schedule) != self.J:
            raise ValueError(f"lambda1_schedule has {len(self.lambda1_schedule)} entries, J is {self.J}")
        if any(not (v > 0) for v in self.lambda1_schedule):
            raise ValueError("lambda1 values must be positive or inf")
        if any(b > a for a, b in zip(self.lambda1_schedule, self.lambda1_schedule[1:])):
            raise ValueError("lambda1_schedule must be non-increasing")

    @staticmethod
    def default_schedule(J: int) -> tuple:
        """``lambda1(1) = inf`` and ``1`` afterwards."""
        return (INF,) + (1.0,) * (J - 1)

    @classmethod
    def preset(cls, method: str, **overrides) -> "SrrParams":
        """Default parameter set for ``method``."""
        base = {
            "ltsr": dict(alpha=1e-4, alphaT=0.017, mu=3.4, J_baseline=2),
            "mtsr": dict(alpha=0.005, alphaT=0.015),
            "wmtsr": dict(alpha=0.0, alphaT=0.015, J=1, lambda_tau=10.0, p=0),
            "bicubic": dict(),
        }
        if method not in base:
            raise ValueError(f"unknown method {method!r}")
        kw = {**base[method], **overrides}
        if "lambda1_schedule" not in kw:
            kw["lambda1_schedule"] = cls.default_schedule(kw.get("J", 1))
        return cls(**kw)


def design_spec_for(method: str, params: SrrParams, tap_radius: int = 7,
                    h: Kernel2D | None = None, s: Kernel2D | None = None,
                    ridge: float = DEFAULT_RIDGE) -> DesignSpec:
    """Filterbank design needed by ``method``.

    ``mtsr`` inverts ``H'D'DH + (a + aT) S'S`` once; ``wmtsr`` needs one design
    per scheduled ``lambda1`` with the temporal weight alone.
    """
    h = h or uniform_blur(3)
    s = s or laplacian()
    if method == "mtsr":
        return DesignSpec(tap_radius, (INF,), params.alpha + params.alphaT, h, s, params.d, ridge)
    if method == "wmtsr":
        lams = tuple(sorted(set(params.lambda1_schedule) | {INF}, reverse=True))
        return DesignSpec(tap_radius, lams, params.alphaT, h, s, params.d, ridge)
    raise ValueError(f"{method!r} does not use an inverse filterbank")


@dataclass
class SrrState:
    params: SrrParams
    cache: InverseFilterbankCache | None = None
    plan: WaveletPlan = field(default_factory=WaveletPlan)
    h: Kernel2D = field(default_factory=lambda: uniform_blur(3))
    s: Kernel2D = field(default_factory=laplacian)
    prev_estimate: np.ndarray | None = None
    k: int = 0
    diagnostics: dict = field(default_factory=dict)

    @property
    def spec(self) -> DecimationSpec:
        return DecimationSpec(self.params.d)

    def advance(self, estimate: np.ndarray) -> np.ndarray:
        self.prev_estimate = estimate
        self.k += 1
        return estimate


def new_state(method: str, params: SrrParams | None = None, tap_radius: int = 7,
              cache: InverseFilterbankCache | None = None, plan: WaveletPlan | None = None,
              h: Kernel2D | None = None, s: Kernel2D | None = None) -> SrrState:
    """Engine state for ``method``, designing the filterbank if no cache is given."""
    params = params or SrrParams.preset(method)
    h = h or uniform_blur(3)
    s = s or laplacian()
    if cache is None and method in ("mtsr", "wmtsr"):
        cache = build_cache(design_spec_for(method, params, tap_radius, h, s))
    return SrrState(params, cache, plan or WaveletPlan(), h, s)


# --------------------------------------------------------------------------- #
# Shared pieces
# --------------------------------------------------------------------------- #


def blur_decimate(x, h: Kernel2D, spec) -> np.ndarray:
    """``D H x``."""
    return decimate(conv2d(x, h), spec)


def back_project(y, h: Kernel2D, spec) -> np.ndarray:
    """``H' D' y``."""
    return adjoint_conv2d(upsample_zero(y, spec), h)


def laplacian_normal(x, s: Kernel2D) -> np.ndarray:
    """``S' S x``."""
    return adjoint_conv2d(conv2d(x, s), s)


def compute_rhs(y, warped_prev, lambda1: float, alphaT: float, h: Kernel2D, s: Kernel2D, spec,
                prev_iterate=None) -> np.ndarray:
    """Right-hand side of the weighted data/temporal solve.

    ``lambda1 = inf``: ``H'D'y + aT S'S Gx``; the previous iterate is ignored.
    Finite ``lambda1``: ``x_prev_iter + lambda1 (H'D'y + aT S'S Gx)``.
    """
    spec = spec if isinstance(spec, DecimationSpec) else DecimationSpec(int(spec))
    y = as_frame(y)
    warped_prev = as_frame(warped_prev)
    if (y.shape[0] * spec.d, y.shape[1] * spec.d) != warped_prev.shape:
        raise DimensionError(f"LR frame {y.shape} does not match HR frame {warped_prev.shape} at scale {spec.d}")
    rhs = back_project(y, h, spec)
    if alphaT:
        rhs = rhs + alphaT * laplacian_normal(warped_prev, s)
    if math.isinf(lambda1):
        return rhs
    if prev_iterate is None:
        raise ValueError("finite lambda1 needs the previous iterate")
    prev_iterate = as_frame(prev_iterate)
    if prev_iterate.shape != warped_prev.shape:
        raise DimensionError("previous iterate has the wrong shape")
    return prev_iterate + lambda1 * rhs


def _start(state: SrrState, y, motion):
    """Return ``(y, G x(k-1))``, or ``(y, None)`` when the sequence starts here."""
    y = as_frame(y)
    if state.prev_estimate is None:
        return y, None
    d = state.params.d
    if state.prev_estimate.shape != (y.shape[0] * d, y.shape[1] * d):
        raise DimensionError(f"LR frame {y.shape} does not match the state at scale {d}")
    return y, warp(state.prev_estimate, motion)


def _initialize(state: SrrState, y) -> np.ndarray:
    state.diagnostics = {"init": "bicubic"}
    return state.advance(bicubic_upscale(y, state.spec))


def _filterbank(state: SrrState, lambda1: float):
    if state.cache is None:
        raise MissingDesignError("engine state has no inverse filterbank cache")
    return state.cache.filterbank(lambda1)


def data_misfit(y, x, h: Kernel2D, spec) -> float:
    """``||y - D H x||^2``."""
    r = as_frame(y) - blur_decimate(x, h, spec)
    return float(np.sum(r * r))


# --------------------------------------------------------------------------- #
# Steps
# --------------------------------------------------------------------------- #


def bicubic_step(state: SrrState, y, motion=None) -> np.ndarray:
    y = as_frame(y)
    state.diagnostics = {}
    return state.advance(bicubic_upscale(y, state.spec))


def mtsr_step(state: SrrState, y, motion) -> np.ndarray:
    """One filterbank solve per frame."""
    U = _filterbank(state, INF)
    y, warped = _start(state, y, motion)
    if warped is None:
        return _initialize(state, y)
    rhs = compute_rhs(y, warped, INF, state.params.alphaT, state.h, state.s, state.spec)
    state.diagnostics = {}
    return state.advance(apply_polyphase(U, rhs))


def wmtsr_step(state: SrrState, y, motion) -> np.ndarray:
    """Alternating projections: weighted filterbank solve, then wavelet thresholding.

    ``state.diagnostics["misfit"]`` lists ``||y - D H x_j||^2`` per iteration.
    """
    prm = state.params
    banks = [_filterbank(state, lam) for lam in prm.lambda1_schedule]
    y, warped = _start(state, y, motion)
    if warped is None:
        return _initialize(state, y)
    x = warped
    misfit = []
    for lam, U in zip(prm.lambda1_schedule, banks):
        rhs = compute_rhs(y, warped, lam, prm.alphaT, state.h, state.s, state.spec, prev_iterate=x)
        z = apply_polyphase(U, rhs)
        x = project_omega2(z, state.plan, prm.p, prm.lambda_tau, prm.literal_threshold)
        misfit.append(data_misfit(y, x, state.h, state.spec))
    state.diagnostics = {"misfit": misfit}
    return state.advance(x)


def ltsr_cost(x, y, warped_prev, params: SrrParams, h: Kernel2D, s: Kernel2D) -> float:
    """``||y - DHx||^2 + a ||Sx||^2 + aT ||S(x - G x(k-1))||^2``."""
    spec = DecimationSpec(params.d)
    r = as_frame(y) - blur_decimate(x, h, spec)
    sx = conv2d(x, s)
    st = conv2d(as_frame(x) - warped_prev, s)
    return float(np.sum(r * r) + params.alpha * np.sum(sx * sx) + params.alphaT * np.sum(st * st))


def ltsr_gradient(x, y, warped_prev, params: SrrParams, h: Kernel2D, s: Kernel2D) -> np.ndarray:
    """Exact gradient of :func:`ltsr_cost`."""
    spec = DecimationSpec(params.d)
    x = as_frame(x)
    g = back_project(blur_decimate(x, h, spec) - y, h, spec)
    g = g + params.alpha * laplacian_normal(x, s)
    g = g + params.alphaT * laplacian_normal(x - warped_prev, s)
    return 2.0 * g


def ltsr_step(state: SrrState, y, motion) -> np.ndarray:
    """``J_baseline`` descent steps from ``G x(k-1)``.

    The step is ``mu`` times half the gradient.  With ``mu = 3.4`` a step
    along the full gradient exceeds the stability limit ``2 / lambda_max``
    (``lambda_max`` of ``H'D'DH`` is about 0.31) and the recursion diverges.
    """
    prm = state.params
    y, warped = _start(state, y, motion)
    if warped is None:
        return _initialize(state, y)
    x = warped
    for _ in range(prm.J_baseline):
        x = x - (0.5 * prm.mu) * ltsr_gradient(x, y, warped, prm, state.h, state.s)
    state.diagnostics = {}
    return state.advance(x)


STEPS = {"bicubic": bicubic_step, "ltsr": ltsr_step, "mtsr": mtsr_step, "wmtsr": wmtsr_step}


def step(method: str, state: SrrState, y, motion) -> np.ndarray:
    try:
        fn = STEPS[method]
    except KeyError:
        raise ValueError(f"unknown method {method!r}") from None
    return fn(state, y, motion)


def run_sequence(method: str, lr_frames, motions, state: SrrState | None = None) -> list:
    """Reconstruct every frame; ``motions[k]`` maps frame ``k-1`` to ``k`` on the HR grid."""
    state = state or new_state(method)
    out = []
    for k, y in enumerate(lr_frames):
        out.append(step(method, state, y, motions[k] if k else None))
    return out


__all__ = [
    "INF", "METHODS", "SrrParams", "SrrState", "new_state", "design_spec_for", "compute_rhs",
    "mtsr_step", "wmtsr_step", "ltsr_step", "bicubic_step", "ltsr_cost", "ltsr_gradient",
    "data_misfit", "step", "run_sequence",
]
