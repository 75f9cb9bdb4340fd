"""Least-squares FIR approximate inverses of polyphase transfer matrices.

For a transfer matrix ``T(z)`` we seek an FIR ``U(z)`` minimizing the
coefficient-domain error ``sum_{i,j} || [U T - I]_{(i,j)} ||^2``.  The
problem decouples over the rows of ``U`` and every row shares one
block-Toeplitz normal matrix built from the cross-correlations of the
entries of ``T``.

Designs are stored in a small binary cache so they are computed once per
configuration; see ``docs/cache-format.md``.
"""

from __future__ import annotations

import hashlib
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg, signal

from .imaging import DecimationSpec, Kernel2D
from .polyphase import PolyphaseMatrix, apply_polyphase, build_system_transfer, compose

log = logging.getLogger(__name__)

INF = math.inf
DEFAULT_RIDGE = 1e-8
MAGIC = b"MRFB"
VERSION = 1


class DesignError(RuntimeError):
    """Normal equations too ill-conditioned to solve reliably."""

    def __init__(self, message: str, condition: float):
        super().__init__(f"{message} (condition estimate {condition:.3e})")
        self.condition = condition


class CacheFormatError(ValueError):
    """Cache file is truncated or malformed."""


class StaleCacheError(RuntimeError):
    """Cache was designed for a different configuration."""


class MissingDesignError(KeyError):
    """No inverse filterbank for the requested ``lambda1``."""


@dataclass(frozen=True, eq=False)
class DesignSpec:
    """Everything that determines a family of inverse filterbanks."""

    tap_radius: int
    lambda1_values: tuple
    alphaT: float
    h: Kernel2D
    s: Kernel2D
    d: int
    ridge: float = DEFAULT_RIDGE

    def __post_init__(self):
        if self.tap_radius < 1:
            raise ValueError("tap_radius must be >= 1")
        if not self.lambda1_values:
            raise ValueError("lambda1_values must be non-empty")
        object.__setattr__(self, "lambda1_values", tuple(float(v) for v in self.lambda1_values))

    def digest(self) -> bytes:
        """SHA-256 of a canonical encoding of the configuration."""
        m = hashlib.sha256()
        m.update(struct.pack("<HHdd", self.d, self.tap_radius, self.alphaT, self.ridge))
        m.update(struct.pack(f"<{len(self.lambda1_values)}d", *self.lambda1_values))
        for k in (self.h, self.s):
            m.update(struct.pack("<HHhh", *k.taps.shape, *k.origin))
            m.update(np.ascontiguousarray(k.taps, dtype="<f8").tobytes())
        return m.digest()

    def system(self, lambda1: float) -> PolyphaseMatrix:
        """Transfer matrix to invert for ``lambda1``; the infinite case gets the ridge."""
        T = build_system_transfer(lambda1, self.alphaT, self.h, self.s, DecimationSpec(self.d))
        if math.isinf(lambda1) and self.ridge:
            T = PolyphaseMatrix(T.coeffs.copy(), T.d)
            r = T.radius
            T.coeffs[np.arange(T.size), np.arange(T.size), r, r] += self.ridge
        return T


def _offsets(radius: int) -> np.ndarray:
    a = np.arange(-radius, radius + 1)
    return np.stack(np.meshgrid(a, a, indexing="ij"), -1).reshape(-1, 2)


def normal_equations(T: PolyphaseMatrix, tap_radius: int):
    """Block-Toeplitz normal matrix ``G`` and right-hand sides ``B`` (one column per row of ``U``).

    Unknowns are ordered ``(m, p)``: input channel ``m`` of the ``U`` row,
    then tap offset ``p`` (row-major over the ``(2r+1)^2`` window).
    """
    n, rt = T.size, T.radius
    P = _offsets(tap_radius)
    npos = len(P)
    # R[m, m'](delta) = sum_j sum_u T[m, j](u + delta) T[m', j](u)
    span = 2 * rt
    corr = np.zeros((n, n, 2 * span + 1, 2 * span + 1))
    for m in range(n):
        for mp in range(m, n):
            acc = np.zeros((2 * span + 1, 2 * span + 1))
            for j in range(n):
                acc += signal.correlate2d(T.coeffs[m, j], T.coeffs[mp, j], mode="full")
            corr[m, mp] = acc
            corr[mp, m] = acc[::-1, ::-1]
    # G[(m,p),(m',p')] = R[m,m'](p' - p), zero outside the correlation span.
    delta = P[None, :, :] - P[:, None, :]
    inside = np.all(np.abs(delta) <= span, axis=-1)
    di = np.clip(delta + span, 0, 2 * span)
    G = np.zeros((n * npos, n * npos))
    for m in range(n):
        for mp in range(n):
            block = corr[m, mp][di[..., 0], di[..., 1]]
            G[m * npos:(m + 1) * npos, mp * npos:(mp + 1) * npos] = np.where(inside, block, 0.0)
    # B[(m,p), i] = T[m, i](-p)
    B = np.zeros((n * npos, n))
    q = -P + rt
    valid = np.all((q >= 0) & (q <= 2 * rt), axis=-1)
    qc = np.clip(q, 0, 2 * rt)
    for m in range(n):
        for i in range(n):
            B[m * npos:(m + 1) * npos, i] = np.where(valid, T.coeffs[m, i][qc[:, 0], qc[:, 1]], 0.0)
    return G, B


def design_objective(U: PolyphaseMatrix, T: PolyphaseMatrix) -> float:
    """``sum ||[U T - I]_{(i,j)}||^2`` over all coefficients."""
    P = compose(U, T)
    err = P.coeffs.copy()
    r = P.radius
    err[np.arange(P.size), np.arange(P.size), r, r] -= 1.0
    return float(np.sum(err**2))


def design_inverse(T: PolyphaseMatrix, spec, max_condition: float = 1e13):
    """Least-squares FIR inverse of ``T`` with entries on a ``(2r+1)^2`` window.

    ``spec`` is a :class:`DesignSpec` or the tap radius.  Returns ``(U, residual)``
    where ``residual`` is the Frobenius norm of the coefficients of ``U T - I``.
    """
    r = spec.tap_radius if isinstance(spec, DesignSpec) else int(spec)
    if r < 1:
        raise ValueError("tap_radius must be >= 1")
    if r < T.radius:
        log.warning("tap radius %d is smaller than the transfer matrix radius %d", r, T.radius)
    G, B = normal_equations(T, r)
    w, V = linalg.eigh(G)
    top = w[-1]
    cond = top / w[0] if w[0] > 0 else math.inf
    if not (w[0] > top / max_condition):
        raise DesignError("singular normal equations", cond)
    log.info("inverse design: d=%d radius=%d condition=%.3e", T.d, r, cond)
    X = V @ ((V.T @ B) / w[:, None])
    n, npos = T.size, (2 * r + 1) ** 2
    coeffs = X.T.reshape(n, n, 2 * r + 1, 2 * r + 1)
    U = PolyphaseMatrix(coeffs, T.d)
    return U, math.sqrt(design_objective(U, T))


def validate_inverse(U: PolyphaseMatrix, T: PolyphaseMatrix, trials: int = 10, shape=(64, 64), seed: int = 0) -> dict:
    """Reconstruction errors of ``U(T x)`` against ``x`` on random frames."""
    if U.d != T.d:
        raise ValueError("scale mismatch")
    rng = np.random.default_rng(seed)
    errors = []
    for _ in range(trials):
        x = rng.standard_normal(shape)
        rec = apply_polyphase(U, apply_polyphase(T, x))
        errors.append(float(np.linalg.norm(rec - x) / np.linalg.norm(x)))
    return {
        "max_rel_error": max(errors),
        "mean_rel_error": float(np.mean(errors)),
        "coeff_residual": math.sqrt(design_objective(U, T)),
    }


# --------------------------------------------------------------------------- #
# Cache
# --------------------------------------------------------------------------- #


@dataclass
class InverseFilterbankCache:
    d: int
    tap_radius: int
    alphaT: float
    ridge: float
    spec_hash: bytes
    records: dict = field(default_factory=dict)  # lambda1 -> (PolyphaseMatrix, residual)

    def filterbank(self, lambda1: float) -> PolyphaseMatrix:
        try:
            return self.records[float(lambda1)][0]
        except KeyError:
            raise MissingDesignError(f"no inverse filterbank designed for lambda1={lambda1}") from None

    def residual(self, lambda1: float) -> float:
        return self.records[float(lambda1)][1]

    @property
    def lambdas(self):
        return tuple(self.records)


def build_cache(spec: DesignSpec) -> InverseFilterbankCache:
    """Design one inverse filterbank per ``lambda1`` in the spec."""
    cache = InverseFilterbankCache(spec.d, spec.tap_radius, spec.alphaT, spec.ridge, spec.digest())
    for lam in spec.lambda1_values:
        U, res = design_inverse(spec.system(lam), spec)
        cache.records[lam] = (U, res)
        log.info("designed lambda1=%s residual=%.3e", lam, res)
    return cache


_HEADER = struct.Struct("<4sHHHddH")
_RECORD = struct.Struct("<dd")


def cache_store(path, cache: InverseFilterbankCache) -> None:
    n = cache.d * cache.d
    width = 2 * cache.tap_radius + 1
    parts = [_HEADER.pack(MAGIC, VERSION, cache.d, cache.tap_radius, cache.alphaT, cache.ridge, len(cache.records))]
    for lam, (U, res) in cache.records.items():
        coeffs = U.padded(cache.tap_radius).coeffs if U.radius < cache.tap_radius else U.coeffs
        if coeffs.shape != (n, n, width, width):
            raise ValueError(f"filterbank for lambda1={lam} has shape {coeffs.shape}")
        parts.append(_RECORD.pack(lam, res))
        parts.append(np.ascontiguousarray(coeffs, dtype="<f8").tobytes())
    parts.append(cache.spec_hash)
    Path(path).write_bytes(b"".join(parts))


def cache_load(path, expected: DesignSpec | None = None) -> InverseFilterbankCache:
    """Read a cache file; if ``expected`` is given, reject designs for another configuration."""
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise CacheFormatError("file too short for header")
    magic, version, d, radius, alphaT, ridge, count = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise CacheFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise CacheFormatError(f"unsupported cache version {version}")
    if d < 1 or radius < 1:
        raise CacheFormatError("invalid scale or tap radius")
    n = d * d
    width = 2 * radius + 1
    ntaps = n * n * width * width
    expected_len = _HEADER.size + count * (_RECORD.size + 8 * ntaps) + 32
    if len(blob) != expected_len:
        raise CacheFormatError(f"expected {expected_len} bytes, found {len(blob)}")
    records = {}
    off = _HEADER.size
    for _ in range(count):
        lam, res = _RECORD.unpack_from(blob, off)
        off += _RECORD.size
        coeffs = np.frombuffer(blob, dtype="<f8", count=ntaps, offset=off).reshape(n, n, width, width)
        off += 8 * ntaps
        if not np.all(np.isfinite(coeffs)) or not (res >= 0):
            raise CacheFormatError(f"corrupt record for lambda1={lam}")
        records[lam] = (PolyphaseMatrix(coeffs.astype(np.float64), d), res)
    cache = InverseFilterbankCache(d, radius, alphaT, ridge, blob[off:off + 32], records)
    if expected is not None and cache.spec_hash != expected.digest():
        raise StaleCacheError(f"cache {path} was designed for a different configuration; rerun `design`")
    return cache
