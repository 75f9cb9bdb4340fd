"""Acceptance suite.

Every criterion records one ``PASS``/``FAIL`` line and then asserts; the
lines are printed in an "acceptance criteria" section at the end of the
pytest run.  Purely informational lines are tagged ``INFO``.  Run
with ``pytest tests/test_acceptance.py -v`` or ``python tests/test_acceptance.py``.
"""

import math
import os
import sys
import time

import numpy as np
import pytest
from scipy import ndimage

from conftest import ACCEPTANCE_LINES
from polysr.design import build_cache
from polysr.engine import INF, SrrParams, design_spec_for, ltsr_cost, ltsr_gradient, mtsr_step, new_state, step
from polysr.harness.cli import main as cli_main
from polysr.harness.config import RunConfig
from polysr.harness.experiment import run_bench
from polysr.imaging import DecimationSpec, GlobalShift, conv2d, laplacian, uniform_blur
from polysr.polyphase import apply_polyphase, build_system_transfer, system_operator
from polysr.wavelet import WaveletMode, WaveletPlan, dwt_forward, dwt_inverse, project_omega2, threshold_values

H, S, SPEC = uniform_blur(3), laplacian(), DecimationSpec(2)
METHODS = ("bicubic", "ltsr", "mtsr", "wmtsr")
SOURCES = ("camera", "astronaut", "coffee", "chelsea", "rocket")


def verdict(label, ok, detail=""):
    line = f"{'PASS' if ok else 'FAIL'} {label}" + (f": {detail}" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def info(label, detail):
    ACCEPTANCE_LINES.append(f"INFO {label}: {detail}")


def dense(op, shape):
    n = shape[0] * shape[1]
    eye = np.eye(n)
    return np.stack([np.asarray(op(eye[i].reshape(shape))).ravel() for i in range(n)], axis=1)


# --------------------------------------------------------------------------- #
# 1. Dense oracle


def test_1_dense_oracle_equivalence():
    t0 = time.perf_counter()
    shape = (16, 16)
    rng = np.random.default_rng(1)
    prm = SrrParams.preset("mtsr")
    Hm = dense(lambda f: conv2d(f, H), shape)
    Sm = dense(lambda f: conv2d(f, S), shape)
    Dm = dense(lambda f: f[::2, ::2], shape)
    A = Hm.T @ Dm.T @ Dm @ Hm + (prm.alpha + prm.alphaT) * Sm.T @ Sm
    g = rng.uniform(0, 255, shape)
    y = rng.uniform(0, 255, (8, 8))
    exact = np.linalg.solve(A, Hm.T @ Dm.T @ y.ravel() + prm.alphaT * Sm.T @ Sm @ g.ravel())
    errors = {}
    for r in (3, 5, 7):
        state = new_state("mtsr", prm, tap_radius=r, cache=build_cache(design_spec_for("mtsr", prm, r)))
        state.prev_estimate, state.k = g.copy(), 1
        x = mtsr_step(state, y, GlobalShift(0, 0))
        errors[r] = float(np.linalg.norm(x.ravel() - exact) / np.linalg.norm(exact))
    elapsed = time.perf_counter() - t0
    ok = errors[7] <= 1e-2 and errors[3] > errors[5] > errors[7] and elapsed < 10
    verdict("criterion 1 dense-oracle equivalence", ok,
            ", ".join(f"r={r} err={e:.2e}" for r, e in errors.items()) + f", {elapsed:.1f} s")


# --------------------------------------------------------------------------- #
# 2. Probe exactness


def test_2_operator_probe_exactness():
    rng = np.random.default_rng(2)
    worst = 0.0
    for lam in (INF, 1.0, 0.3):
        T = build_system_transfer(lam, 0.015, H, S, SPEC)
        for _ in range(20):
            x = rng.uniform(-255, 255, (32, 32))
            direct = system_operator(x, lam, 0.015, H, S, SPEC)
            # Independent composition: scipy wrap-mode filters, numpy slicing for D and D^T.
            hx = ndimage.convolve(x, H.taps, mode="wrap")
            up = np.zeros_like(x)
            up[::2, ::2] = hx[::2, ::2]
            sx = ndimage.convolve(x, S.taps, mode="wrap")
            ref = ndimage.correlate(up, H.taps, mode="wrap") + 0.015 * ndimage.correlate(sx, S.taps, mode="wrap")
            if not math.isinf(lam):
                ref = lam * ref + x
            worst = max(worst, np.abs(apply_polyphase(T, x) - ref).max(), np.abs(direct - ref).max())
    verdict("criterion 2 operator-probe exactness", worst <= 1e-12, f"max abs error {worst:.1e}")


# --------------------------------------------------------------------------- #
# 3. Wavelets


def test_3_wavelet_correctness():
    rng = np.random.default_rng(3)
    dec, cs = WaveletPlan(mode=WaveletMode.DECIMATED), WaveletPlan(mode=WaveletMode.CYCLE_SPINNING)
    x = rng.uniform(0, 255, (64, 64))
    pr = max(np.abs(dwt_inverse(dwt_forward(x, p), p) - x).max() for p in (dec, cs))
    c = dwt_forward(x, dec)
    parseval = abs(math.sqrt(sum(float(np.sum(a * a)) for a in c.arrays())) - np.linalg.norm(x))
    shift = (5, -3)
    sh = np.abs(np.roll(project_omega2(np.roll(x, shift, (0, 1)), cs, 0, 10.0), (-5, 3), (0, 1))
                - project_omega2(x, cs, 0, 10.0)).max()
    v = rng.normal(0, 20, 10000)
    lam = 10.0
    soft = np.sign(v) * np.maximum(np.abs(v) - lam, 0)
    hard = np.where(np.abs(v) >= lam, v, 0.0)
    closed = np.array_equal(threshold_values(v, 1, lam), soft) and np.array_equal(threshold_values(v, 0, lam), hard)
    ok = pr <= 1e-10 and parseval <= 1e-10 and sh <= 1e-10 and closed
    verdict("criterion 3 wavelet correctness", ok,
            f"reconstruction {pr:.1e}, Parseval {parseval:.1e}, shift {sh:.1e}, thresholds exact={closed}")


# --------------------------------------------------------------------------- #
# 4. Gradient


def test_4_gradient_check():
    rng = np.random.default_rng(4)
    prm = SrrParams.preset("ltsr")
    x, g = rng.uniform(0, 255, (2, 8, 8))
    y = rng.uniform(0, 255, (4, 4))
    grad = ltsr_gradient(x, y, g, prm, H, S)
    num = np.zeros_like(x)
    eps = 1e-3
    for idx in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[idx] = eps
        num[idx] = (ltsr_cost(x + e, y, g, prm, H, S) - ltsr_cost(x - e, y, g, prm, H, S)) / (2 * eps)
    rel = float(np.linalg.norm(grad - num) / np.linalg.norm(num))
    verdict("criterion 4 gradient check", rel <= 1e-6, f"relative error {rel:.1e}")


# --------------------------------------------------------------------------- #
# 5-6. Protocol runs


def _mean_db(records, method, frame):
    r = next(r for r in records if r["type"] == "mean" and r["method"] == method and r["frame"] == frame)
    return r["mse_db"], r["ssim"]


@pytest.fixture(scope="module")
def cache_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


def test_5_outlier_robustness(cache_dir):
    cfg = RunConfig(cache=str(cache_dir / "fb.mrfb"), threads=os.cpu_count() or 1)
    cfg.bench.seeds = 10
    cfg.bench.sources = SOURCES
    cfg.validate()
    t0 = time.perf_counter()
    rec = run_bench(cfg, METHODS, report=str(cache_dir / "outlier.jsonl"))
    elapsed = time.perf_counter() - t0
    at30 = {m: _mean_db(rec, m, 30)[0] for m in METHODS}
    at35 = {m: _mean_db(rec, m, 35)[0] for m in METHODS}
    spike = {m: at35[m] - at30[m] for m in METHODS}
    info("criterion 5 frame 30 MSE dB", ", ".join(f"{m} {v:.2f}" for m, v in at30.items()))
    info("criterion 5 frame 35 MSE dB", ", ".join(f"{m} {v:.2f}" for m, v in at35.items()))
    targets = {"bicubic": 26.49, "ltsr": 14.55, "mtsr": 13.87, "wmtsr": 13.86}
    info("criterion 5 targets (+-2 dB, informational)",
         ", ".join(f"{m} {at35[m]:.2f} vs {t:.2f} {'within' if abs(at35[m] - t) <= 2 else 'outside'}"
                   for m, t in targets.items()))
    info("criterion 5 bicubic above ltsr at frame 35 (informational)", str(at35["bicubic"] > at35["ltsr"]))
    ok = (at35["wmtsr"] < at35["ltsr"] and at35["mtsr"] < at35["ltsr"] and spike["ltsr"] >= 3
          and spike["mtsr"] < 1 and spike["wmtsr"] < 1 and elapsed < 300)
    verdict("criterion 5 outlier robustness", ok,
            f"spikes ltsr {spike['ltsr']:.2f} dB, mtsr {spike['mtsr']:.2f} dB, wmtsr {spike['wmtsr']:.2f} dB, "
            f"{elapsed:.0f} s")


def test_6_steady_state_quality(cache_dir):
    cfg = RunConfig(cache=str(cache_dir / "fb.mrfb"), threads=os.cpu_count() or 1)
    cfg.synthetic.frames = 201
    cfg.synthetic.outlier = False
    cfg.bench.seeds = 3
    cfg.bench.sources = SOURCES
    cfg.validate()
    t0 = time.perf_counter()
    rec = run_bench(cfg, METHODS, report=str(cache_dir / "steady.jsonl"))
    elapsed = time.perf_counter() - t0
    mse = {m: _mean_db(rec, m, 200)[0] for m in METHODS}
    ssim = {m: _mean_db(rec, m, 200)[1] for m in METHODS}
    info("criterion 6 frame 200", ", ".join(f"{m} {mse[m]:.2f} dB ssim {ssim[m]:.4f}" for m in METHODS))
    checks = {
        "ssim wmtsr > mtsr": ssim["wmtsr"] > ssim["mtsr"],
        "ssim wmtsr > bicubic": ssim["wmtsr"] > ssim["bicubic"],
        "mse wmtsr <= ltsr + 0.5 dB": mse["wmtsr"] <= mse["ltsr"] + 0.5,
        "runtime < 10 min": elapsed < 600,
    }
    verdict("criterion 6 steady-state quality", all(checks.values()),
            ", ".join(f"{k} {'ok' if v else 'violated'}" for k, v in checks.items()) + f", {elapsed:.0f} s")


# --------------------------------------------------------------------------- #
# 7. Complexity


def _frame_time(method, state, frames, motion):
    step(method, state, frames[0], None)
    step(method, state, frames[1], motion)  # warm-up, including compilation
    t = []
    for y in frames[2:]:
        t0 = time.perf_counter()
        step(method, state, y, motion)
        t.append(time.perf_counter() - t0)
    return float(np.median(t))


def test_7_complexity():
    rng = np.random.default_rng(7)
    caches = {m: build_cache(design_spec_for(m, SrrParams.preset(m), 7)) for m in ("mtsr", "wmtsr")}
    sizes = (128, 256, 512)
    times = {m: [] for m in caches}
    for n in sizes:
        frames = [rng.uniform(0, 255, (n // 2, n // 2)) for _ in range(9)]
        for m in caches:
            state = new_state(m, SrrParams.preset(m), cache=caches[m])
            times[m].append(_frame_time(m, state, frames, GlobalShift(1.0, -1.0)))
    ml = np.array([n * n * math.log(n * n) for n in sizes])
    r2 = {}
    for m, t in times.items():
        coef = np.polyfit(ml, t, 1)
        resid = np.asarray(t) - np.polyval(coef, ml)
        r2[m] = 1 - float(resid @ resid) / float(np.sum((t - np.mean(t)) ** 2))
    ratios = [w / m for w, m in zip(times["wmtsr"], times["mtsr"])]
    info("criterion 7 per-frame seconds", ", ".join(
        f"{n}^2 mtsr {a:.4f} wmtsr {b:.4f}" for n, a, b in zip(sizes, times["mtsr"], times["wmtsr"])))
    ok = max(ratios) <= 4 and min(r2.values()) >= 0.95
    verdict("criterion 7 complexity", ok,
            f"wmtsr/mtsr ratio {max(ratios):.2f} (max), R^2 mtsr {r2['mtsr']:.3f} wmtsr {r2['wmtsr']:.3f}")


# --------------------------------------------------------------------------- #
# 8. Determinism


def test_8_determinism(tmp_path):
    ini = tmp_path / "bench.ini"
    ini.write_text("[run]\nseed = 11\n[synthetic]\nwindow = 64\nframes = 8\noutlier_size = 16\n"
                   "outlier_onset = 3\noutlier_offset = 5\n[bench]\nseeds = 3\nsources = camera, moon\n")
    blobs = []
    for k in range(2):
        report = tmp_path / f"r{k}.jsonl"
        rc = cli_main(["bench", "--config", str(ini), "--threads", "1", "--cache", str(tmp_path / "fb.mrfb"),
                       "--report", str(report)])
        assert rc == 0
        blobs.append((report.read_bytes(), (tmp_path / f"r{k}.trajectory.csv").read_bytes()))
    verdict("criterion 8 determinism", blobs[0] == blobs[1], f"{len(blobs[0][0])} report bytes compared")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
