"""Reconstruction runs and Monte Carlo benchmarks with JSON-lines reports.

A bench report holds, in order:

* one ``config`` record describing the run,
* ``frame`` records (method, seed, source, frame index, mse, mse_db, psnr, ssim)
  grouped by seed in seed order,
* ``mean`` records: per method and frame, metrics averaged over seeds,
* ``summary`` records: per method, averages over every frame and seed.

Reports carry no timings or host details, so a rerun with the same
configuration reproduces them byte for byte.  Next to the report a CSV of
mean MSE in dB per frame and method is written for plotting.
"""

from __future__ import annotations

import contextlib
import csv
import dataclasses
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from ..design import build_cache, cache_load, cache_store
from ..engine import SrrState, design_spec_for, new_state, step
from ..motion import estimate_dense_flow, estimate_global_shift, upscale_motion
from .config import ConfigError, RunConfig
from .metrics import frame_metrics, to_db
from .synthetic import SyntheticSpec, generate_synthetic

log = logging.getLogger(__name__)

FILTERBANK_METHODS = ("mtsr", "wmtsr")


def estimate_motions(lr_frames, mode: str, d: int, flow=None, true_motions=None) -> list:
    """HR-grid motion from frame ``k-1`` to ``k``; entry 0 is ``None``."""
    if mode == "true":
        if true_motions is None:
            raise ConfigError("motion = true needs a synthetic sequence")
        return list(true_motions)
    out = [None]
    for prev, curr in zip(lr_frames, lr_frames[1:]):
        if mode == "global":
            m = estimate_global_shift(prev, curr)
        elif mode == "dense":
            m = estimate_dense_flow(prev, curr, flow)
        else:
            raise ConfigError(f"unknown motion mode {mode!r}")
        out.append(upscale_motion(m, d))
    return out


def obtain_cache(cfg: RunConfig, method: str, rebuild: bool = False):
    """Load the filterbank cache for ``method``, designing and storing it if absent.

    A cache file designed for another configuration raises
    :class:`~polysr.design.StaleCacheError`.
    """
    if method not in FILTERBANK_METHODS:
        return None
    spec = design_spec_for(method, cfg.params_for(method), cfg.tap_radius)
    path = cfg.cache_path(method)
    if path and os.path.exists(path) and not rebuild:
        return cache_load(path, expected=spec)
    cache = build_cache(spec)
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        cache_store(path, cache)
        log.info("stored %s filterbanks in %s", method, path)
    return cache


def make_state(cfg: RunConfig, method: str, cache=None) -> SrrState:
    return new_state(method, cfg.params_for(method), cfg.tap_radius, cache=cache)


def reconstruct(method: str, lr_frames, motions, state: SrrState, on_frame=None) -> list:
    """Run ``method`` over a sequence; ``on_frame(k, estimate, diagnostics)`` is called per frame."""
    out = []
    for k, y in enumerate(lr_frames):
        x = step(method, state, y, motions[k])
        if on_frame is not None:
            on_frame(k, x, state.diagnostics)
        out.append(x)
    return out


def synthetic_spec(cfg: RunConfig, seed: int, source=None) -> SyntheticSpec:
    s = cfg.synthetic
    return SyntheticSpec(
        source=source if source is not None else s.source, window=s.window, frame_count=s.frames,
        d=cfg.scale, noise_variance=s.noise_variance, outlier=s.outlier, outlier_size=s.outlier_size,
        outlier_value=s.outlier_value, outlier_onset=s.outlier_onset, outlier_offset=s.outlier_offset,
        seed=seed,
    )


# --------------------------------------------------------------------------- #
# Reports
# --------------------------------------------------------------------------- #


def _dumps(record: dict) -> str:
    return json.dumps(record, sort_keys=True)


def config_record(cfg: RunConfig, methods) -> dict:
    params = {}
    for m in methods:
        p = dataclasses.asdict(cfg.params_for(m))
        p["lambda1_schedule"] = list(p["lambda1_schedule"])
        params[m] = p
    return {
        "type": "config",
        "methods": list(methods),
        "scale": cfg.scale,
        "seed": cfg.seed,
        "seeds": cfg.bench.seeds,
        "sources": list(cfg.bench.sources),
        "motion": cfg.motion,
        "tap_radius": cfg.tap_radius,
        "params": params,
        "flow": dataclasses.asdict(cfg.flow),
        "synthetic": dataclasses.asdict(cfg.synthetic),
    }


def metric_record(method: str, k: int, ref, est, **extra) -> dict:
    m = frame_metrics(ref, est)
    return {"type": "frame", "method": method, "frame": k, "mse": m.mse, "mse_db": m.mse_db,
            "psnr": m.psnr, "ssim": m.ssim, **extra}


def aggregate(frame_records, methods) -> list:
    """``mean`` records per method and frame, then one ``summary`` per method."""
    by_key = {}
    for r in frame_records:
        by_key.setdefault((r["method"], r["frame"]), []).append(r)
    out = []
    for method in methods:
        frames = sorted(k for (m, k) in by_key if m == method)
        for k in frames:
            rs = by_key[(method, k)]
            mse = float(np.mean([r["mse"] for r in rs]))
            out.append({"type": "mean", "method": method, "frame": k, "count": len(rs), "mse": mse,
                        "mse_db": to_db(mse), "ssim": float(np.mean([r["ssim"] for r in rs]))})
    for method in methods:
        rs = [r for r in frame_records if r["method"] == method]
        if not rs:
            continue
        mse = float(np.mean([r["mse"] for r in rs]))
        out.append({"type": "summary", "method": method, "count": len(rs), "mse": mse, "mse_db": to_db(mse),
                    "ssim": float(np.mean([r["ssim"] for r in rs]))})
    return out


def trajectory_path(report) -> str:
    p = Path(report)
    return str(p.with_name(p.stem + ".trajectory.csv"))


def write_trajectory(path, mean_records, methods) -> None:
    """Mean MSE in dB per frame, one column per method."""
    table = {}
    for r in mean_records:
        if r["type"] == "mean":
            table.setdefault(r["frame"], {})[r["method"]] = r["mse_db"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame"] + [f"{m}_mse_db" for m in methods])
        for k in sorted(table):
            w.writerow([k] + [repr(table[k].get(m, math.nan)) for m in methods])


def read_report(path) -> list:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


# --------------------------------------------------------------------------- #
# Bench
# --------------------------------------------------------------------------- #


def _bench_seed(task) -> list:
    cfg, index, methods, caches = task
    seed = cfg.seed + index
    source = cfg.bench.sources[index % len(cfg.bench.sources)]
    seq = generate_synthetic(synthetic_spec(cfg, seed, source))
    motions = estimate_motions(seq.lr, cfg.motion, cfg.scale, cfg.flow, seq.motions)
    records = []
    for method in methods:
        state = make_state(cfg, method, caches.get(method))
        est = reconstruct(method, seq.lr, motions, state)
        for k, (ref, x) in enumerate(zip(seq.hr, est)):
            records.append(metric_record(method, k, ref, x, seed=seed, source=str(source)))
    return records


@contextlib.contextmanager
def _thread_limit(threads: int):
    if threads != 1:
        yield
        return
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        yield
        return
    with threadpool_limits(limits=1):
        yield


def run_bench(cfg: RunConfig, methods=None, report=None) -> list:
    """Monte Carlo over ``cfg.bench.seeds`` synthetic sequences.

    Seeds run in worker processes when ``cfg.threads > 1``; records are
    written in seed order either way.  Returns every record of the report.
    """
    methods = tuple(methods or cfg.bench.methods)
    report = report or cfg.report
    caches = {m: obtain_cache(cfg, m) for m in methods if m in FILTERBANK_METHODS}
    tasks = [(cfg, i, methods, caches) for i in range(cfg.bench.seeds)]
    records = [config_record(cfg, methods)]
    fh = open(report, "w", encoding="utf-8") if report else None
    try:
        if fh:
            fh.write(_dumps(records[0]) + "\n")
        with _thread_limit(cfg.threads):
            if cfg.threads > 1:
                with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
                    results = pool.map(_bench_seed, tasks)
                    _collect(results, records, fh)
            else:
                _collect(map(_bench_seed, tasks), records, fh)
        summary = aggregate([r for r in records if r["type"] == "frame"], methods)
        records.extend(summary)
        if fh:
            for r in summary:
                fh.write(_dumps(r) + "\n")
    finally:
        if fh:
            fh.close()
    if report:
        write_trajectory(trajectory_path(report), summary, methods)
    return records


def _collect(results, records, fh):
    # Seed results are flushed as soon as they arrive so a failure keeps them.
    for seed_records in results:
        records.extend(seed_records)
        if fh:
            fh.writelines(_dumps(r) + "\n" for r in seed_records)
            fh.flush()


# --------------------------------------------------------------------------- #
# Single sequences
# --------------------------------------------------------------------------- #


def run_sequence_report(cfg: RunConfig, lr_frames, reference=None, report=None) -> tuple:
    """Super-resolve one sequence with ``cfg.method``; returns ``(estimates, records)``."""
    method = cfg.method
    if cfg.motion == "true":
        raise ConfigError("motion = true is only available for synthetic benches")
    if reference is not None and len(reference) != len(lr_frames):
        raise ConfigError("reference and input sequences differ in length")
    cache = obtain_cache(cfg, method)
    state = make_state(cfg, method, cache)
    motions = estimate_motions(lr_frames, cfg.motion, cfg.scale, cfg.flow)
    records = []
    fh = open(report, "w", encoding="utf-8") if report else None

    def on_frame(k, x, diag):
        if reference is not None:
            r = metric_record(method, k, reference[k], x)
        else:
            r = {"type": "frame", "method": method, "frame": k}
        if "misfit" in diag:
            r["misfit"] = list(diag["misfit"])
        records.append(r)
        if fh:
            fh.write(_dumps(r) + "\n")
            fh.flush()

    try:
        est = reconstruct(method, lr_frames, motions, state, on_frame)
        if reference is not None:
            summary = aggregate(records, (method,))
            records.extend(summary)
            if fh:
                fh.writelines(_dumps(r) + "\n" for r in summary)
    finally:
        if fh:
            fh.close()
    return est, records


def evaluate(reference, test, report=None, label: str = "eval") -> list:
    """Per-frame metrics between two sequences plus a summary record."""
    if len(reference) != len(test):
        raise ConfigError(f"sequences differ in length: {len(reference)} vs {len(test)}")
    records = [metric_record(label, k, r, t) for k, (r, t) in enumerate(zip(reference, test))]
    records += aggregate(records, (label,))
    if report:
        with open(report, "w", encoding="utf-8") as fh:
            fh.writelines(_dumps(r) + "\n" for r in records)
    return records
