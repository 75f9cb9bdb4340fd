"""Command-line interface: ``polysr {design,synth,run,eval,bench}``.

Exit codes: 0 success, 2 configuration error, 3 stale filterbank cache,
4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys

from ..design import CacheFormatError, DesignError, StaleCacheError, validate_inverse
from ..engine import METHODS, design_spec_for
from .config import ConfigError, load_config, with_overrides
from .frameio import FrameIOError, frames_read, frames_write
from .synthetic import SourceError

EXIT_OK, EXIT_CONFIG, EXIT_STALE, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("polysr")


def _common(p: argparse.ArgumentParser, *flags):
    p.add_argument("--config", help="INI configuration file")
    table = {
        "method": dict(choices=METHODS, help="reconstruction method"),
        "scale": dict(type=int, help="decimation factor d"),
        "seed": dict(type=int, help="random seed (first seed for bench)"),
        "cache": dict(help="filterbank cache file"),
        "frames": dict(help="input frames: directory, glob or .y4m file"),
        "out": dict(help="output directory (or .y4m file for run)"),
        "report": dict(help="JSON-lines report path"),
        "threads": dict(type=int, help="worker processes; 1 forces deterministic single-thread mode"),
        "motion": dict(choices=("global", "dense", "true"), help="motion estimator"),
    }
    for f in flags:
        p.add_argument(f"--{f}", **table[f])
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="polysr", description="Online video super-resolution with inverse filterbanks.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", help="design, validate and store inverse filterbanks")
    _common(p, "method", "scale", "cache")
    p.add_argument("--force", action="store_true", help="redesign even if the cache is current")

    p = sub.add_parser("synth", help="generate a synthetic translating-window sequence")
    _common(p, "scale", "seed", "out")
    p.add_argument("--source", help="source image path or scikit-image sample name")
    p.add_argument("--count", type=int, help="number of frames")
    p.add_argument("--format", default="pgm", choices=("pgm", "png"))

    p = sub.add_parser("run", help="super-resolve an LR sequence")
    _common(p, "method", "scale", "seed", "cache", "frames", "out", "report", "threads", "motion")
    p.add_argument("--reference", help="HR reference frames; adds metrics to the report")
    p.add_argument("--format", default="pgm", choices=("pgm", "png", "y4m"))

    p = sub.add_parser("eval", help="metrics between two sequences")
    _common(p, "frames", "report")
    p.add_argument("--reference", required=True, help="reference frames")

    p = sub.add_parser("bench", help="Monte Carlo over synthetic sequences")
    _common(p, "method", "scale", "seed", "cache", "out", "report", "threads", "motion")
    p.add_argument("--seeds", type=int, help="number of sequences")
    p.add_argument("--methods", help="comma-separated methods (default: all)")
    p.add_argument("--count", type=int, help="frames per sequence")
    p.add_argument("--no-outlier", action="store_true", help="omit the occluding square")
    return ap


def _config(args):
    cfg = load_config(args.config)
    flags = {k: getattr(args, k, None) for k in
             ("method", "scale", "seed", "cache", "frames", "out", "report", "threads", "motion")}
    cfg = with_overrides(cfg, **flags)
    if getattr(args, "count", None) is not None:
        cfg.synthetic.frames = args.count
    if getattr(args, "source", None) is not None:
        cfg.synthetic.source = args.source
    if getattr(args, "seeds", None) is not None:
        cfg.bench.seeds = args.seeds
    if getattr(args, "methods", None):
        cfg.bench.methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    if getattr(args, "no_outlier", False):
        cfg.synthetic.outlier = False
    return cfg.validate()


def cmd_design(args) -> int:
    from .experiment import FILTERBANK_METHODS, obtain_cache

    cfg = _config(args)
    if args.method is not None:
        if args.method not in FILTERBANK_METHODS:
            raise ConfigError(f"{args.method} does not use a filterbank")
        methods = (args.method,)
    else:
        methods = FILTERBANK_METHODS
    for m in methods:
        spec = design_spec_for(m, cfg.params_for(m), cfg.tap_radius)
        path = cfg.cache_path(m)
        cache = obtain_cache(cfg, m, rebuild=args.force)
        for lam in cache.lambdas:
            v = validate_inverse(cache.filterbank(lam), spec.system(lam), trials=3)
            print(f"{m} lambda1={lam:g} residual={cache.residual(lam):.3e} "
                  f"max_rel_error={v['max_rel_error']:.3e} -> {path or '(not stored)'}")
    return EXIT_OK


def cmd_synth(args) -> int:
    from .experiment import synthetic_spec
    from .synthetic import generate_synthetic

    cfg = _config(args)
    if not cfg.out:
        raise ConfigError("synth needs --out")
    seq = generate_synthetic(synthetic_spec(cfg, cfg.seed))
    frames_write(os.path.join(cfg.out, "hr"), seq.hr, args.format)
    frames_write(os.path.join(cfg.out, "lr"), seq.lr, args.format)
    with open(os.path.join(cfg.out, "motion.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame", "row", "col", "dx", "dy"])
        for k, ((r, c), m) in enumerate(zip(seq.origins, seq.motions)):
            w.writerow([k, r, c, m.dx if m else 0.0, m.dy if m else 0.0])
    print(f"wrote {len(seq.hr)} frames to {cfg.out}")
    return EXIT_OK


def cmd_run(args) -> int:
    from .experiment import run_sequence_report

    cfg = _config(args)
    if not cfg.frames:
        raise ConfigError("run needs --frames")
    lr = frames_read(cfg.frames)
    ref = frames_read(args.reference) if args.reference else None
    est, records = run_sequence_report(cfg, lr, ref, cfg.report)
    if cfg.out:
        frames_write(cfg.out, est, args.format)
    for r in records:
        if r["type"] == "summary":
            print(f"{r['method']}: mean mse {r['mse']:.4f} ({r['mse_db']:.2f} dB) ssim {r['ssim']:.4f}")
    print(f"reconstructed {len(est)} frames with {cfg.method}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .experiment import evaluate

    if not args.frames:
        raise ConfigError("eval needs --frames")
    records = evaluate(frames_read(args.reference), frames_read(args.frames), args.report)
    s = records[-1]
    print(f"frames {s['count']}: mean mse {s['mse']:.4f} ({s['mse_db']:.2f} dB) ssim {s['ssim']:.4f}")
    return EXIT_OK


def cmd_bench(args) -> int:
    from .experiment import run_bench

    cfg = _config(args)
    if args.method and not args.methods:
        cfg.bench.methods = (args.method,)
    report = cfg.report
    if report is None:
        if not cfg.out:
            raise ConfigError("bench needs --report or --out")
        os.makedirs(cfg.out, exist_ok=True)
        report = os.path.join(cfg.out, "report.jsonl")
    records = run_bench(cfg, report=report)
    for r in records:
        if r["type"] == "summary":
            print(f"{r['method']:8s} mean mse {r['mse_db']:7.2f} dB  ssim {r['ssim']:.4f}")
    print(f"report: {report}")
    return EXIT_OK


COMMANDS = {"design": cmd_design, "synth": cmd_synth, "run": cmd_run, "eval": cmd_eval, "bench": cmd_bench}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except StaleCacheError as exc:
        print(f"error: stale cache: {exc}", file=sys.stderr)
        return EXIT_STALE
    except (FrameIOError, CacheFormatError, SourceError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, DesignError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
