"""Run configuration: an INI file plus command-line overrides.

Schema (every key optional)::

    [run]
    method = wmtsr            ; bicubic | ltsr | mtsr | wmtsr
    scale = 2
    seed = 0
    cache = filterbanks.mrfb  ; one file per filterbank method, see cache_path
    tap_radius = 7
    motion = global           ; global | dense | true (synthetic data only)
    frames = lr/*.pgm         ; input sequence for ``run``
    out = out
    report = report.jsonl
    threads = 1

    [srr]                     ; overrides applied to every method
    [srr.wmtsr]               ; overrides for one method
    alphaT = 0.015
    lambda1_schedule = inf, 1

    [flow]                    ; Horn-Schunck settings for motion = dense
    lambda_smooth = 1000

    [synthetic]
    source = camera           ; image path or scikit-image sample name
    window = 256
    frames = 40
    noise_variance = 10
    outlier = yes
    outlier_size = 128
    outlier_value = 0
    outlier_onset = 32
    outlier_offset = 35

    [bench]
    seeds = 10
    methods = bicubic, ltsr, mtsr, wmtsr
    sources = camera          ; cycled over seeds
"""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

from ..engine import METHODS, SrrParams
from ..motion import FlowParams

MOTION_MODES = ("global", "dense", "true")


class ConfigError(ValueError):
    """Invalid configuration file or option."""


def _float(text: str) -> float:
    t = text.strip().lower()
    if t in ("inf", "infinity", "+inf"):
        return math.inf
    return float(t)


def _list(text: str) -> list:
    return [t.strip() for t in text.replace("\n", ",").split(",") if t.strip()]


_SRR_TYPES = {f.name: f.type for f in dataclasses.fields(SrrParams)}


def _srr_value(key: str, text: str):
    if key not in _SRR_TYPES:
        raise ConfigError(f"unknown srr parameter {key!r}")
    if key == "lambda1_schedule":
        return tuple(_float(t) for t in _list(text))
    if key == "literal_threshold":
        return text.strip().lower() in ("1", "yes", "true", "on")
    if key in ("d", "p", "J", "J_baseline"):
        return int(text)
    return _float(text)


@dataclass
class SyntheticConfig:
    source: str = "camera"
    window: int = 256
    frames: int = 40
    noise_variance: float = 10.0
    outlier: bool = True
    outlier_size: int = 128
    outlier_value: float = 0.0
    outlier_onset: int = 32
    outlier_offset: int = 35


@dataclass
class BenchConfig:
    seeds: int = 10
    methods: tuple = METHODS
    sources: tuple = ("camera",)


@dataclass
class RunConfig:
    method: str = "wmtsr"
    scale: int = 2
    seed: int = 0
    cache: str | None = None
    tap_radius: int = 7
    motion: str = "global"
    frames: str | None = None
    out: str | None = None
    report: str | None = None
    threads: int = 1
    srr: dict = field(default_factory=dict)  # section -> {key: value}; "" holds the shared overrides
    flow: FlowParams = field(default_factory=FlowParams)
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)

    def validate(self) -> "RunConfig":
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        for m in self.bench.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown bench method {m!r}")
        if self.scale < 1:
            raise ConfigError("scale must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.motion not in MOTION_MODES:
            raise ConfigError(f"motion must be one of {', '.join(MOTION_MODES)}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.tap_radius < 1:
            raise ConfigError("tap_radius must be >= 1")
        if self.bench.seeds < 1 or not self.bench.sources:
            raise ConfigError("bench needs at least one seed and one source")
        syn = self.synthetic
        if syn.window % self.scale:
            raise ConfigError(f"window {syn.window} is not a multiple of scale {self.scale}")
        if syn.frames < 1 or syn.noise_variance < 0:
            raise ConfigError("synthetic frames must be >= 1 and noise_variance >= 0")
        for m in METHODS:
            self.params_for(m)
        return self

    def params_for(self, method: str) -> SrrParams:
        """Method preset, then ``[srr]``, then ``[srr.<method>]``, with ``d = scale``.

        ``J`` and ``lambda1_schedule`` fill each other in when only one is given.
        """
        kw = {**self.srr.get("", {}), **self.srr.get(method, {}), "d": self.scale}
        if "J" in kw and "lambda1_schedule" not in kw:
            kw["lambda1_schedule"] = SrrParams.default_schedule(kw["J"])
        elif "lambda1_schedule" in kw and "J" not in kw:
            kw["J"] = len(kw["lambda1_schedule"])
        try:
            return SrrParams.preset(method, **kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid parameters for {method}: {exc}") from None

    def cache_path(self, method: str) -> str | None:
        """Cache file for ``method``.

        MTSR and WMTSR need different designs, so the method name goes before
        the suffix: ``fb.mrfb`` becomes ``fb.mtsr.mrfb``.  A path that
        already carries the method name is used as given.
        """
        if self.cache is None:
            return None
        p = Path(self.cache)
        suffix = p.suffix or ".mrfb"
        stem = p.stem if p.suffix else p.name
        if stem.endswith("." + method):
            return str(p)
        return str(p.with_name(f"{stem}.{method}{suffix}"))


def _apply(target, section, casts: dict):
    for key, text in section.items():
        if key not in casts:
            raise ConfigError(f"unknown key {key!r} in [{section.name}]")
        try:
            setattr(target, key, casts[key](text))
        except ValueError as exc:
            raise ConfigError(f"[{section.name}] {key}: {exc}") from None


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "yes", "true", "on"):
        return True
    if t in ("0", "no", "false", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_RUN = dict(method=str.strip, scale=int, seed=int, cache=str.strip, tap_radius=int, motion=str.strip,
            frames=str.strip, out=str.strip, report=str.strip, threads=int)
_SYNTH = dict(source=str.strip, window=int, frames=int, noise_variance=float, outlier=_bool,
              outlier_size=int, outlier_value=float, outlier_onset=int, outlier_offset=int)
_BENCH = dict(seeds=int, methods=lambda t: tuple(_list(t)), sources=lambda t: tuple(_list(t)))
_FLOW = {f.name: f.type for f in dataclasses.fields(FlowParams)}


def load_config(path=None) -> RunConfig:
    """Parse a config file; ``None`` gives the defaults."""
    cfg = RunConfig()
    if path is None:
        return cfg
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str  # keys such as alphaT are case sensitive
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    flow_kw = {}
    for name in parser.sections():
        sec = parser[name]
        if name == "run":
            _apply(cfg, sec, _RUN)
        elif name == "synthetic":
            _apply(cfg.synthetic, sec, _SYNTH)
        elif name == "bench":
            _apply(cfg.bench, sec, _BENCH)
        elif name == "flow":
            for key, text in sec.items():
                if key not in _FLOW:
                    raise ConfigError(f"unknown key {key!r} in [flow]")
                try:
                    flow_kw[key] = int(text) if _FLOW[key] in ("int", int) else float(text)
                except ValueError as exc:
                    raise ConfigError(f"[flow] {key}: {exc}") from None
        elif name == "srr" or name.startswith("srr."):
            method = name[4:]
            if method and method not in METHODS:
                raise ConfigError(f"unknown method in section [{name}]")
            try:
                cfg.srr[method] = {k: _srr_value(k, v) for k, v in sec.items()}
            except ValueError as exc:
                raise ConfigError(f"[{name}]: {exc}") from None
        else:
            raise ConfigError(f"unknown section [{name}]")
    if flow_kw:
        try:
            cfg.flow = FlowParams(**flow_kw)
        except ValueError as exc:
            raise ConfigError(f"[flow]: {exc}") from None
    return cfg


def with_overrides(cfg: RunConfig, **flags) -> RunConfig:
    """Apply command-line flags; ``None`` values leave the file setting alone."""
    cfg = dataclasses.replace(cfg)
    for key, value in flags.items():
        if value is None:
            continue
        if not hasattr(cfg, key):
            raise ConfigError(f"unknown option {key!r}")
        setattr(cfg, key, value)
    return cfg
