import json
import math

import numpy as np
import pytest

from polysr.harness.cli import main
from polysr.harness.config import ConfigError, RunConfig, load_config, with_overrides
from polysr.harness.experiment import aggregate, evaluate, read_report, run_bench, run_sequence_report
from polysr.harness.frameio import frames_read, frames_write
from polysr.harness.synthetic import SyntheticSpec, generate_synthetic


def _write(path, text):
    path.write_text(text)
    return str(path)


def _small(tmp_path, **kw):
    cfg = RunConfig(tap_radius=3, cache=str(tmp_path / "fb.mrfb"))
    cfg.synthetic.window = 32
    cfg.synthetic.frames = 6
    cfg.synthetic.outlier_size = 8
    cfg.synthetic.outlier_onset = 2
    cfg.synthetic.outlier_offset = 4
    cfg.bench.seeds = 2
    for k, v in kw.items():
        setattr(cfg, k, v)
    return cfg.validate()


# --------------------------------------------------------------------------- #
# Configuration


def test_config_parsing(tmp_path):
    p = _write(tmp_path / "c.ini", """
[run]
method = mtsr
scale = 3
cache = fb.mrfb   ; comment
[srr]
alpha = 0.01
[srr.wmtsr]
alphaT = 0.02
lambda1_schedule = inf, 2, 1
[synthetic]
window = 48
outlier = no
[bench]
methods = bicubic, mtsr
sources = camera, moon
[flow]
iterations_per_level = 20
pyramid_spacing = 1.5
""")
    cfg = load_config(p).validate()
    assert (cfg.method, cfg.scale, cfg.cache) == ("mtsr", 3, "fb.mrfb")
    assert cfg.params_for("mtsr").alpha == 0.01 and cfg.params_for("mtsr").d == 3
    w = cfg.params_for("wmtsr")
    assert w.alphaT == 0.02 and w.lambda1_schedule == (math.inf, 2.0, 1.0) and w.J == 3
    assert cfg.synthetic.window == 48 and cfg.synthetic.outlier is False
    assert cfg.bench.methods == ("bicubic", "mtsr") and cfg.bench.sources == ("camera", "moon")
    assert cfg.flow.iterations_per_level == 20 and cfg.flow.pyramid_spacing == 1.5


def test_config_j_without_schedule(tmp_path):
    cfg = load_config(_write(tmp_path / "c.ini", "[srr.wmtsr]\nJ = 2\n"))
    p = cfg.params_for("wmtsr")
    assert p.J == 2 and len(p.lambda1_schedule) == 2


@pytest.mark.parametrize("text", [
    "[run]\nmethod = fancy\n",
    "[run]\nscale = 0\n",
    "[run]\nbogus = 1\n",
    "[nowhere]\n",
    "[srr]\nnot_a_param = 1\n",
    "[srr.nearest]\n",
    "[run]\nscale = two\n",
    "[synthetic]\nwindow = 33\n",
    "no section header\n",
])
def test_config_errors(tmp_path, text):
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path / "c.ini", text)).validate()


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.ini")


def test_overrides_do_not_mutate():
    base = RunConfig()
    cfg = with_overrides(base, method="ltsr", seed=None, scale=3)
    assert (cfg.method, cfg.scale, cfg.seed) == ("ltsr", 3, 0)
    assert base.method == "wmtsr"
    with pytest.raises(ConfigError):
        with_overrides(base, colour="red")


def test_cache_paths():
    assert RunConfig(cache="out/fb.mrfb").cache_path("mtsr") == "out/fb.mtsr.mrfb"
    assert RunConfig(cache="out/fb").cache_path("wmtsr") == "out/fb.wmtsr.mrfb"
    assert RunConfig(cache="fb.wmtsr.mrfb").cache_path("wmtsr") == "fb.wmtsr.mrfb"
    assert RunConfig().cache_path("mtsr") is None


# --------------------------------------------------------------------------- #
# Experiments


def test_aggregate_means():
    recs = [{"type": "frame", "method": "m", "frame": k % 3, "mse": float(k + 1), "ssim": 0.1 * k}
            for k in range(9)]
    out = aggregate(recs, ("m",))
    means = [r for r in out if r["type"] == "mean"]
    assert [r["frame"] for r in means] == [0, 1, 2]
    for r in means:
        vals = [x["mse"] for x in recs if x["frame"] == r["frame"]]
        assert abs(r["mse"] - np.mean(vals)) < 1e-12 and r["count"] == 3
    s = out[-1]
    assert s["type"] == "summary" and abs(s["mse"] - 5.0) < 1e-12
    assert abs(s["mse_db"] - 10 * math.log10(5.0)) < 1e-12


def test_bicubic_noise_free_identity():
    seq = generate_synthetic(SyntheticSpec(window=32, frame_count=3, d=1, noise_variance=0, outlier=False,
                                           blur=__import__("polysr").imaging.Kernel2D.delta()))
    cfg = RunConfig(method="bicubic", scale=1).validate()
    est, records = run_sequence_report(cfg, seq.lr, seq.hr)
    assert all(r["mse"] == 0 for r in records if r["type"] == "frame")


def test_bench_report_structure_and_determinism(tmp_path):
    cfg = _small(tmp_path)
    a = run_bench(cfg, report=str(tmp_path / "a.jsonl"))
    b = run_bench(cfg, report=str(tmp_path / "b.jsonl"))
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    assert (tmp_path / "a.trajectory.csv").read_bytes() == (tmp_path / "b.trajectory.csv").read_bytes()
    assert a == read_report(tmp_path / "a.jsonl") == b
    types = [r["type"] for r in a]
    assert types[0] == "config" and types[-1] == "summary"
    frames = [r for r in a if r["type"] == "frame"]
    assert len(frames) == 2 * 4 * 6
    assert [r["seed"] for r in frames] == sorted(r["seed"] for r in frames)
    for r in (r for r in a if r["type"] == "mean"):
        vals = [f["mse"] for f in frames if f["method"] == r["method"] and f["frame"] == r["frame"]]
        assert abs(r["mse"] - np.mean(vals)) < 1e-12


def test_bench_parallel_matches_serial(tmp_path):
    cfg = _small(tmp_path)
    run_bench(cfg, methods=("bicubic", "mtsr"), report=str(tmp_path / "s.jsonl"))
    cfg.threads = 2
    run_bench(cfg, methods=("bicubic", "mtsr"), report=str(tmp_path / "p.jsonl"))
    assert (tmp_path / "s.jsonl").read_bytes() == (tmp_path / "p.jsonl").read_bytes()


def test_evaluate_length_mismatch():
    with pytest.raises(ConfigError):
        evaluate([np.zeros((4, 4))], [np.zeros((4, 4))] * 2)


# --------------------------------------------------------------------------- #
# CLI


@pytest.fixture
def synth_dir(tmp_path):
    out = tmp_path / "syn"
    rc = main(["synth", "--out", str(out), "--count", "4", "--seed", "3", "--source", "camera"])
    assert rc == 0
    return out


def test_cli_synth_outputs(synth_dir):
    assert len(frames_read(synth_dir / "hr")) == 4
    lr = frames_read(synth_dir / "lr")
    assert lr[0].shape == (128, 128)
    rows = (synth_dir / "motion.csv").read_text().splitlines()
    assert rows[0] == "frame,row,col,dx,dy" and len(rows) == 5


def test_cli_run_eval_and_stale_cache(tmp_path, synth_dir):
    cache = str(tmp_path / "fb.mrfb")
    ini = _write(tmp_path / "c.ini", "[run]\ntap_radius = 3\n")
    assert main(["design", "--config", ini, "--method", "mtsr", "--cache", cache]) == 0
    report = tmp_path / "r.jsonl"
    rc = main(["run", "--config", ini, "--method", "mtsr", "--cache", cache, "--frames", str(synth_dir / "lr"),
               "--reference", str(synth_dir / "hr"), "--out", str(tmp_path / "est"), "--report", str(report)])
    assert rc == 0
    recs = read_report(report)
    assert sum(r["type"] == "frame" for r in recs) == 4 and recs[-1]["type"] == "summary"
    assert main(["eval", "--reference", str(synth_dir / "hr"), "--frames", str(tmp_path / "est")]) == 0
    # Same cache file, different regularization: stale.
    ini2 = _write(tmp_path / "c2.ini", "[run]\ntap_radius = 3\n[srr.mtsr]\nalpha = 0.5\n")
    rc = main(["run", "--config", ini2, "--method", "mtsr", "--cache", cache, "--frames", str(synth_dir / "lr")])
    assert rc == 3


def test_cli_error_codes(tmp_path, synth_dir, capsys):
    assert main(["run", "--method", "bicubic", "--frames", str(tmp_path / "nothing")]) == 4
    assert main(["run", "--method", "bicubic", "--scale", "0", "--frames", str(synth_dir / "lr")]) == 2
    assert main(["run", "--config", str(tmp_path / "none.ini"), "--frames", str(synth_dir / "lr")]) == 2
    bad = tmp_path / "bad.mtsr.mrfb"
    bad.write_bytes(b"garbage")
    assert main(["run", "--method", "mtsr", "--cache", str(bad), "--frames", str(synth_dir / "lr")]) == 4
    with pytest.raises(SystemExit) as exc:
        main(["run", "--method", "nearest"])
    assert exc.value.code == 2
    assert "error" in capsys.readouterr().err


def test_cli_bench(tmp_path):
    ini = _write(tmp_path / "c.ini", "[run]\ntap_radius = 3\n[synthetic]\nwindow = 32\noutlier_size = 8\n")
    report = tmp_path / "b.jsonl"
    rc = main(["bench", "--config", ini, "--seeds", "1", "--count", "3", "--methods", "bicubic,ltsr",
               "--report", str(report), "--no-outlier"])
    assert rc == 0
    recs = read_report(report)
    assert recs[0]["methods"] == ["bicubic", "ltsr"] and recs[0]["synthetic"]["outlier"] is False
    assert json.loads(report.read_text().splitlines()[-1])["type"] == "summary"
