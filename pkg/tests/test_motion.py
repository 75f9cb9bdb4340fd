import numpy as np
import pytest

from conftest import textured
from polysr.imaging import DenseFlow, DimensionError, GlobalShift, warp
from polysr.motion import FlowParams, estimate_dense_flow, estimate_global_shift, upscale_motion


def test_flow_params_validation():
    FlowParams()
    for bad in (dict(lambda_smooth=0), dict(pyramid_levels=0), dict(pyramid_spacing=1.0), dict(iterations_per_level=0)):
        with pytest.raises(ValueError):
            FlowParams(**bad)


def test_global_shift_identical_frames():
    f = textured((64, 64))
    m = estimate_global_shift(f, f)
    assert abs(m.dx) < 1e-9 and abs(m.dy) < 1e-9


def test_global_shift_one_pixel():
    f = textured((64, 64), seed=3)
    m = estimate_global_shift(f, np.roll(f, 1, axis=1))
    assert m.dx == pytest.approx(1.0, abs=0.05)
    assert m.dy == pytest.approx(0.0, abs=0.05)
    m = estimate_global_shift(f, np.roll(f, -1, axis=0))
    assert m.dy == pytest.approx(-1.0, abs=0.05)


def test_global_shift_under_noise():
    rng = np.random.default_rng(7)
    hits = 0
    for t in range(20):
        f = textured((64, 64), seed=100 + t)
        sx, sy = rng.integers(-2, 3, size=2)
        g = np.roll(f, (sy, sx), axis=(0, 1)) + rng.normal(0, np.sqrt(10), f.shape)
        m = estimate_global_shift(f + rng.normal(0, np.sqrt(10), f.shape), g)
        hits += round(m.dx) == sx and round(m.dy) == sy
    assert hits >= 19


def test_global_shift_antisymmetric():
    f = textured((64, 64), seed=5)
    g = warp(f, GlobalShift(0.4, -0.7))
    a = estimate_global_shift(f, g)
    b = estimate_global_shift(g, f)
    assert a.dx == pytest.approx(-b.dx, abs=0.1)
    assert a.dy == pytest.approx(-b.dy, abs=0.1)


def test_global_shift_dimension_mismatch():
    with pytest.raises(DimensionError):
        estimate_global_shift(np.zeros((8, 8)), np.zeros((8, 9)))


def test_dense_flow_identical_frames():
    f = textured((32, 32))
    flow = estimate_dense_flow(f, f)
    assert np.abs(flow.u).max() < 1e-12 and np.abs(flow.v).max() < 1e-12


def test_dense_flow_translation():
    f = textured((64, 64), seed=2)
    g = np.roll(f, 1, axis=1)
    flow = estimate_dense_flow(f, g)
    sl = (slice(6, 58), slice(6, 58))  # interior 80%
    assert flow.u[sl].mean() == pytest.approx(1.0, abs=0.1)
    assert flow.v[sl].mean() == pytest.approx(0.0, abs=0.1)
    gs = estimate_global_shift(f, g)
    mad = np.mean(np.abs(flow.u[sl] - gs.dx)) + np.mean(np.abs(flow.v[sl] - gs.dy))
    assert mad < 0.2


def test_dense_flow_energy_non_increasing():
    f = textured((32, 32), seed=4)
    g = warp(f, GlobalShift(0.6, 0.3))
    history = []
    estimate_dense_flow(f, g, FlowParams(iterations_per_level=30), history)
    e = np.array(history)
    assert len(e) == 31
    assert np.all(np.diff(e) <= 1e-9 * np.abs(e[:-1]) + 1e-12)


def test_dense_flow_too_small():
    with pytest.raises(DimensionError):
        estimate_dense_flow(np.zeros((4, 4)), np.zeros((4, 4)), FlowParams(pyramid_levels=4))


def test_upscale_motion():
    m = upscale_motion(GlobalShift(1, -2), 2)
    assert (m.dx, m.dy) == (2, -4)
    g = GlobalShift(0.3, 0.1)
    assert upscale_motion(g, 1) is g
    flow = upscale_motion(DenseFlow(np.full((5, 6), 0.5), np.full((5, 6), 0.5)), 2)
    assert flow.shape == (10, 12)
    np.testing.assert_allclose(flow.u, 1.0)
    np.testing.assert_allclose(flow.v, 1.0)
    with pytest.raises(ValueError):
        upscale_motion(g, 0)
