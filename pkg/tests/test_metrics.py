import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nddicast.errors import ConfigError, MaskError
from nddicast.metrics import EvalReport, MetricRow, evaluate_frames, mse, psnr, ssim

from oracles import mse_loop, ssim_loop


def test_psnr_examples():
    a = np.zeros((4, 4))
    assert psnr(a, a + 0.1, dynamic_range=1.0) == pytest.approx(20.0)
    assert psnr(a, a + 0.02, dynamic_range=2.0) == pytest.approx(40.0)
    assert psnr(a, a) == 99.0


def test_constant_images_ssim():
    c1 = (0.01 * 2) ** 2
    assert ssim(np.zeros((8, 8)), np.ones((8, 8))) == pytest.approx(c1 / (1 + c1), rel=1e-12)


def test_identity(rng):
    a = rng.uniform(-1, 1, (9, 9))
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)
    assert mse(a, a) == 0.0


grid = arrays(np.float64, (8, 8), elements=st.floats(-1, 1))


@settings(max_examples=40, deadline=None)
@given(grid, grid, arrays(bool, (8, 8)))
def test_mse_matches_loop(a, b, m):
    if not m.any():
        m[0, 0] = True
    assert abs(mse(a, b, m) - mse_loop(a, b, m)) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(grid, grid, st.sampled_from([3, 5, 7]))
def test_ssim_matches_loop(a, b, window):
    assert abs(ssim(a, b, window=window) - ssim_loop(a, b, None, 2.0, window)) <= 1e-9


@settings(max_examples=40, deadline=None)
@given(grid, grid)
def test_ssim_symmetric_and_bounded(a, b):
    s = ssim(a, b, window=3)
    assert s == pytest.approx(ssim(b, a, window=3), abs=1e-12)
    assert -1 - 1e-12 <= s <= 1 + 1e-12


def test_ssim_with_mask_matches_loop(rng):
    a, b = rng.uniform(-1, 1, (12, 12)), rng.uniform(-1, 1, (12, 12))
    m = np.ones((12, 12), bool)
    m[3, 9] = m[10, 1] = False
    assert abs(ssim(a, b, m) - ssim_loop(a, b, m, 2.0, 7)) <= 1e-9


def test_monotone_in_noise(rng):
    a = rng.uniform(-1, 1, (16, 16))
    n = rng.normal(size=(16, 16))
    errs = [mse(a, a + s * n) for s in (0.01, 0.05, 0.2)]
    sims = [ssim(a, a + s * n) for s in (0.01, 0.05, 0.2)]
    assert errs == sorted(errs)
    assert sims == sorted(sims, reverse=True)


def test_errors():
    a = np.zeros((8, 8))
    with pytest.raises(MaskError):
        mse(a, a, np.zeros((8, 8), bool))
    with pytest.raises(ConfigError):
        ssim(a, a, window=4)
    with pytest.raises(ConfigError):
        ssim(a, a, window=9)
    with pytest.raises(ConfigError):
        psnr(a, a + 1, dynamic_range=0)
    m = np.ones((8, 8), bool)
    m[::3, ::3] = False
    with pytest.raises(MaskError):
        ssim(a, a, m)


def test_evaluate_frames_pools_pixels(rng):
    p = [rng.uniform(-1, 1, (8, 8)) for _ in range(2)]
    t = [rng.uniform(-1, 1, (8, 8)) for _ in range(2)]
    m = [np.ones((8, 8), bool), np.zeros((8, 8), bool)]
    m[1][:4] = True
    err, _, ps, count = evaluate_frames(p, t, m, window=3)
    total = sum(((pi - ti)[mi] ** 2).sum() for pi, ti, mi in zip(p, t, m))
    assert count == 96
    assert err == pytest.approx(total / 96, rel=1e-12)
    assert ps == pytest.approx(10 * math.log10(4 / err))


def test_report_csv_is_repr_exact():
    report = EvalReport([MetricRow("NDVI", 0.1, 0.9, 26.0206)], 100)
    lines = report.to_csv().splitlines()
    assert lines[0].startswith("# dynamic_range=2.0 pixel_count=100")
    assert lines[-2:] == ["model,mse,ssim,psnr", "NDVI,0.1,0.9,26.0206"]
    assert '"pixel_count": 100' in report.to_json()
