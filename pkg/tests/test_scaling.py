"""Tests for data collapse, logarithmic fits and the fit-quality scan."""

import math

import numpy as np
import pandas as pd
import pytest

from core.errors import InvalidArgument
from core.scaling import (
    EntropyDataset,
    LogFit,
    collapse_objective,
    collapse_points,
    dynamical_exponent,
    fit_collapse,
    log_fit,
    log_fit_band,
    mse_scan,
    series_log_fit,
    size_parity,
    spatial_log_fit,
)
from core.seeding import rate_key

SIZES = [8, 12, 16, 20, 24]
P_GRID = np.round(np.arange(0.10, 0.30 + 1e-9, 0.005), 6)


def planted(p_c=0.2, nu=1.3, noise=0.0, seed=0, sizes=SIZES, p_grid=P_GRID, stderr=0.01):
    rng = np.random.default_rng(seed)
    points = []
    for n in sizes:
        for p in p_grid:
            s = 1.5 - np.tanh((p - p_c) * n ** (1 / nu)) + 0.05 * n
            points.append((n, float(p), s + noise * rng.standard_normal(), stderr, 100))
    return EntropyDataset.from_points(points)


def test_size_parity():
    assert [size_parity(n) for n in (4, 6, 8, 10, 12)] == ["even", "odd", "even", "odd", "even"]


def test_dataset_validation():
    with pytest.raises(InvalidArgument):
        EntropyDataset.from_points([(8, 0.1, 1.0, -0.1, 10)])
    with pytest.raises(InvalidArgument):
        EntropyDataset.from_points([(8, 0.1, 1.0, 0.1, 1)])
    with pytest.raises(InvalidArgument):
        EntropyDataset.from_points([(8, 0.1, 1.0, 0.1, 10), (8, 0.1, 1.1, 0.1, 10)])
    with pytest.raises(InvalidArgument):
        EntropyDataset(pd.DataFrame({"N": [8], "p": [0.1]}))


def test_from_aggregate_frame_uses_last_cycle():
    rows = []
    for n in (8, 12):
        for t in (1, 2, 3):
            for alpha in (1.0, 2.0):
                rows.append(dict(N=n, p=0.1, alpha=alpha, cycle=t, mean_S=10 * t + alpha, stderr_S=0.1, n_runs=5))
    table = pd.DataFrame(rows)
    data = EntropyDataset.from_aggregate_frame(table, alpha=1.0)
    assert data.frame["mean_S"].tolist() == [31.0, 31.0]
    data = EntropyDataset.from_aggregate_frame(table, alpha=2.0, cycle=1)
    assert data.frame["mean_S"].tolist() == [12.0, 12.0]
    with pytest.raises(InvalidArgument):
        EntropyDataset.from_aggregate_frame(table, alpha=3.0)
    with pytest.raises(InvalidArgument):
        EntropyDataset.from_aggregate_frame(table, cycle=9)


def test_collapse_objective_prefers_truth():
    data = planted()
    best = collapse_objective(data, 0.2, 1.3)
    assert best < 0.1
    assert collapse_objective(data, 0.2, 2.6) > 10 * best
    assert collapse_objective(data, 0.15, 1.3) > 10 * best


def test_noise_free_planted_data_collapses_exactly():
    data = planted(stderr=0.0)
    assert collapse_objective(data, 0.2, 1.3) < 1e-6


def test_collapse_objective_ignores_per_size_offsets():
    data = planted()
    shifted = data.with_values(data.frame["mean_S"].to_numpy() + 3.0 * data.frame["N"].to_numpy(), data.frame["stderr_S"].to_numpy())
    for p_c, nu in [(0.2, 1.3), (0.17, 0.8)]:
        assert collapse_objective(shifted, p_c, nu) == pytest.approx(collapse_objective(data, p_c, nu), rel=1e-9)


def test_collapse_objective_errors():
    data = planted()
    with pytest.raises(InvalidArgument):
        collapse_objective(data, 0.5, 1.3)
    with pytest.raises(InvalidArgument):
        collapse_objective(data, 0.2, 0.0)
    with pytest.raises(InvalidArgument):
        collapse_objective(planted(sizes=[8, 12]), 0.2, 1.3)


def test_collapse_points_columns():
    points = collapse_points(planted(), 0.2, 1.3)
    assert list(points.columns) == ["N", "p", "x", "y", "yerr", "parity"]
    at_pc = points[np.isclose(points["p"], 0.2)]
    assert np.allclose(at_pc["x"], 0.0)
    assert np.allclose(at_pc["y"], 0.0, atol=1e-12)


def test_fit_collapse_recovers_planted_exponents():
    fit = fit_collapse(planted(noise=0.01, seed=3), bootstrap=10, seed=1)
    assert abs(fit.p_c - 0.2) <= 0.01
    assert abs(fit.nu - 1.3) <= 0.1
    assert fit.converged
    assert fit.bootstrap_mode == "parametric"
    assert fit.n_bootstrap == 10
    assert fit.p_c_err > 0
    assert fit.sizes == SIZES


def test_fit_collapse_resamples_trajectories():
    coarse = np.round(np.arange(0.10, 0.30 + 1e-9, 0.02), 6)
    rng = np.random.default_rng(8)
    frame_rows = []
    samples = {}
    for n in (8, 12, 16):
        for p in coarse:
            centre = 1.0 - np.tanh((p - 0.2) * n ** (1 / 1.3))
            values = centre + 0.05 * rng.standard_normal(20)
            samples[(n, rate_key(p))] = values
            frame_rows.append(dict(N=n, p=float(p), mean_S=values.mean(), stderr_S=values.std(ddof=1) / math.sqrt(20), n_runs=20))
    data = EntropyDataset(pd.DataFrame(frame_rows), samples)
    fit = fit_collapse(data, pc_step=0.01, nu_step=0.1, bootstrap=3, seed=0)
    assert fit.bootstrap_mode == "trajectories"
    assert 0.1 <= fit.p_c <= 0.3


def test_fit_collapse_flags_boundary_minimum():
    fit = fit_collapse(planted(), nu_max=0.9, bootstrap=0)
    assert not fit.converged
    assert fit.nu == pytest.approx(0.9, abs=0.025)
    assert fit.bootstrap_mode == "none"
    assert fit.p_c_err == 0.0


def test_fit_collapse_argument_errors():
    with pytest.raises(InvalidArgument):
        fit_collapse(planted(), bootstrap=-1)
    with pytest.raises(InvalidArgument):
        fit_collapse(planted(), nu_min=2.0, nu_max=1.0)
    with pytest.raises(InvalidArgument):
        fit_collapse(planted(sizes=[8, 12, 16]), parity="odd")


def test_log_fit_exact_line():
    n = np.array([8, 12, 16, 20])
    s = 0.25 * np.log(2 * n / math.pi) + 0.5
    fit = log_fit(n, s, offset_form="ln_2N_over_pi")
    assert fit.slope == pytest.approx(0.25)
    assert fit.intercept == pytest.approx(0.5)
    assert fit.slope_err == pytest.approx(0.0, abs=1e-10)
    assert fit.n_points == 4
    plain = log_fit(n, s, offset_form="ln_N")
    assert plain.slope == pytest.approx(0.25)
    assert plain.intercept == pytest.approx(0.5 + 0.25 * math.log(2 / math.pi))


def test_log_fit_weighted_errors():
    n = np.array([8, 12, 16, 20, 24])
    s = 0.3 * np.log(n) + np.array([0.01, -0.01, 0.02, 0.0, -0.02])
    weighted = log_fit(n, s, np.full(5, 0.01))
    assert weighted.slope_err > 0
    scaled = log_fit(n, s, np.array([0.01, 0.0, 0.01, 0.01, 0.01]))
    assert scaled.slope == pytest.approx(log_fit(n, s).slope)


def test_log_fit_errors():
    with pytest.raises(InvalidArgument):
        log_fit([8, 12], [1.0, 1.1])
    with pytest.raises(InvalidArgument):
        log_fit([0, 8, 12], [1.0, 1.1, 1.2])
    with pytest.raises(InvalidArgument):
        log_fit([8, 12, 16], [1.0, 1.1])
    with pytest.raises(InvalidArgument):
        log_fit([8, 12, 16], [1.0, 1.1, 1.2], offset_form="ln_x")


def parity_dataset():
    points = []
    for n in range(8, 22, 2):
        slope, offset = (0.25, 0.5) if size_parity(n) == "even" else (0.30, 0.4)
        for p, shift in ((0.15, 0.0), (0.2, 0.04)):
            points.append((n, p, (slope + shift) * math.log(2 * n / math.pi) + offset, 0.01, 50))
    return EntropyDataset.from_points(points)


def test_spatial_log_fit_by_parity():
    data = parity_dataset()
    even = spatial_log_fit(data, 0.15, "even")
    odd = spatial_log_fit(data, 0.15, "odd")
    assert even.slope == pytest.approx(0.25)
    assert even.n_points == 4
    assert odd.slope == pytest.approx(0.30)
    assert odd.intercept == pytest.approx(0.4)
    with pytest.raises(InvalidArgument):
        spatial_log_fit(data, 0.5, "even")


def test_log_fit_band_spread():
    band = log_fit_band(parity_dataset(), [0.15, 0.2], "even")
    assert band.mean_slope == pytest.approx(0.27)
    assert band.slope_half_range == pytest.approx(0.02)
    assert band.intercept_half_range == pytest.approx(0.0, abs=1e-10)
    with pytest.raises(InvalidArgument):
        log_fit_band(parity_dataset(), [])


def test_series_log_fit_window():
    t = np.arange(1, 21)
    mean = 0.26 * np.log(t) + 0.1
    mean[12:] = 5.0
    fit = series_log_fit(mean, np.full(20, 0.01), 1, 12)
    assert fit.slope == pytest.approx(0.26)
    assert fit.offset_form == "ln_t"
    with pytest.raises(InvalidArgument):
        series_log_fit(mean, np.full(20, 0.01), 5, 6)


def test_mse_scan_minimum_at_logarithmic_rate():
    points = []
    for n in (8, 12, 16, 20):
        for p in (0.1, 0.15, 0.2):
            curvature = 0.0 if p == 0.15 else (p - 0.15) * 0.01 * n ** 2
            points.append((n, p, 0.3 * math.log(n) + curvature, 0.01, 20))
    scan = mse_scan(EntropyDataset.from_points(points))
    assert [p for p, _ in scan] == [0.1, 0.15, 0.2]
    assert min(scan, key=lambda item: item[1])[0] == 0.15
    assert scan[1][1] == pytest.approx(0.0, abs=1e-20)
    assert mse_scan(EntropyDataset.from_points(points), p_grid=[0.2])[0][0] == 0.2


def test_dynamical_exponent():
    alpha_t = LogFit(slope=0.26, intercept=0.0, slope_err=0.01, intercept_err=0.0, n_points=5)
    alpha_x = LogFit(slope=0.25, intercept=0.0, slope_err=0.01, intercept_err=0.0, n_points=5)
    z, err = dynamical_exponent(alpha_t, alpha_x)
    assert z == pytest.approx(1.04)
    assert err == pytest.approx(0.0577, abs=1e-3)
    flat = LogFit(slope=0.0, intercept=0.0, slope_err=0.0, intercept_err=0.0, n_points=3)
    with pytest.raises(InvalidArgument):
        dynamical_exponent(alpha_t, flat)
