"""Critical-scaling checks on the config/critical*.toml sweeps (``pytest -m overnight``).

Set ``MPT_CRITICAL_DIR`` to keep the sweeps between sessions; an interrupted
sweep resumes from its records.
"""

import os
from pathlib import Path

import pytest

from core.cli import load_sweep_file
from core.ensemble import SweepSpec, run_ensemble
from core.scaling import dynamical_exponent, fit_collapse, mse_scan, spatial_log_fit, temporal_log_fit
from core.settings import Settings

pytestmark = pytest.mark.overnight

CONFIG_DIR = Path(__file__).resolve().parent.parent / "config"


def critical_sweep(name: str, tmp_path_factory):
    raw = load_sweep_file(CONFIG_DIR / f"{name}.toml")
    root = os.getenv("MPT_CRITICAL_DIR")
    raw["output_dir"] = str(Path(root) / name) if root else str(tmp_path_factory.mktemp(name))
    raw["workers"] = Settings.load().default_workers()
    return run_ensemble(SweepSpec.model_validate(raw), progress=False)


@pytest.fixture(scope="module")
def plain(tmp_path_factory):
    result = critical_sweep("critical", tmp_path_factory)
    return result, fit_collapse(result.to_dataset(), bootstrap=100)


@pytest.fixture(scope="module")
def with_reset(tmp_path_factory):
    result = critical_sweep("critical_reset", tmp_path_factory)
    return result, fit_collapse(result.to_dataset(), bootstrap=100)


def test_collapse_locates_transition(plain):
    _, fit = plain
    assert 0.12 <= fit.p_c <= 0.22
    assert 1.0 <= fit.nu <= 1.9


def test_reset_variant_agrees_within_bootstrap_errors(plain, with_reset):
    (_, a), (_, b) = plain, with_reset
    assert abs(a.p_c - b.p_c) <= a.p_c_err + b.p_c_err
    assert abs(a.nu - b.nu) <= a.nu_err + b.nu_err


def test_mse_scan_minimum_near_transition(plain):
    result, _ = plain
    scan = mse_scan(result.to_dataset())
    p_min, _ = min(scan, key=lambda row: row[1])
    assert 0.10 <= p_min <= 0.22


def test_log_slope_and_dynamical_exponent(plain):
    result, _ = plain
    spatial = spatial_log_fit(result.to_dataset(), 0.17, parity="even")
    assert 0.15 <= spatial.slope <= 0.40
    z, _ = dynamical_exponent(temporal_log_fit(result, 20, 0.17), spatial)
    assert 0.85 <= z <= 1.25
