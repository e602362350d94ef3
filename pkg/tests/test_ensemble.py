"""Tests for sweeps, resume, and order-free aggregation."""

import numpy as np
import pytest
from pydantic import ValidationError

from core import storage
from core.circuit import ResourceBudget, run_trajectory
from core.ensemble import (
    CircuitTemplate,
    EnsembleResult,
    SweepSpec,
    aggregate_records,
    merge,
    run_ensemble,
)
from core.errors import CapabilityError, MergeConflict
from core.mps import TruncationPolicy
from core.scaling import dataset_from_records, temporal_log_fit
from core.seeding import trajectory_seed

TEMPLATE = CircuitTemplate(time_cycles=4, truncation=TruncationPolicy(cutoff=1e-12))


def sweep(tmp_path, name="out", **kwargs) -> SweepSpec:
    base = dict(
        n_values=[4, 6],
        p_values=[0.1, 0.3],
        runs_per_point=4,
        base_config=TEMPLATE,
        master_seed=17,
        output_dir=tmp_path / name,
    )
    base.update(kwargs)
    return SweepSpec(**base)


def records_for(n=4, p=0.2, runs=range(6), seed=5):
    config = TEMPLATE.config_for(n, p, seed)
    return [run_trajectory(config, seed=trajectory_seed(seed, n, p, r), run_index=r) for r in runs]


def test_sweep_spec_validation(tmp_path):
    assert sweep(tmp_path).planned_count() == 16
    for bad in (dict(n_values=[5]), dict(n_values=[2]), dict(n_values=[4, 4]), dict(p_values=[0.1, 0.1]), dict(p_values=[1.2])):
        with pytest.raises(ValidationError):
            sweep(tmp_path, **bad)
    with pytest.raises(ValidationError):
        sweep(tmp_path, base_config=CircuitTemplate(entropy_bond=5))
    with pytest.raises(ValidationError):
        SweepSpec(n_values=[4], p_values=[0.1], unknown_field=1)


def test_run_ensemble_writes_outputs(tmp_path):
    spec = sweep(tmp_path)
    result = run_ensemble(spec, progress=False)
    out = spec.output_dir
    for name in (storage.RECORDS_FILE, storage.AGGREGATE_FILE, storage.BOND_STATS_FILE, storage.RESOLVED_CONFIG_FILE):
        assert (out / name).exists()
    assert len(storage.read_records(out / storage.RECORDS_FILE)) == 16
    frame = result.to_frame()
    assert list(frame.columns) == ["N", "p", "alpha", "cycle", "mean_S", "stderr_S", "n_runs"]
    assert len(frame) == 4 * 2 * 4
    assert (frame["n_runs"] == 4).all()
    assert (frame["stderr_S"] >= 0).all()
    assert result.n_incomplete() == 0


def test_single_run_matches_trajectory(tmp_path):
    spec = sweep(tmp_path, n_values=[6], p_values=[0.3], runs_per_point=1)
    result = run_ensemble(spec, progress=False)
    expected = run_trajectory(
        spec.base_config.config_for(6, 0.3, 17), seed=trajectory_seed(17, 6, 0.3, 0), run_index=0
    )
    cell = result.cell(6, 0.3)
    assert np.array_equal(cell.mean_series(1.0), expected.series_for(1.0))
    assert np.array_equal(cell.stderr_series(2.0), np.zeros(4))


def test_resume_reproduces_aggregate(tmp_path):
    full = sweep(tmp_path, "full")
    run_ensemble(full, progress=False)
    reference = (full.output_dir / storage.AGGREGATE_FILE).read_bytes()

    partial = sweep(tmp_path, "partial")
    run_ensemble(partial, progress=False)
    path = partial.output_dir / storage.RECORDS_FILE
    lines = path.read_text(encoding="utf-8").splitlines(keepends=True)
    path.write_text("".join(lines[:5]) + lines[5][:30], encoding="utf-8")
    run_ensemble(partial, progress=False)
    assert (partial.output_dir / storage.AGGREGATE_FILE).read_bytes() == reference


def test_worker_count_does_not_change_aggregate(tmp_path):
    one = sweep(tmp_path, "one", workers=1)
    two = sweep(tmp_path, "two", workers=2)
    run_ensemble(one, progress=False)
    run_ensemble(two, progress=False)
    for name in (storage.AGGREGATE_FILE, storage.BOND_STATS_FILE):
        assert (one.output_dir / name).read_bytes() == (two.output_dir / name).read_bytes()


def test_resume_ignores_records_with_other_settings(tmp_path):
    run_ensemble(sweep(tmp_path, "shared"), progress=False)
    changed = sweep(tmp_path, "shared", base_config=TEMPLATE.model_copy(update={"reset_after_measure": True}))
    result = run_ensemble(changed, progress=False)
    assert len(storage.read_records(changed.output_dir / storage.RECORDS_FILE)) == 32
    assert result.cell(4, 0.1).n_runs == 4


def test_merge_halves_equals_whole():
    recs = records_for()
    whole = aggregate_records(recs)
    merged = merge(aggregate_records(recs[:2]), aggregate_records(recs[2:]))
    a, b = whole.cell(4, 0.2), merged.cell(4, 0.2)
    assert b.n_runs == 6
    assert np.allclose(a.mean, b.mean, atol=1e-12, rtol=0)
    assert np.allclose(a.m2, b.m2, atol=1e-12, rtol=0)
    assert a.bond_histogram == b.bond_histogram


def test_merge_is_commutative_and_associative():
    recs = records_for()
    x, y, z = aggregate_records(recs[:1]), aggregate_records(recs[1:4]), aggregate_records(recs[4:])
    left = merge(merge(x, y), z).cell(4, 0.2)
    right = merge(x, merge(y, z)).cell(4, 0.2)
    swapped = merge(z, merge(y, x)).cell(4, 0.2)
    for other in (right, swapped):
        assert np.allclose(left.mean, other.mean, atol=1e-12, rtol=0)
        assert np.allclose(left.m2, other.m2, atol=1e-12, rtol=0)
        assert left.run_indices == other.run_indices


def test_merge_with_empty_and_disjoint_cells():
    part = aggregate_records(records_for())
    assert merge(part, EnsembleResult()).cell(4, 0.2).n_runs == 6
    other = aggregate_records(records_for(n=6, runs=range(2)))
    both = merge(part, other)
    assert set(both.cells) == {(4, "0.2"), (6, "0.2")}


def test_merge_rejects_overlap():
    recs = records_for()
    with pytest.raises(MergeConflict):
        merge(aggregate_records(recs[:3]), aggregate_records(recs[2:]))


def test_duplicates_keep_first():
    recs = records_for(runs=range(3))
    result = aggregate_records(recs + [recs[0]])
    assert result.cell(4, 0.2).n_runs == 3


def test_budget_marks_incomplete(tmp_path):
    spec = sweep(tmp_path, n_values=[6], p_values=[0.0], runs_per_point=3, budget=ResourceBudget(max_bond=1))
    result = run_ensemble(spec, progress=False)
    assert result.n_incomplete() == 3
    assert result.cell(6, 0.0).n_runs == 0
    assert result.to_frame().empty
    stats = result.bond_stats_frame()
    assert stats.loc[0, "n_incomplete"] == 3
    assert len(storage.read_records(spec.output_dir / storage.RECORDS_FILE)) == 3


def test_dense_backend_rejects_large_sweeps(tmp_path):
    with pytest.raises(CapabilityError):
        run_ensemble(sweep(tmp_path, n_values=[22], backend="dense"), progress=False)


def test_dense_backend_matches_mps_sweep(tmp_path):
    mps = run_ensemble(sweep(tmp_path, "mps"), progress=False)
    dense = run_ensemble(sweep(tmp_path, "dense", backend="dense"), progress=False)
    assert np.allclose(mps.to_frame()["mean_S"], dense.to_frame()["mean_S"], atol=1e-6)


def test_bond_stats_histogram():
    result = aggregate_records(records_for(n=6, p=0.0, runs=range(3)))
    row = result.bond_stats_frame().iloc[0]
    assert row["n_runs"] == 3
    assert row["max_final_bond"] >= 2
    assert row["peak_bond"] >= row["max_final_bond"]
    assert sum(int(part.split(":")[1]) for part in row["histogram"].split(";")) == 3


def test_dataset_from_records_keeps_samples():
    recs = records_for(n=4, runs=range(4)) + records_for(n=8, runs=range(4))
    data = dataset_from_records(recs, alpha=1.0)
    assert data.sizes() == [4, 8]
    assert len(data.samples[(8, "0.2")]) == 4
    assert data.frame.loc[0, "mean_S"] == pytest.approx(np.mean([r.series_for(1.0)[-1] for r in recs[:4]]))


def test_temporal_log_fit_on_cell():
    result = aggregate_records(records_for(n=6, p=0.0, runs=range(4)))
    fit = temporal_log_fit(result, 6, 0.0, alpha=1.0, t_min=1, t_max=4)
    assert fit.n_points == 4
    assert fit.offset_form == "ln_t"
