"""Seeded trajectory sweeps over (N, p), persistence, and order-free aggregation."""
from __future__ import annotations
import logging
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from tqdm import tqdm

from . import storage
from .circuit import BackendName, CircuitConfig, ResourceBudget, TrajectoryRecord, run_trajectory
from .errors import CapabilityError, MergeConflict, ResourceExhausted
from .mps import TruncationPolicy
from .scaling import EntropyDataset
from .seeding import SEED_MASK, rate_key, trajectory_seed
from .statevector import MAX_DENSE_SITES

logger = logging.getLogger(__name__)

CellKey = Tuple[int, str]


class CircuitTemplate(BaseModel):
    """Everything of a CircuitConfig except the size and measurement rate."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    time_cycles: Optional[int] = Field(default=None, ge=1)
    truncation: TruncationPolicy = Field(default_factory=TruncationPolicy)
    reset_after_measure: bool = False
    crosstalk_rate: float = Field(default=0.0, ge=0.0, lt=1.0)
    renyi_alphas: Tuple[float, ...] = (1.0, 2.0)
    entropy_bond: Optional[int] = None

    def config_for(self, n_sites: int, p: float, master_seed: int) -> CircuitConfig:
        return CircuitConfig(
            n_sites=n_sites,
            meas_rate=p,
            master_seed=master_seed,
            **self.model_dump(),
        )


class SweepSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_values: List[int] = Field(min_length=1)
    p_values: List[float] = Field(min_length=1)
    runs_per_point: int = Field(default=500, ge=1)
    base_config: CircuitTemplate = Field(default_factory=CircuitTemplate)
    master_seed: int = Field(default=0, ge=0, le=SEED_MASK)
    output_dir: Path = Path("runs")
    backend: BackendName = "mps"
    workers: int = Field(default=1, ge=1)
    budget: ResourceBudget = Field(default_factory=ResourceBudget)

    @field_validator("n_values")
    @classmethod
    def _even_sizes(cls, v: List[int]) -> List[int]:
        for n in v:
            if n < 4 or n % 2:
                raise ValueError(f"system sizes must be even and >= 4, got {n}")
        if len(set(v)) != len(v):
            raise ValueError("n_values contains duplicates")
        return v

    @field_validator("p_values")
    @classmethod
    def _rates(cls, v: List[float]) -> List[float]:
        for p in v:
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"measurement rates must lie in [0, 1], got {p}")
        if len({rate_key(p) for p in v}) != len(v):
            raise ValueError("p_values contains duplicates")
        return v

    @model_validator(mode="after")
    def _configs_valid(self) -> "SweepSpec":
        # surfaces per-size problems such as an entropy_bond beyond N-1
        for n in self.n_values:
            self.base_config.config_for(n, self.p_values[0], self.master_seed)
        return self

    def planned_count(self) -> int:
        return len(self.n_values) * len(self.p_values) * self.runs_per_point

    def cells(self) -> List[Tuple[int, float]]:
        return [(n, p) for n in self.n_values for p in self.p_values]


@dataclass
class CellAggregate:
    """Running moments for one (N, p) cell, arrays shaped (alpha, cycle)."""

    n_sites: int
    p: float
    alphas: Tuple[float, ...]
    n_runs: int = 0
    mean: Optional[np.ndarray] = None
    m2: Optional[np.ndarray] = None
    run_indices: frozenset = frozenset()
    n_incomplete: int = 0
    bond_histogram: Counter = field(default_factory=Counter)
    peak_bond: int = 0
    discarded_sum: float = 0.0
    discarded_max: float = 0.0

    @property
    def cycles(self) -> int:
        return 0 if self.mean is None else int(self.mean.shape[1])

    def _row(self, alpha: float) -> int:
        for k, a in enumerate(self.alphas):
            if a == alpha:
                return k
        raise KeyError(f"alpha {alpha} not recorded for N={self.n_sites}, p={self.p}")

    def mean_series(self, alpha: float = 1.0) -> np.ndarray:
        if self.mean is None:
            return np.empty(0)
        return self.mean[self._row(alpha)]

    def stderr_series(self, alpha: float = 1.0) -> np.ndarray:
        if self.m2 is None:
            return np.empty(0)
        if self.n_runs < 2:
            return np.zeros_like(self.m2[self._row(alpha)])
        var = self.m2[self._row(alpha)] / (self.n_runs - 1)
        return np.sqrt(var) / math.sqrt(self.n_runs)


@dataclass
class EnsembleResult:
    cells: Dict[CellKey, CellAggregate] = field(default_factory=dict)

    def cell(self, n_sites: int, p: float) -> CellAggregate:
        return self.cells[(int(n_sites), rate_key(p))]

    def n_incomplete(self) -> int:
        return sum(c.n_incomplete for c in self.cells.values())

    def _ordered(self) -> List[CellAggregate]:
        return [self.cells[k] for k in sorted(self.cells, key=lambda k: (k[0], self.cells[k].p))]

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for c in self._ordered():
            if c.n_runs == 0:
                continue
            for alpha in c.alphas:
                mean = c.mean_series(alpha)
                err = c.stderr_series(alpha)
                for t in range(c.cycles):
                    rows.append(
                        {
                            "N": c.n_sites,
                            "p": c.p,
                            "alpha": alpha,
                            "cycle": t + 1,
                            "mean_S": float(mean[t]),
                            "stderr_S": float(err[t]),
                            "n_runs": c.n_runs,
                        }
                    )
        return pd.DataFrame(rows, columns=["N", "p", "alpha", "cycle", "mean_S", "stderr_S", "n_runs"])

    def bond_stats_frame(self) -> pd.DataFrame:
        rows = []
        for c in self._ordered():
            hist = sorted(c.bond_histogram.items())
            total = sum(k * v for k, v in hist)
            rows.append(
                {
                    "N": c.n_sites,
                    "p": c.p,
                    "n_runs": c.n_runs,
                    "n_incomplete": c.n_incomplete,
                    "mean_final_bond": total / c.n_runs if c.n_runs else 0.0,
                    "max_final_bond": max((k for k, _ in hist), default=0),
                    "peak_bond": c.peak_bond,
                    "histogram": ";".join(f"{k}:{v}" for k, v in hist),
                    "mean_discarded_weight": c.discarded_sum / c.n_runs if c.n_runs else 0.0,
                    "max_discarded_weight": c.discarded_max,
                }
            )
        return pd.DataFrame(rows)

    def to_dataset(self, alpha: float = 1.0, cycle: Optional[int] = None) -> EntropyDataset:
        return EntropyDataset.from_aggregate_frame(self.to_frame(), alpha=alpha, cycle=cycle)


def aggregate_records(records: Iterable[TrajectoryRecord]) -> EnsembleResult:
    """Exact per-cell moments; complete records are reduced in run-index order."""
    complete: Dict[CellKey, Dict[int, TrajectoryRecord]] = {}
    incomplete: Counter = Counter()
    meta: Dict[CellKey, Tuple[int, float, Tuple[float, ...]]] = {}
    for rec in records:
        key = (rec.config.n_sites, rate_key(rec.config.meas_rate))
        meta.setdefault(key, (rec.config.n_sites, rec.config.meas_rate, tuple(rec.alphas)))
        if not rec.complete:
            incomplete[key] += 1
            continue
        bucket = complete.setdefault(key, {})
        run = -1 if rec.run_index is None else rec.run_index
        if run in bucket:
            logger.warning("duplicate record for N=%d p=%s run=%d; keeping the first", key[0], key[1], run)
            continue
        bucket[run] = rec

    result = EnsembleResult()
    for key, (n, p, alphas) in meta.items():
        cell = CellAggregate(n_sites=n, p=p, alphas=alphas, n_incomplete=incomplete[key])
        bucket = complete.get(key, {})
        if bucket:
            ordered = [bucket[r] for r in sorted(bucket)]
            lengths = {len(s) for rec in ordered for s in rec.entropy_series}
            if len(lengths) != 1 or any(tuple(rec.alphas) != alphas for rec in ordered):
                raise MergeConflict(f"records for N={n}, p={p} disagree on alphas or cycle count")
            values = np.array([rec.entropy_series for rec in ordered], dtype=float)
            cell.n_runs = len(ordered)
            cell.mean = values.mean(axis=0)
            cell.m2 = ((values - cell.mean) ** 2).sum(axis=0)
            cell.run_indices = frozenset(bucket)
            cell.bond_histogram = Counter(rec.final_max_bond for rec in ordered)
            cell.peak_bond = max(rec.max_bond_seen for rec in ordered)
            weights = [rec.total_discarded_weight for rec in ordered]
            cell.discarded_sum = float(sum(weights))
            cell.discarded_max = float(max(weights))
        result.cells[key] = cell
    return result


def _merge_cells(a: CellAggregate, b: CellAggregate) -> CellAggregate:
    if a.alphas != b.alphas or (a.n_runs and b.n_runs and a.cycles != b.cycles):
        raise MergeConflict(f"cells for N={a.n_sites}, p={a.p} disagree on alphas or cycle count")
    overlap = a.run_indices & b.run_indices
    if overlap:
        raise MergeConflict(f"N={a.n_sites}, p={a.p}: run indices {sorted(overlap)[:5]} appear in both results")
    out = CellAggregate(
        n_sites=a.n_sites,
        p=a.p,
        alphas=a.alphas,
        n_runs=a.n_runs + b.n_runs,
        run_indices=a.run_indices | b.run_indices,
        n_incomplete=a.n_incomplete + b.n_incomplete,
        bond_histogram=a.bond_histogram + b.bond_histogram,
        peak_bond=max(a.peak_bond, b.peak_bond),
        discarded_sum=a.discarded_sum + b.discarded_sum,
        discarded_max=max(a.discarded_max, b.discarded_max),
    )
    if a.n_runs == 0 or b.n_runs == 0:
        src = a if a.n_runs else b
        out.mean = None if src.mean is None else src.mean.copy()
        out.m2 = None if src.m2 is None else src.m2.copy()
        return out
    n = a.n_runs + b.n_runs
    delta = b.mean - a.mean
    out.mean = (a.n_runs * a.mean + b.n_runs * b.mean) / n
    out.m2 = a.m2 + b.m2 + delta ** 2 * (a.n_runs * b.n_runs / n)
    return out


def merge(a: EnsembleResult, b: EnsembleResult) -> EnsembleResult:
    """Pool two results cell by cell; run indices must be disjoint."""
    out = EnsembleResult()
    for key in set(a.cells) | set(b.cells):
        if key in a.cells and key in b.cells:
            out.cells[key] = _merge_cells(a.cells[key], b.cells[key])
        else:
            src = a.cells.get(key) or b.cells[key]
            out.cells[key] = _merge_cells(src, CellAggregate(src.n_sites, src.p, src.alphas))
    return out


def _run_task(config: CircuitConfig, backend: str, seed: int, run_index: int, budget: ResourceBudget) -> TrajectoryRecord:
    try:
        return run_trajectory(config, backend=backend, seed=seed, run_index=run_index, budget=budget)
    except ResourceExhausted as exc:
        return exc.record


def _pending_tasks(spec: SweepSpec, done: set) -> List[Tuple[CircuitConfig, int, int]]:
    tasks = []
    for n, p in spec.cells():
        config = spec.base_config.config_for(n, p, spec.master_seed)
        for run in range(spec.runs_per_point):
            if (n, rate_key(p), run) in done:
                continue
            tasks.append((config, trajectory_seed(spec.master_seed, n, p, run), run))
    return tasks


def _matching(records: List[TrajectoryRecord], expected: Dict[CellKey, CircuitConfig], runs: int) -> List[TrajectoryRecord]:
    """Records belonging to this sweep: same cell, same circuit settings, run index in range."""
    kept = []
    foreign = 0
    for r in records:
        config = expected.get((r.config.n_sites, rate_key(r.config.meas_rate)))
        if config is None or r.run_index is None or not 0 <= r.run_index < runs:
            continue
        if r.config != config:
            foreign += 1
            continue
        kept.append(r)
    if foreign:
        logger.warning("ignoring %d records written with different circuit settings", foreign)
    return kept


def resolved_config(spec: SweepSpec) -> Dict:
    payload = spec.model_dump(mode="json")
    payload["planned_trajectories"] = spec.planned_count()
    payload["schema_version"] = 1
    return payload


def write_outputs(result: EnsembleResult, out_dir: Path) -> None:
    out = storage.init_output_dir(out_dir)
    storage.write_table(out / storage.AGGREGATE_FILE, result.to_frame())
    storage.write_table(out / storage.BOND_STATS_FILE, result.bond_stats_frame())


def run_ensemble(spec: SweepSpec, progress: bool = True) -> EnsembleResult:
    """Run every missing trajectory of the sweep, then aggregate from disk.

    Records already present in ``records.jsonl`` (complete or not) are
    skipped, so an interrupted sweep resumes where it stopped.
    """
    if spec.backend == "dense" and max(spec.n_values) > MAX_DENSE_SITES:
        raise CapabilityError(f"dense backend supports at most {MAX_DENSE_SITES} sites, got {max(spec.n_values)}")
    out = storage.init_output_dir(spec.output_dir)
    records_path = out / storage.RECORDS_FILE
    storage.repair_tail(records_path)
    storage.write_json(out / storage.RESOLVED_CONFIG_FILE, resolved_config(spec))

    expected = {(n, rate_key(p)): spec.base_config.config_for(n, p, spec.master_seed) for n, p in spec.cells()}
    done = storage.completed_keys(_matching(storage.read_records(records_path), expected, spec.runs_per_point))
    tasks = _pending_tasks(spec, done)
    skipped = spec.planned_count() - len(tasks)
    if skipped:
        logger.info("resuming: %d of %d trajectories already on disk", skipped, spec.planned_count())

    with tqdm(total=len(tasks), desc="trajectories", unit="run", disable=not progress) as bar:
        if spec.workers == 1:
            for config, seed, run in tasks:
                storage.append_record(records_path, _run_task(config, spec.backend, seed, run, spec.budget))
                bar.update(1)
        else:
            with ProcessPoolExecutor(max_workers=spec.workers) as pool:
                futures = [
                    pool.submit(_run_task, config, spec.backend, seed, run, spec.budget) for config, seed, run in tasks
                ]
                for fut in as_completed(futures):
                    storage.append_record(records_path, fut.result())
                    bar.update(1)

    records = _matching(storage.read_records(records_path), expected, spec.runs_per_point)
    result = aggregate_records(records)
    if result.n_incomplete():
        logger.warning("%d trajectories exhausted their budget and are excluded from aggregates", result.n_incomplete())
    write_outputs(result, out)
    return result
