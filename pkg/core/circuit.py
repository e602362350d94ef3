"""Brick-layer hybrid circuits: unitary layers, monitored measurements, crosstalk.

A time cycle is: even unitary layer, measurement layer, odd unitary layer,
measurement layer. Entropies at the configured cut are recorded once per
cycle, after the second measurement layer.
"""
from __future__ import annotations
import logging
import time
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from . import mps, statevector
from .errors import CapabilityError, InvalidArgument, ResourceExhausted
from .gates import Parity, plan_layer
from .seeding import SEED_MASK, Streams

logger = logging.getLogger(__name__)

RECORD_SCHEMA_VERSION = 1
BackendName = Literal["mps", "dense"]


class CircuitConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_sites: int = Field(ge=4)
    meas_rate: float = Field(ge=0.0, le=1.0)
    time_cycles: Optional[int] = Field(default=None, ge=1)
    truncation: mps.TruncationPolicy = Field(default_factory=mps.TruncationPolicy)
    reset_after_measure: bool = False
    crosstalk_rate: float = Field(default=0.0, ge=0.0, lt=1.0)
    renyi_alphas: Tuple[float, ...] = (1.0, 2.0)
    entropy_bond: Optional[int] = None
    record_cadence: Literal["cycle"] = "cycle"
    master_seed: int = Field(default=0, ge=0, le=SEED_MASK)

    @model_validator(mode="after")
    def _check(self) -> "CircuitConfig":
        if self.n_sites % 2:
            raise ValueError(f"n_sites must be even, got {self.n_sites}")
        if not self.renyi_alphas or any(not a > 0 for a in self.renyi_alphas):
            raise ValueError("renyi_alphas must be a non-empty list of positive values")
        if self.entropy_bond is not None and not 1 <= self.entropy_bond <= self.n_sites - 1:
            raise ValueError(f"entropy_bond must lie in 1..{self.n_sites - 1}")
        return self

    @property
    def cycles(self) -> int:
        return self.time_cycles if self.time_cycles is not None else 2 * self.n_sites

    @property
    def cut(self) -> int:
        return self.entropy_bond if self.entropy_bond is not None else self.n_sites // 2


class ResourceBudget(BaseModel):
    model_config = ConfigDict(frozen=True)

    max_bond: Optional[int] = Field(default=None, ge=1)
    wall_time_s: Optional[float] = Field(default=None, gt=0.0)


class MeasurementEvent(BaseModel):
    model_config = ConfigDict(frozen=True)

    cycle: int = Field(ge=1)
    half: Parity
    site: int = Field(ge=0)
    outcome: Literal[1, -1]
    monitored: bool = True


class TrajectoryRecord(BaseModel):
    schema_version: int = RECORD_SCHEMA_VERSION
    config: CircuitConfig
    seed: int
    run_index: Optional[int] = None
    backend: BackendName = "mps"
    alphas: Tuple[float, ...]
    entropy_series: List[List[float]]
    max_bond_seen: int = 1
    final_max_bond: int = 1
    total_discarded_weight: float = 0.0
    events: List[MeasurementEvent] = Field(default_factory=list)
    wall_time: float = 0.0
    complete: bool = True

    def series_for(self, alpha: float) -> List[float]:
        for a, series in zip(self.alphas, self.entropy_series):
            if a == alpha:
                return series
        raise InvalidArgument(f"alpha {alpha} was not recorded (have {list(self.alphas)})")

    def outcomes(self) -> List[Tuple[int, str, int, int, bool]]:
        return [(e.cycle, e.half, e.site, e.outcome, e.monitored) for e in self.events]


class MpsBackend:
    name = "mps"

    def __init__(self, config: CircuitConfig):
        self.n_sites = config.n_sites
        self.policy = config.truncation
        self.state = mps.product_state(config.n_sites, 0)

    def apply(self, bond: Tuple[int, int], u: np.ndarray) -> float:
        _, discarded = mps.apply_two_site(self.state, bond, u, self.policy)
        return discarded

    def measure(self, site: int, rng: np.random.Generator) -> int:
        outcome, _ = mps.measure_site(self.state, site, rng)
        return outcome

    def reset(self, site: int) -> None:
        mps.reset_site(self.state, site)

    def entropies(self, cut: int, alphas: Sequence[float]) -> List[float]:
        spectrum = mps.schmidt_spectrum(self.state, cut)
        return [mps.renyi_entropy(spectrum, a) for a in alphas]

    def max_bond(self) -> int:
        return mps.max_bond(self.state)

    @property
    def discarded_weight(self) -> float:
        return self.state.discarded_weight

    def fidelity(self, other: "MpsBackend") -> float:
        return mps.fidelity(self.state, other.state)


class DenseBackend:
    name = "dense"

    def __init__(self, config: CircuitConfig):
        if config.n_sites > statevector.MAX_DENSE_SITES:
            raise CapabilityError(
                f"dense backend supports at most {statevector.MAX_DENSE_SITES} sites, got {config.n_sites}"
            )
        self.n_sites = config.n_sites
        self.state = statevector.sv_product_state(config.n_sites, 0)

    def apply(self, bond: Tuple[int, int], u: np.ndarray) -> float:
        statevector.sv_apply(self.state, u, bond)
        return 0.0

    def measure(self, site: int, rng: np.random.Generator) -> int:
        outcome, _ = statevector.sv_measure(self.state, site, rng)
        return outcome

    def reset(self, site: int) -> None:
        statevector.sv_reset(self.state, site)

    def entropies(self, cut: int, alphas: Sequence[float]) -> List[float]:
        values = statevector.sv_schmidt_values(self.state, cut)
        return [mps.renyi_entropy(values, a) for a in alphas]

    def max_bond(self) -> int:
        return max(
            int(np.count_nonzero(statevector.sv_schmidt_values(self.state, cut) > 1e-12))
            for cut in range(1, self.n_sites)
        )

    @property
    def discarded_weight(self) -> float:
        return 0.0

    def fidelity(self, other: "DenseBackend") -> float:
        return statevector.sv_fidelity(self.state, other.state)


def make_backend(name: str, config: CircuitConfig):
    if name == "mps":
        return MpsBackend(config)
    if name == "dense":
        return DenseBackend(config)
    raise InvalidArgument(f"unknown backend {name!r}; expected 'mps' or 'dense'")


def effective_rate(p: float, p_d: float) -> float:
    """Per-site measurement probability including crosstalk: (1 + p_d - p p_d) p."""
    if not 0.0 <= p <= 1.0 or not 0.0 <= p_d <= 1.0:
        raise InvalidArgument(f"rates must lie in [0, 1], got p={p}, p_d={p_d}")
    return (1.0 + p_d - p * p_d) * p


def _crosstalk_neighbor(site: int, n_sites: int, direction_draw: float) -> int:
    if site == 0:
        return 1
    if site == n_sites - 1:
        return n_sites - 2
    return site - 1 if direction_draw < 0.5 else site + 1


def measurement_layer(
    backend,
    p: float,
    streams: Streams,
    reset: bool = False,
    p_d: float = 0.0,
    cycle: int = 1,
    half: Parity = "even",
) -> List[MeasurementEvent]:
    """One measurement layer.

    Every site is flagged with probability ``p`` (one location draw per site,
    left to right) and flagged sites are measured in ascending order. Each
    monitored measurement consumes two crosstalk draws; with probability
    ``p_d`` one neighbor is measured unmonitored unless it is flagged or was
    already measured in this layer.
    """
    n = backend.n_sites
    flagged = np.flatnonzero(streams.locations.random(n) < p).tolist()
    flagged_set = set(flagged)
    measured: set[int] = set()
    events: List[MeasurementEvent] = []
    for site in flagged:
        outcome = backend.measure(site, streams.outcomes)
        measured.add(site)
        if reset:
            backend.reset(site)
        events.append(MeasurementEvent(cycle=cycle, half=half, site=site, outcome=outcome, monitored=True))
        hit, direction = streams.crosstalk.random(2)
        if not hit < p_d:
            continue
        neighbor = _crosstalk_neighbor(site, n, direction)
        if neighbor in measured or neighbor in flagged_set:
            continue
        outcome = backend.measure(neighbor, streams.crosstalk)
        measured.add(neighbor)
        if reset:
            backend.reset(neighbor)
        events.append(MeasurementEvent(cycle=cycle, half=half, site=neighbor, outcome=outcome, monitored=False))
    return events


def _simulate(
    config: CircuitConfig,
    backend_name: str,
    seed: int,
    run_index: Optional[int],
    budget: Optional[ResourceBudget],
):
    t0 = time.perf_counter()
    streams = Streams.from_seed(seed)
    backend = make_backend(backend_name, config)
    alphas = tuple(config.renyi_alphas)
    series: List[List[float]] = [[] for _ in alphas]
    events: List[MeasurementEvent] = []
    max_seen = backend.max_bond()

    def record(complete: bool) -> TrajectoryRecord:
        return TrajectoryRecord(
            config=config,
            seed=seed,
            run_index=run_index,
            backend=backend_name,
            alphas=alphas,
            entropy_series=[list(s) for s in series],
            max_bond_seen=max_seen,
            final_max_bond=backend.max_bond(),
            total_discarded_weight=backend.discarded_weight,
            events=list(events),
            wall_time=time.perf_counter() - t0,
            complete=complete,
        )

    for cycle in range(1, config.cycles + 1):
        for parity in ("even", "odd"):
            plan = plan_layer(parity, config.n_sites, streams.angles)
            for gate in plan.gates:
                backend.apply((gate.targets[0], gate.targets[1]), gate.matrix())
            max_seen = max(max_seen, backend.max_bond())
            if budget is not None and budget.max_bond is not None and max_seen > budget.max_bond:
                raise ResourceExhausted(
                    f"bond dimension {max_seen} exceeded budget {budget.max_bond} at cycle {cycle}",
                    record(False),
                )
            events.extend(
                measurement_layer(
                    backend,
                    config.meas_rate,
                    streams,
                    reset=config.reset_after_measure,
                    p_d=config.crosstalk_rate,
                    cycle=cycle,
                    half=parity,
                )
            )
        for k, value in enumerate(backend.entropies(config.cut, alphas)):
            series[k].append(value)
        if budget is not None and budget.wall_time_s is not None and time.perf_counter() - t0 > budget.wall_time_s:
            raise ResourceExhausted(f"wall time budget {budget.wall_time_s}s exceeded at cycle {cycle}", record(False))
    return record(True), backend


def run_trajectory(
    config: CircuitConfig,
    backend: BackendName = "mps",
    seed: Optional[int] = None,
    run_index: Optional[int] = None,
    budget: Optional[ResourceBudget] = None,
) -> TrajectoryRecord:
    """Run one seeded trajectory from |0...0>.

    The record is a deterministic function of ``(config, seed)`` apart from
    ``wall_time``. Raises ``ResourceExhausted`` carrying the partial record
    when the budget runs out.
    """
    seed = config.master_seed if seed is None else int(seed)
    rec, _ = _simulate(config, backend, seed, run_index, budget)
    return rec


def coupled_fidelity_run(config: CircuitConfig, seed: Optional[int] = None, backend: BackendName = "dense") -> float:
    """Final-state fidelity between an ideal run and a crosstalk run sharing all streams."""
    seed = config.master_seed if seed is None else int(seed)
    ideal_config = config.model_copy(update={"crosstalk_rate": 0.0})
    _, ideal = _simulate(ideal_config, backend, seed, None, None)
    _, noisy = _simulate(config, backend, seed, None, None)
    return ideal.fidelity(noisy)
