from __future__ import annotations
import logging
from itertools import product
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from .circuit import CircuitConfig, run_trajectory
from .mps import TruncationPolicy
from .seeding import trajectory_seed

logger = logging.getLogger(__name__)


class OracleCase(BaseModel):
    n_sites: int
    p: float
    reset: bool
    seed: int
    outcomes_match: bool
    max_entropy_deviation: float = Field(ge=0.0)


class OracleReport(BaseModel):
    cases: List[OracleCase]
    tolerance: float
    max_entropy_deviation: float
    outcome_mismatches: int

    @property
    def passed(self) -> bool:
        return self.outcome_mismatches == 0 and self.max_entropy_deviation <= self.tolerance


def oracle_equivalence(
    n_values: Sequence[int] = (4, 6, 8, 10),
    p_values: Sequence[float] = (0.0, 0.1, 0.3),
    runs: int = 50,
    reset_modes: Sequence[bool] = (False, True),
    cycles: Optional[int] = None,
    cutoff: float = 1e-12,
    tolerance: float = 1e-6,
    master_seed: int = 0,
) -> OracleReport:
    """Run MPS and dense backends on shared seeds and compare outcomes and entropies."""
    cases: List[OracleCase] = []
    policy = TruncationPolicy(cutoff=cutoff, max_bond=None)
    for n, p, reset in product(n_values, p_values, reset_modes):
        config = CircuitConfig(
            n_sites=n,
            meas_rate=p,
            time_cycles=cycles,
            truncation=policy,
            reset_after_measure=reset,
            master_seed=master_seed,
        )
        for run in range(runs):
            seed = trajectory_seed(master_seed, n, p, run)
            approx = run_trajectory(config, backend="mps", seed=seed)
            exact = run_trajectory(config, backend="dense", seed=seed)
            same = approx.outcomes() == exact.outcomes()
            dev = float(np.max(np.abs(np.asarray(approx.entropy_series) - np.asarray(exact.entropy_series))))
            if not same or dev > tolerance:
                logger.warning("oracle mismatch N=%d p=%s reset=%s run=%d deviation=%.3g", n, p, reset, run, dev)
            cases.append(
                OracleCase(n_sites=n, p=p, reset=reset, seed=seed, outcomes_match=same, max_entropy_deviation=dev)
            )
    return OracleReport(
        cases=cases,
        tolerance=tolerance,
        max_entropy_deviation=max((c.max_entropy_deviation for c in cases), default=0.0),
        outcome_mismatches=sum(not c.outcomes_match for c in cases),
    )
