"""Critical-scaling analysis of ensemble entropies.

Data collapse for (p_c, nu), logarithmic fits in system size and time, the
fit-quality scan over p, and the dynamical exponent.
"""
from __future__ import annotations
import logging
import math
from pathlib import Path
from typing import Dict, Iterable, List, Literal, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field
from scipy.optimize import minimize

from .errors import InvalidArgument
from .seeding import rate_key

logger = logging.getLogger(__name__)

OffsetForm = Literal["ln_N", "ln_2N_over_pi", "ln_t"]
ParityFilter = Optional[Literal["even", "odd"]]

DATASET_COLUMNS = ["N", "p", "mean_S", "stderr_S", "n_runs", "parity"]
P_MATCH_ATOL = 1e-12


def size_parity(n_sites: int) -> str:
    return "even" if (int(n_sites) // 2) % 2 == 0 else "odd"


class EntropyDataset:
    """Mean entropies per (N, p), one row each.

    ``samples`` optionally maps ``(N, rate_key(p))`` to the per-trajectory
    values behind each mean; when present, bootstrap errors resample
    trajectories instead of drawing from the standard errors.
    """

    def __init__(self, frame: pd.DataFrame, samples: Optional[Dict[Tuple[int, str], np.ndarray]] = None):
        missing = {"N", "p", "mean_S", "stderr_S", "n_runs"} - set(frame.columns)
        if missing:
            raise InvalidArgument(f"dataset is missing columns {sorted(missing)}")
        df = frame.copy()
        df["N"] = df["N"].astype(int)
        df["p"] = df["p"].astype(float)
        df["mean_S"] = df["mean_S"].astype(float)
        df["stderr_S"] = df["stderr_S"].astype(float)
        df["n_runs"] = df["n_runs"].astype(int)
        df["parity"] = [size_parity(n) for n in df["N"]]
        if (df["stderr_S"] < 0).any():
            raise InvalidArgument("stderr_S must be non-negative")
        if (df["n_runs"] < 2).any():
            raise InvalidArgument("every point needs at least 2 runs")
        if df.duplicated(subset=["N", "p"]).any():
            raise InvalidArgument("duplicate (N, p) rows in dataset")
        self.frame = df[DATASET_COLUMNS].sort_values(["N", "p"]).reset_index(drop=True)
        self.samples = samples
        self._curves: Optional[List[Tuple[int, np.ndarray, np.ndarray, np.ndarray]]] = None

    @classmethod
    def from_points(cls, points: Iterable[Sequence[float]]) -> "EntropyDataset":
        rows = [dict(N=pt[0], p=pt[1], mean_S=pt[2], stderr_S=pt[3], n_runs=pt[4]) for pt in points]
        return cls(pd.DataFrame(rows, columns=["N", "p", "mean_S", "stderr_S", "n_runs"]))

    @classmethod
    def from_aggregate_csv(cls, path: Path, alpha: float = 1.0, cycle: Optional[int] = None) -> "EntropyDataset":
        """Read ``aggregate.csv``; ``cycle=None`` takes the last recorded cycle of each (N, p)."""
        table = pd.read_csv(path)
        return cls.from_aggregate_frame(table, alpha=alpha, cycle=cycle)

    @classmethod
    def from_aggregate_frame(cls, table: pd.DataFrame, alpha: float = 1.0, cycle: Optional[int] = None) -> "EntropyDataset":
        table = table[np.isclose(table["alpha"].astype(float), alpha)]
        if table.empty:
            raise InvalidArgument(f"no aggregate rows for alpha={alpha}")
        if cycle is None:
            last = table.groupby(["N", "p"])["cycle"].transform("max")
            table = table[table["cycle"] == last]
        else:
            table = table[table["cycle"] == int(cycle)]
            if table.empty:
                raise InvalidArgument(f"no aggregate rows for cycle={cycle}")
        return cls(table[["N", "p", "mean_S", "stderr_S", "n_runs"]].reset_index(drop=True))

    def __len__(self) -> int:
        return len(self.frame)

    def sizes(self) -> List[int]:
        return sorted(int(n) for n in self.frame["N"].unique())

    def rates(self) -> List[float]:
        return sorted(float(p) for p in self.frame["p"].unique())

    def select(self, parity: ParityFilter = None, p: Optional[float] = None) -> "EntropyDataset":
        df = self.frame
        if parity is not None:
            df = df[df["parity"] == parity]
        if p is not None:
            df = df[np.isclose(df["p"], p, rtol=0.0, atol=P_MATCH_ATOL)]
        if df.empty:
            raise InvalidArgument(f"no data points for parity={parity}, p={p}")
        return EntropyDataset(df.drop(columns=["parity"]), self.samples)

    def with_values(self, mean_s: np.ndarray, stderr_s: np.ndarray) -> "EntropyDataset":
        df = self.frame.drop(columns=["parity"]).copy()
        df["mean_S"] = mean_s
        df["stderr_S"] = stderr_s
        return EntropyDataset(df, self.samples)

    def curves(self) -> List[Tuple[int, np.ndarray, np.ndarray, np.ndarray]]:
        if self._curves is None:
            self._curves = [
                (int(n), grp["p"].to_numpy(), grp["mean_S"].to_numpy(), grp["stderr_S"].to_numpy())
                for n, grp in self.frame.groupby("N", sort=True)
            ]
        return self._curves


class CollapseFit(BaseModel):
    p_c: float = Field(gt=0.0, lt=1.0)
    nu: float = Field(gt=0.0)
    p_c_err: float = Field(ge=0.0)
    nu_err: float = Field(ge=0.0)
    quality: float = Field(ge=0.0)
    converged: bool = True
    n_bootstrap: int = 0
    bootstrap_mode: Literal["trajectories", "parametric", "none"] = "none"
    sizes: List[int] = Field(default_factory=list)
    parity: ParityFilter = None


class LogFit(BaseModel):
    slope: float
    intercept: float
    slope_err: float = Field(ge=0.0)
    intercept_err: float = Field(ge=0.0)
    offset_form: OffsetForm = "ln_N"
    n_points: int = Field(ge=3)


class LogFitBand(BaseModel):
    parity: ParityFilter
    rates: List[float]
    fits: List[LogFit]
    mean_slope: float
    slope_half_range: float
    mean_intercept: float
    intercept_half_range: float


def _rescaled(data: EntropyDataset, p_c: float, nu: float):
    if not nu > 0:
        raise InvalidArgument(f"nu must be positive, got {nu}")
    out = []
    for n, p, s, e in data.curves():
        if not p[0] <= p_c <= p[-1]:
            raise InvalidArgument(f"p_c={p_c} lies outside the sampled range [{p[0]}, {p[-1]}] for N={n}")
        s_c = float(np.interp(p_c, p, s))
        out.append((n, (p - p_c) * n ** (1.0 / nu), s - s_c, e))
    return out


def collapse_objective(data: EntropyDataset, p_c: float, nu: float) -> float:
    """Master-curve smoothness of the rescaled data; lower is better.

    Each point is compared with the linear interpolation between its bracketing
    x-neighbors on every other system size, normalized by the combined
    variance. Terms with zero variance are left unnormalized.
    """
    if len(data.curves()) < 3:
        raise InvalidArgument(f"collapse needs at least 3 system sizes, got {data.sizes()}")
    curves = _rescaled(data, p_c, nu)
    total = 0.0
    count = 0
    for i, (_, xi, yi, ei) in enumerate(curves):
        for k, (_, xk, yk, ek) in enumerate(curves):
            if k == i:
                continue
            last = len(xk) - 1
            idx = np.searchsorted(xk, xi, side="left")
            hi = np.clip(idx, 0, last)
            lo = np.clip(idx - 1, 0, last)
            exact = (idx <= last) & (xk[hi] == xi)
            use = exact | ((idx > 0) & (idx <= last))
            if not use.any():
                continue
            span = xk[hi] - xk[lo]
            w = np.where(span > 0, (xi - xk[lo]) / np.where(span > 0, span, 1.0), 0.0)
            w = np.where(exact, np.where(lo == hi, 0.0, 1.0), w)
            y_int = (1.0 - w) * yk[lo] + w * yk[hi]
            var = (1.0 - w) ** 2 * ek[lo] ** 2 + w ** 2 * ek[hi] ** 2
            denom = ei ** 2 + var
            denom = np.where(denom > 0, denom, 1.0)
            terms = (yi - y_int) ** 2 / denom
            total += float(np.sum(terms[use]))
            count += int(np.count_nonzero(use))
    if count == 0:
        return math.inf
    return total / count


def collapse_points(data: EntropyDataset, p_c: float, nu: float) -> pd.DataFrame:
    rows = []
    for n, x, y, e in _rescaled(data, p_c, nu):
        for xv, yv, ev in zip(x, y, e):
            rows.append({"N": n, "x": float(xv), "y": float(yv), "yerr": float(ev), "parity": size_parity(n)})
    frame = pd.DataFrame(rows, columns=["N", "x", "y", "yerr", "parity"])
    frame.insert(1, "p", data.frame["p"].to_numpy())
    return frame


def _common_range(data: EntropyDataset) -> Tuple[float, float]:
    lo = max(float(p[0]) for _, p, _, _ in data.curves())
    hi = min(float(p[-1]) for _, p, _, _ in data.curves())
    if lo > hi:
        raise InvalidArgument("system sizes share no common p-range")
    return lo, hi


def _refine(data: EntropyDataset, start: Tuple[float, float], pc_bounds, nu_bounds) -> Tuple[float, float, float]:
    def objective(v: np.ndarray) -> float:
        try:
            return collapse_objective(data, float(v[0]), float(v[1]))
        except InvalidArgument:
            return math.inf

    res = minimize(
        objective,
        np.asarray(start, dtype=float),
        method="Nelder-Mead",
        bounds=[pc_bounds, nu_bounds],
        options={"xatol": 1e-5, "fatol": 1e-12, "maxiter": 2000},
    )
    return float(res.x[0]), float(res.x[1]), float(res.fun)


def _resample(data: EntropyDataset, rng: np.random.Generator) -> Tuple[EntropyDataset, str]:
    frame = data.frame
    if data.samples and all((int(n), rate_key(p)) in data.samples for n, p in zip(frame["N"], frame["p"])):
        means = np.empty(len(frame))
        errs = np.empty(len(frame))
        for j, (n, p) in enumerate(zip(frame["N"], frame["p"])):
            values = data.samples[(int(n), rate_key(p))]
            draw = values[rng.integers(0, len(values), size=len(values))]
            means[j] = draw.mean()
            errs[j] = draw.std(ddof=1) / math.sqrt(len(draw)) if len(draw) > 1 else 0.0
        return data.with_values(means, errs), "trajectories"
    noise = rng.standard_normal(len(frame))
    return data.with_values(frame["mean_S"].to_numpy() + noise * frame["stderr_S"].to_numpy(), frame["stderr_S"].to_numpy()), "parametric"


def fit_collapse(
    data: EntropyDataset,
    parity: ParityFilter = "even",
    pc_step: float = 0.005,
    nu_min: float = 0.5,
    nu_max: float = 3.0,
    nu_step: float = 0.05,
    bootstrap: int = 100,
    seed: int = 0,
) -> CollapseFit:
    """Best collapse by grid search plus bounded Nelder-Mead refinement.

    Errors are bootstrap standard deviations of locally refined resamples.
    A minimum on the nu search boundary is returned with ``converged=False``.
    """
    if bootstrap < 0:
        raise InvalidArgument(f"bootstrap must be >= 0, got {bootstrap}")
    if not 0 < nu_min < nu_max:
        raise InvalidArgument(f"need 0 < nu_min < nu_max, got {nu_min}, {nu_max}")
    if parity is not None:
        data = data.select(parity=parity)
    if len(data.sizes()) < 3:
        raise InvalidArgument(f"collapse needs at least 3 system sizes, got {data.sizes()}")
    pc_lo, pc_hi = _common_range(data)
    pc_grid = np.clip(np.arange(pc_lo, pc_hi + 1e-12, pc_step), pc_lo, pc_hi)
    nu_grid = np.arange(nu_min, nu_max + 1e-12, nu_step)

    best = (math.inf, pc_grid[0], nu_grid[0])
    for pc in pc_grid:
        for nu in nu_grid:
            q = collapse_objective(data, float(pc), float(nu))
            if q < best[0]:
                best = (q, float(pc), float(nu))
    logger.debug("collapse grid minimum quality=%.4g at p_c=%.4f nu=%.3f", *best)

    p_c, nu, quality = _refine(data, (best[1], best[2]), (pc_lo, pc_hi), (nu_min, nu_max))
    converged = nu_min + nu_step / 2 < nu < nu_max - nu_step / 2
    if not converged:
        logger.warning("collapse fit hit the nu search boundary (nu=%.3f)", nu)

    rng = np.random.default_rng(seed)
    pcs: List[float] = []
    nus: List[float] = []
    mode = "none"
    for _ in range(bootstrap):
        resampled, mode = _resample(data, rng)
        bp, bn, _ = _refine(resampled, (p_c, nu), (pc_lo, pc_hi), (nu_min, nu_max))
        pcs.append(bp)
        nus.append(bn)
    p_c_err = float(np.std(pcs, ddof=1)) if len(pcs) > 1 else 0.0
    nu_err = float(np.std(nus, ddof=1)) if len(nus) > 1 else 0.0

    return CollapseFit(
        p_c=p_c,
        nu=nu,
        p_c_err=p_c_err,
        nu_err=nu_err,
        quality=max(0.0, quality),
        converged=converged,
        n_bootstrap=bootstrap,
        bootstrap_mode=mode,
        sizes=data.sizes(),
        parity=parity,
    )


def _abscissa(x: np.ndarray, offset_form: OffsetForm) -> np.ndarray:
    if offset_form == "ln_2N_over_pi":
        return np.log(2.0 * x / math.pi)
    if offset_form in ("ln_N", "ln_t"):
        return np.log(x)
    raise InvalidArgument(f"unknown offset_form {offset_form!r}")


def log_fit(
    x_values: Sequence[float],
    s_values: Sequence[float],
    s_errors: Optional[Sequence[float]] = None,
    offset_form: OffsetForm = "ln_N",
) -> LogFit:
    """Least-squares fit of S = slope * ln(x') + intercept.

    x' is x, 2x/pi or t according to ``offset_form``. With strictly positive
    errors the fit is weighted and its covariance unscaled; otherwise the
    covariance is scaled by the residual variance.
    """
    x = np.asarray(x_values, dtype=float)
    s = np.asarray(s_values, dtype=float)
    if x.shape != s.shape or x.ndim != 1:
        raise InvalidArgument("x_values and s_values must be 1-D and equally long")
    if len(x) < 3:
        raise InvalidArgument(f"log fit needs at least 3 points, got {len(x)}")
    if np.any(x <= 0):
        raise InvalidArgument("abscissae must be positive")
    u = _abscissa(x, offset_form)
    sigma = None if s_errors is None else np.asarray(s_errors, dtype=float)
    if sigma is not None and sigma.shape != s.shape:
        raise InvalidArgument("s_errors must match s_values")
    if sigma is not None and np.all(sigma > 0):
        coeffs, cov = np.polyfit(u, s, 1, w=1.0 / sigma, cov="unscaled")
    else:
        coeffs, cov = np.polyfit(u, s, 1, cov="unscaled")
        resid = s - np.polyval(coeffs, u)
        cov = cov * float(resid @ resid) / (len(x) - 2)
    errs = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return LogFit(
        slope=float(coeffs[0]),
        intercept=float(coeffs[1]),
        slope_err=float(errs[0]),
        intercept_err=float(errs[1]),
        offset_form=offset_form,
        n_points=len(x),
    )


def spatial_log_fit(
    data: EntropyDataset, p: float, parity: ParityFilter = "even", offset_form: OffsetForm = "ln_2N_over_pi"
) -> LogFit:
    sub = data.select(parity=parity, p=p).frame
    return log_fit(sub["N"].to_numpy(), sub["mean_S"].to_numpy(), sub["stderr_S"].to_numpy(), offset_form)


def log_fit_band(
    data: EntropyDataset, p_values: Sequence[float], parity: ParityFilter = "even", offset_form: OffsetForm = "ln_2N_over_pi"
) -> LogFitBand:
    """Per-p spatial fits across a band of rates plus their spread."""
    if not p_values:
        raise InvalidArgument("p_values must not be empty")
    fits = [spatial_log_fit(data, p, parity, offset_form) for p in p_values]
    slopes = np.array([f.slope for f in fits])
    intercepts = np.array([f.intercept for f in fits])
    return LogFitBand(
        parity=parity,
        rates=[float(p) for p in p_values],
        fits=fits,
        mean_slope=float(slopes.mean()),
        slope_half_range=float(np.ptp(slopes) / 2),
        mean_intercept=float(intercepts.mean()),
        intercept_half_range=float(np.ptp(intercepts) / 2),
    )


def temporal_log_fit(
    result,
    n_sites: int,
    p: float,
    alpha: float = 1.0,
    t_min: int = 1,
    t_max: Optional[int] = None,
) -> LogFit:
    """Fit the per-cycle mean entropy of one ensemble cell against ln t.

    The window defaults to cycles ``t_min..N``, where growth is still
    logarithmic at criticality.
    """
    cell = result.cell(n_sites, p)
    return series_log_fit(cell.mean_series(alpha), cell.stderr_series(alpha), t_min, n_sites if t_max is None else t_max)


def series_log_fit(
    mean_series: Sequence[float], stderr_series: Sequence[float], t_min: int = 1, t_max: Optional[int] = None
) -> LogFit:
    """Fit a per-cycle series (cycle 1 first) against ln t over cycles t_min..t_max."""
    mean = np.asarray(mean_series, dtype=float)
    err = np.asarray(stderr_series, dtype=float)
    t_max = len(mean) if t_max is None else min(t_max, len(mean))
    if t_min < 1 or t_max - t_min + 1 < 3:
        raise InvalidArgument(f"time window [{t_min}, {t_max}] holds fewer than 3 cycles")
    t = np.arange(t_min, t_max + 1, dtype=float)
    window = slice(t_min - 1, t_max)
    return log_fit(t, mean[window], err[window], "ln_t")


def mse_scan(
    data: EntropyDataset, p_grid: Optional[Sequence[float]] = None, parity: ParityFilter = "even"
) -> List[Tuple[float, float]]:
    """Mean squared residual R(p) of an unweighted alpha ln N + b fit at each p."""
    sub = data.select(parity=parity) if parity is not None else data
    grid = sub.rates() if p_grid is None else [float(p) for p in p_grid]
    scan: List[Tuple[float, float]] = []
    for p in grid:
        rows = sub.select(p=p).frame
        if rows["N"].nunique() < 3:
            raise InvalidArgument(f"p={p}: need at least 3 system sizes, got {rows['N'].nunique()}")
        u = np.log(rows["N"].to_numpy(dtype=float))
        s = rows["mean_S"].to_numpy()
        coeffs = np.polyfit(u, s, 1)
        resid = s - np.polyval(coeffs, u)
        scan.append((p, float(np.mean(resid ** 2))))
    return scan


def dynamical_exponent(alpha_t: LogFit, alpha_x: LogFit) -> Tuple[float, float]:
    """z = alpha_t / alpha_x with first-order error propagation."""
    if not alpha_x.slope > 0:
        raise InvalidArgument(f"spatial slope must be positive, got {alpha_x.slope}")
    if not alpha_t.slope > 0:
        raise InvalidArgument(f"temporal slope must be positive, got {alpha_t.slope}")
    z = alpha_t.slope / alpha_x.slope
    err = z * math.hypot(alpha_t.slope_err / alpha_t.slope, alpha_x.slope_err / alpha_x.slope)
    return z, err


def dataset_from_records(records: Iterable, alpha: float = 1.0, cycle: Optional[int] = None) -> EntropyDataset:
    """Per-(N, p) means over complete trajectory records, keeping per-run values.

    ``cycle=None`` uses the final recorded cycle.
    """
    groups: Dict[Tuple[int, str], List[float]] = {}
    rates: Dict[Tuple[int, str], float] = {}
    for rec in records:
        if not rec.complete:
            continue
        key = (rec.config.n_sites, rate_key(rec.config.meas_rate))
        series = rec.series_for(alpha)
        value = series[-1] if cycle is None else series[cycle - 1]
        groups.setdefault(key, []).append(float(value))
        rates[key] = float(rec.config.meas_rate)
    if not groups:
        raise InvalidArgument("no complete records to build a dataset from")
    rows = []
    samples: Dict[Tuple[int, str], np.ndarray] = {}
    for key in sorted(groups, key=lambda k: (k[0], rates[k])):
        values = np.asarray(groups[key])
        samples[key] = values
        n = len(values)
        stderr = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        rows.append({"N": key[0], "p": rates[key], "mean_S": float(values.mean()), "stderr_S": stderr, "n_runs": n})
    return EntropyDataset(pd.DataFrame(rows), samples)
