"""Closed-form experimental estimators: crosstalk probabilities and post-selection cost."""
from __future__ import annotations
import math
from typing import Literal, NamedTuple

from .circuit import effective_rate
from .errors import InvalidArgument

FractionForm = Literal["solid_angle", "printed"]

__all__ = [
    "AbsorptionEstimate",
    "PostselectionCost",
    "crosstalk_absorption_estimate",
    "crosstalk_emission_estimate",
    "effective_rate",
    "postselection_feasible",
    "postselection_runs",
]


class PostselectionCost(NamedTuple):
    log2_runs: float
    runs: float


class AbsorptionEstimate(NamedTuple):
    sigma: float
    a: float
    absorbed_fraction: float
    p_d: float


def _require_positive(**values: float) -> None:
    for name, value in values.items():
        if not (math.isfinite(value) and value > 0):
            raise InvalidArgument(f"{name} must be positive and finite, got {value!r}")


def postselection_runs(n_sites: int, p: float, cycles: int) -> PostselectionCost:
    """Expected number of runs, 2**(2 p N T), to repeat one monitored record."""
    if n_sites < 0 or cycles < 0 or not 0.0 <= p <= 1.0:
        raise InvalidArgument(f"need N >= 0, T >= 0 and 0 <= p <= 1, got N={n_sites}, p={p}, T={cycles}")
    log2_runs = 2.0 * p * n_sites * cycles
    try:
        runs = math.pow(2.0, log2_runs)
    except OverflowError:
        runs = math.inf
    return PostselectionCost(log2_runs=log2_runs, runs=runs)


def postselection_feasible(n_sites: int, p: float, cycles: int, max_runs: float) -> bool:
    if not max_runs > 0:
        raise InvalidArgument(f"max_runs must be positive, got {max_runs}")
    return postselection_runs(n_sites, p, cycles).log2_runs <= math.log2(max_runs)


def crosstalk_emission_estimate(relative_intensity: float, linewidth: float, detect_time: float) -> float:
    """p_d from off-resonant scattering of stray detection light: I_rel * (Gamma / 6) * t."""
    if not (math.isfinite(relative_intensity) and relative_intensity >= 0):
        raise InvalidArgument(f"relative_intensity must be non-negative, got {relative_intensity!r}")
    _require_positive(linewidth=linewidth, detect_time=detect_time)
    return relative_intensity * (linewidth / 6.0) * detect_time


def crosstalk_absorption_estimate(
    wavelength: float,
    ion_distance: float,
    scatter_rate: float,
    detect_time: float,
    fraction_form: FractionForm = "solid_angle",
) -> AbsorptionEstimate:
    """p_d from a neighbor absorbing photons scattered by the measured ion.

    The absorber is a disk of cross section lambda^2 / (2 pi) at distance d.
    ``solid_angle`` uses the cone fraction (1 - cos theta) / 2; ``printed``
    uses (1 - cos theta) / (8 pi).
    """
    _require_positive(
        wavelength=wavelength, ion_distance=ion_distance, scatter_rate=scatter_rate, detect_time=detect_time
    )
    sigma = wavelength ** 2 / (2.0 * math.pi)
    a = math.sqrt(sigma / math.pi)
    theta = math.atan(a / ion_distance)
    if fraction_form == "solid_angle":
        fraction = (1.0 - math.cos(theta)) / 2.0
    elif fraction_form == "printed":
        fraction = (1.0 - math.cos(theta)) / (8.0 * math.pi)
    else:
        raise InvalidArgument(f"fraction_form must be 'solid_angle' or 'printed', got {fraction_form!r}")
    return AbsorptionEstimate(sigma=sigma, a=a, absorbed_fraction=fraction, p_d=scatter_rate * detect_time * fraction)
