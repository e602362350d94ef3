"""Dense state-vector simulator used as the correctness oracle.

Amplitude ordering: site 0 is the most significant bit.
"""
from __future__ import annotations
import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
import scipy.linalg as sla

from .errors import CapabilityError, InvalidArgument, NumericalDegeneracy
from .mps import RESET_OPERATOR, UNITARITY_CHECK_TOL, renyi_entropy

MAX_DENSE_SITES = 20


@dataclass
class DenseState:
    n_sites: int
    amplitudes: np.ndarray

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape((2,) * self.n_sites)

    def copy(self) -> "DenseState":
        return DenseState(self.n_sites, self.amplitudes.copy())


def _check_size(n_sites: int) -> None:
    if n_sites < 2:
        raise InvalidArgument(f"n_sites must be >= 2, got {n_sites}")
    if n_sites > MAX_DENSE_SITES:
        raise CapabilityError(f"dense oracle supports at most {MAX_DENSE_SITES} sites, got {n_sites}")


def sv_product_state(n_sites: int, bit: int = 0) -> DenseState:
    _check_size(n_sites)
    amps = np.zeros(2 ** n_sites, dtype=np.complex128)
    amps[0 if bit == 0 else -1] = 1.0
    return DenseState(n_sites, amps)


def sv_from_amplitudes(amplitudes: np.ndarray) -> DenseState:
    amps = np.asarray(amplitudes, dtype=np.complex128).ravel()
    n = int(round(math.log2(amps.size)))
    if 2 ** n != amps.size:
        raise InvalidArgument("amplitude vector length must be a power of two")
    _check_size(n)
    return DenseState(n, amps / np.linalg.norm(amps))


def sv_apply(state: DenseState, u: np.ndarray, targets: Sequence[int]) -> DenseState:
    targets = [int(t) for t in targets]
    k = len(targets)
    if k == 0 or any(not 0 <= t < state.n_sites for t in targets) or len(set(targets)) != k:
        raise InvalidArgument(f"invalid targets {targets} for {state.n_sites} sites")
    u = np.asarray(u, dtype=np.complex128)
    dim = 2 ** k
    if u.shape != (dim, dim):
        raise InvalidArgument(f"expected a {dim}x{dim} matrix, got shape {u.shape}")
    if np.max(np.abs(u.conj().T @ u - np.eye(dim))) > UNITARITY_CHECK_TOL:
        raise InvalidArgument("gate matrix is not unitary")
    psi = state.tensor()
    psi = np.tensordot(u.reshape((2,) * (2 * k)), psi, axes=(list(range(k, 2 * k)), targets))
    psi = np.moveaxis(psi, list(range(k)), targets)
    state.amplitudes = np.ascontiguousarray(psi).reshape(-1)
    return state


def _site_slices(state: DenseState, site: int) -> Tuple[np.ndarray, np.ndarray]:
    psi = np.moveaxis(state.tensor(), site, 0)
    return psi[0], psi[1]


def sv_measure(state: DenseState, site: int, outcome_source: np.random.Generator) -> Tuple[int, DenseState]:
    if not 0 <= site < state.n_sites:
        raise InvalidArgument(f"site {site} out of range for {state.n_sites} sites")
    zero, one = _site_slices(state, site)
    p_plus = float(np.sum(np.abs(zero) ** 2))
    p_minus = float(np.sum(np.abs(one) ** 2))
    total = p_plus + p_minus
    if not total > 0:
        raise NumericalDegeneracy("state has zero norm")
    p_plus /= total
    draw = outcome_source.random()
    outcome, keep, prob = (1, 0, p_plus) if draw < p_plus else (-1, 1, 1.0 - p_plus)
    if prob <= 1e-300:
        raise NumericalDegeneracy(f"sampled an outcome with vanishing probability at site {site}")
    psi = np.moveaxis(state.tensor(), site, 0).copy()
    psi[1 - keep] = 0.0
    psi = np.moveaxis(psi, 0, site).reshape(-1)
    state.amplitudes = psi / np.linalg.norm(psi)
    return outcome, state


def sv_reset(state: DenseState, site: int) -> DenseState:
    if not 0 <= site < state.n_sites:
        raise InvalidArgument(f"site {site} out of range for {state.n_sites} sites")
    psi = np.tensordot(RESET_OPERATOR, state.tensor(), axes=([1], [site]))
    psi = np.moveaxis(psi, 0, site).reshape(-1)
    nrm = float(np.linalg.norm(psi))
    if not nrm > 1e-300:
        raise NumericalDegeneracy(f"reset annihilated the state at site {site}")
    state.amplitudes = psi / nrm
    return state


def sv_schmidt_values(state: DenseState, cut: int) -> np.ndarray:
    if not 1 <= cut <= state.n_sites - 1:
        raise InvalidArgument(f"cut must lie in 1..{state.n_sites - 1}, got {cut}")
    s = sla.svdvals(state.amplitudes.reshape(2 ** cut, -1))
    s = np.sort(s[s > 0])[::-1]
    return s / np.linalg.norm(s)


def sv_entropy(state: DenseState, cut: int, alpha: float) -> float:
    return renyi_entropy(sv_schmidt_values(state, cut), alpha)


def sv_fidelity(a: DenseState, b: DenseState) -> float:
    if a.n_sites != b.n_sites:
        raise InvalidArgument(f"size mismatch: {a.n_sites} vs {b.n_sites} sites")
    return float(min(1.0, abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2))


def sv_norm(state: DenseState) -> float:
    return float(np.linalg.norm(state.amplitudes))
