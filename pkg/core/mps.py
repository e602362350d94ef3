"""Matrix-product-state engine.

Tensors are stored as rank-3 arrays ``(D_left, 2, D_right)``; the outer
dimensions at the chain ends are 1. Every public operation mutates the state
in place, keeps it normalized and returns it.
"""
from __future__ import annotations
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sla
from pydantic import BaseModel, ConfigDict, Field

from .errors import InvalidArgument, NumericalDegeneracy

logger = logging.getLogger(__name__)

UNITARITY_CHECK_TOL = 1e-8
TIE_RTOL = 1e-14
# relative threshold used to drop numerically zero Schmidt values after a measurement
MEASURE_COMPRESS_RTOL = 1e-14

RESET_OPERATOR = np.array([[1.0, 1.0], [0.0, 0.0]], dtype=np.complex128)


class TruncationPolicy(BaseModel):
    model_config = ConfigDict(frozen=True)

    cutoff: float = Field(default=1e-10, ge=0.0)
    max_bond: Optional[int] = Field(default=None, ge=1)


@dataclass(frozen=True)
class SchmidtSpectrum:
    bond: int
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        if np.any(vals < 0):
            raise InvalidArgument("Schmidt values must be non-negative")
        if np.any(np.diff(vals) > 1e-15):
            raise InvalidArgument("Schmidt values must be sorted in descending order")
        total = float(np.sum(vals ** 2))
        if abs(total - 1.0) > 1e-10:
            raise InvalidArgument(f"Schmidt weights sum to {total}, expected 1")
        object.__setattr__(self, "values", vals)


@dataclass
class MpsState:
    n_sites: int
    tensors: List[np.ndarray]
    ortho_center: Optional[int] = 0
    # accumulated squared weight dropped by truncations since creation
    discarded_weight: float = field(default=0.0)

    @property
    def bond_dims(self) -> List[int]:
        return [int(t.shape[2]) for t in self.tensors[:-1]]

    def copy(self) -> "MpsState":
        return MpsState(self.n_sites, [t.copy() for t in self.tensors], self.ortho_center, self.discarded_weight)


def _svd(m: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    try:
        return sla.svd(m, full_matrices=False, lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        logger.debug("gesdd failed on %s matrix, retrying with gesvd", m.shape)
        return sla.svd(m, full_matrices=False, lapack_driver="gesvd")


def _check_site(state: MpsState, site: int) -> None:
    if not 0 <= site < state.n_sites:
        raise InvalidArgument(f"site {site} out of range for {state.n_sites} sites")


def _check_unitary(u: np.ndarray, dim: int) -> np.ndarray:
    u = np.asarray(u, dtype=np.complex128)
    if u.shape != (dim, dim):
        raise InvalidArgument(f"expected a {dim}x{dim} matrix, got shape {u.shape}")
    if np.max(np.abs(u.conj().T @ u - np.eye(dim))) > UNITARITY_CHECK_TOL:
        raise InvalidArgument("gate matrix is not unitary")
    return u


def product_state(n_sites: int, bit: int = 0) -> MpsState:
    """|bit>^N with all bond dimensions 1."""
    if n_sites < 2:
        raise InvalidArgument(f"n_sites must be >= 2, got {n_sites}")
    if bit not in (0, 1):
        raise InvalidArgument(f"bit must be 0 or 1, got {bit!r}")
    local = np.zeros((1, 2, 1), dtype=np.complex128)
    local[0, bit, 0] = 1.0
    return MpsState(n_sites, [local.copy() for _ in range(n_sites)], ortho_center=0)


def from_dense(amplitudes: np.ndarray) -> MpsState:
    """Exact MPS of a dense vector (site 0 is the most significant bit)."""
    psi = np.asarray(amplitudes, dtype=np.complex128).ravel()
    n = int(round(math.log2(psi.size)))
    if 2 ** n != psi.size or n < 2:
        raise InvalidArgument("amplitude vector length must be 2**n with n >= 2")
    psi = psi / np.linalg.norm(psi)
    tensors: List[np.ndarray] = []
    rest = psi.reshape(1, -1)
    for _ in range(n - 1):
        dl = rest.shape[0]
        q, r = np.linalg.qr(rest.reshape(dl * 2, -1))
        tensors.append(q.reshape(dl, 2, q.shape[1]))
        rest = r
    tensors.append(rest.reshape(rest.shape[0], 2, 1))
    return MpsState(n, tensors, ortho_center=n - 1)


def to_dense(state: MpsState) -> np.ndarray:
    psi = state.tensors[0]
    for t in state.tensors[1:]:
        psi = np.tensordot(psi, t, axes=([psi.ndim - 1], [0]))
    return psi.reshape(-1)


def norm(state: MpsState) -> float:
    return math.sqrt(max(0.0, overlap(state, state).real))


def _shift_right(state: MpsState, j: int) -> None:
    a = state.tensors[j]
    dl, d, dr = a.shape
    q, r = np.linalg.qr(a.reshape(dl * d, dr))
    state.tensors[j] = q.reshape(dl, d, q.shape[1])
    state.tensors[j + 1] = np.tensordot(r, state.tensors[j + 1], axes=([1], [0]))


def _shift_left(state: MpsState, j: int) -> None:
    a = state.tensors[j]
    dl, d, dr = a.shape
    q, r = np.linalg.qr(a.reshape(dl, d * dr).T)
    state.tensors[j] = q.T.reshape(q.shape[1], d, dr)
    state.tensors[j - 1] = np.tensordot(state.tensors[j - 1], r.T, axes=([2], [0]))


def move_center(state: MpsState, site: int) -> MpsState:
    """Shift the orthogonality center to ``site`` with QR sweeps."""
    _check_site(state, site)
    c = state.ortho_center
    if c is None:
        # no known center: left-canonicalize the whole chain first
        for j in range(state.n_sites - 1):
            _shift_right(state, j)
        c = state.n_sites - 1
    while c < site:
        _shift_right(state, c)
        c += 1
    while c > site:
        _shift_left(state, c)
        c -= 1
    state.ortho_center = site
    return state


def apply_one_site(state: MpsState, site: int, u: np.ndarray) -> MpsState:
    _check_site(state, site)
    u = _check_unitary(u, 2)
    state.tensors[site] = np.einsum("st,ltr->lsr", u, state.tensors[site])
    return state


def _kept_count(s: np.ndarray, policy: TruncationPolicy) -> int:
    threshold = policy.cutoff * s[0]
    k = int(np.count_nonzero(s > threshold))
    if k == 0:
        return 0
    # keep values tied with the last retained one
    while k < s.size and s[k] > 0 and s[k] >= s[k - 1] * (1.0 - TIE_RTOL):
        k += 1
    if policy.max_bond is not None:
        k = min(k, policy.max_bond)
    return k


def apply_two_site(
    state: MpsState,
    bond: Tuple[int, int],
    u: np.ndarray,
    policy: TruncationPolicy,
) -> Tuple[MpsState, float]:
    """Contract a 4x4 gate into sites ``bond = (i, i+1)`` and truncate.

    Singular values at or below ``policy.cutoff`` times the largest one are
    dropped and the kept spectrum is renormalized. Returns the state and the
    discarded squared weight.
    """
    i, j = int(bond[0]), int(bond[1])
    if j != i + 1:
        raise InvalidArgument(f"two-site gates need adjacent sites, got {bond}")
    _check_site(state, i)
    _check_site(state, j)
    u = _check_unitary(u, 4)
    move_center(state, i)
    a, b = state.tensors[i], state.tensors[j]
    dl, dr = a.shape[0], b.shape[2]
    theta = np.tensordot(a, b, axes=([2], [0]))  # (dl, s, t, dr)
    theta = np.einsum("uvst,lstr->luvr", u.reshape(2, 2, 2, 2), theta)
    left, s, right = _svd(theta.reshape(dl * 2, 2 * dr))
    if s.size == 0 or not s[0] > 0:
        raise NumericalDegeneracy(f"no surviving singular values on bond {bond}")
    k = _kept_count(s, policy)
    if k == 0:
        raise NumericalDegeneracy(f"truncation removed every singular value on bond {bond}")
    total = float(np.sum(s ** 2))
    discarded = float(np.sum(s[k:] ** 2)) / total
    kept = s[:k] / np.linalg.norm(s[:k])
    state.tensors[i] = left[:, :k].reshape(dl, 2, k)
    state.tensors[j] = (kept[:, None] * right[:k, :]).reshape(k, 2, dr)
    state.ortho_center = j
    state.discarded_weight += discarded
    return state, discarded


def schmidt_spectrum(state: MpsState, cut: int) -> SchmidtSpectrum:
    """Schmidt values across the cut with ``cut`` sites on the left."""
    if not 1 <= cut <= state.n_sites - 1:
        raise InvalidArgument(f"cut must lie in 1..{state.n_sites - 1}, got {cut}")
    site = cut - 1
    move_center(state, site)
    a = state.tensors[site]
    s = sla.svdvals(a.reshape(a.shape[0] * 2, a.shape[2]))
    s = np.sort(np.abs(s))[::-1]
    s = s[s > 0]
    s = s / np.linalg.norm(s)
    return SchmidtSpectrum(bond=cut, values=s)


def renyi_entropy(spectrum: SchmidtSpectrum | Sequence[float], alpha: float) -> float:
    """Rényi entropy in nats; ``alpha == 1`` is the von Neumann entropy."""
    if not alpha > 0:
        raise InvalidArgument(f"alpha must be positive, got {alpha}")
    values = spectrum.values if isinstance(spectrum, SchmidtSpectrum) else np.asarray(spectrum, dtype=float)
    probs = np.asarray(values, dtype=float) ** 2
    probs = probs[probs > 0]
    if probs.size == 0:
        raise InvalidArgument("empty Schmidt spectrum")
    if alpha == 1:
        entropy = float(-np.sum(probs * np.log(probs)))
    else:
        # log domain: p**alpha underflows for large alpha
        top = float(probs.max())
        log_sum = alpha * math.log(top) + math.log(float(np.sum((probs / top) ** alpha)))
        entropy = log_sum / (1.0 - alpha)
    return max(0.0, entropy)


def one_site_rdm(state: MpsState, site: int) -> np.ndarray:
    move_center(state, site)
    a = state.tensors[site]
    return np.einsum("lsr,ltr->st", a, a.conj())


def _compress_measured(state: MpsState, site: int, outcome_index: int) -> None:
    # After projection the site is a product factor; fold the Schmidt bases of
    # the left/right environment into the neighbors so bond dims stay minimal.
    a = state.tensors[site]
    m = a[:, outcome_index, :]
    left, s, right = _svd(m)
    k = max(1, int(np.count_nonzero(s > MEASURE_COMPRESS_RTOL * s[0])))
    left, s, right = left[:, :k], s[:k], right[:k, :]
    core = np.diag(s).astype(np.complex128)
    if site > 0:
        state.tensors[site - 1] = np.tensordot(state.tensors[site - 1], left, axes=([2], [0]))
    else:
        core = left @ core
    if site < state.n_sites - 1:
        state.tensors[site + 1] = np.tensordot(right, state.tensors[site + 1], axes=([1], [0]))
    else:
        core = core @ right
    core = core / np.linalg.norm(core)
    new = np.zeros((core.shape[0], 2, core.shape[1]), dtype=np.complex128)
    new[:, outcome_index, :] = core
    state.tensors[site] = new


def measure_site(state: MpsState, site: int, outcome_source: np.random.Generator) -> Tuple[int, MpsState]:
    """Projective sigma_z measurement; outcome +1 is |0>, -1 is |1>."""
    _check_site(state, site)
    move_center(state, site)
    a = state.tensors[site]
    p_plus = float(np.sum(np.abs(a[:, 0, :]) ** 2))
    p_minus = float(np.sum(np.abs(a[:, 1, :]) ** 2))
    total = p_plus + p_minus
    if not total > 0:
        raise NumericalDegeneracy(f"state has zero norm at site {site}")
    p_plus /= total
    draw = outcome_source.random()
    outcome, idx, prob = (1, 0, p_plus) if draw < p_plus else (-1, 1, 1.0 - p_plus)
    if prob <= 1e-300:
        raise NumericalDegeneracy(f"sampled an outcome with vanishing probability at site {site}")
    _compress_measured(state, site, idx)
    return outcome, state


def reset_site(state: MpsState, site: int) -> MpsState:
    """Apply |0><0| + |0><1| to ``site`` and renormalize."""
    _check_site(state, site)
    move_center(state, site)
    a = np.einsum("st,ltr->lsr", RESET_OPERATOR, state.tensors[site])
    nrm = float(np.linalg.norm(a))
    if not nrm > 1e-300:
        raise NumericalDegeneracy(f"reset annihilated the state at site {site}")
    state.tensors[site] = a / nrm
    return state


def overlap(a: MpsState, b: MpsState) -> complex:
    if a.n_sites != b.n_sites:
        raise InvalidArgument(f"size mismatch: {a.n_sites} vs {b.n_sites} sites")
    env = np.ones((1, 1), dtype=np.complex128)
    for ta, tb in zip(a.tensors, b.tensors):
        env = np.einsum("ab,asc,bsd->cd", env, ta.conj(), tb, optimize=True)
    return complex(env[0, 0])


def fidelity(a: MpsState, b: MpsState) -> float:
    """|<a|b>|^2 by transfer-matrix contraction."""
    return float(min(1.0, abs(overlap(a, b)) ** 2))


def max_bond(state: MpsState) -> int:
    return max(state.bond_dims) if state.bond_dims else 1
