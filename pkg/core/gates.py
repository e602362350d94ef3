"""Trapped-ion native gates and the brick-layer circuit structure.

Basis order for two-qubit matrices is |00>, |01>, |10>, |11> with the left
tensor factor on the lower site index.
"""
from __future__ import annotations
import math
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import InvalidArgument

UNITARY_TOL = 1e-12
PHI_CHOICES: Tuple[float, float, float] = (0.0, math.pi / 4, math.pi / 2)
MS_ANGLE = math.pi / 4
ROTATION_ANGLE = math.pi / 2

Parity = Literal["even", "odd"]


def _require_finite(**angles: float) -> None:
    for name, value in angles.items():
        if not math.isfinite(float(value)):
            raise InvalidArgument(f"{name} must be finite, got {value!r}")


def is_unitary(u: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        return False
    return bool(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) < tol)


def ms_gate(theta: float) -> np.ndarray:
    """Mølmer–Sørensen gate, a rotation about the XX axis by ``theta``."""
    _require_finite(theta=theta)
    c = math.cos(theta)
    s = -1j * math.sin(theta)
    return np.array(
        [
            [c, 0, 0, s],
            [0, c, s, 0],
            [0, s, c, 0],
            [s, 0, 0, c],
        ],
        dtype=np.complex128,
    )


def rotation_gate(theta: float, phi: float) -> np.ndarray:
    """Single-qubit rotation by ``theta`` about the axis cos(phi) X + sin(phi) Y."""
    _require_finite(theta=theta, phi=phi)
    c = math.cos(theta / 2)
    s = math.sin(theta / 2)
    return np.array(
        [
            [c, -1j * np.exp(-1j * phi) * s],
            [-1j * np.exp(1j * phi) * s, c],
        ],
        dtype=np.complex128,
    )


def brick_unitary(phi_i: float, phi_ip1: float) -> np.ndarray:
    """MS(pi/4) first, then R(pi/2, phi) on each of the two sites."""
    _require_finite(phi_i=phi_i, phi_ip1=phi_ip1)
    rotations = np.kron(rotation_gate(ROTATION_ANGLE, phi_i), rotation_gate(ROTATION_ANGLE, phi_ip1))
    return rotations @ ms_gate(MS_ANGLE)


class GateSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["MS", "Rotation", "Composite"]
    theta: float
    phi: float = 0.0
    # second rotation axis of a Composite brick (upper site)
    phi_upper: Optional[float] = None
    targets: Tuple[int, ...] = Field(min_length=1, max_length=2)

    @model_validator(mode="after")
    def _check(self) -> "GateSpec":
        angles = {"theta": self.theta, "phi": self.phi}
        if self.phi_upper is not None:
            angles["phi_upper"] = self.phi_upper
        for name, value in angles.items():
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite")
        if any(t < 0 for t in self.targets):
            raise ValueError("targets must be non-negative site indices")
        if self.kind == "Rotation":
            if len(self.targets) != 1:
                raise ValueError("rotation gates act on exactly one site")
        else:
            if len(self.targets) != 2 or self.targets[1] != self.targets[0] + 1:
                raise ValueError(f"{self.kind} gates act on two adjacent sites (i, i+1)")
        if self.kind == "Composite" and self.phi_upper is None:
            raise ValueError("composite bricks need phi_upper")
        return self

    def matrix(self) -> np.ndarray:
        if self.kind == "MS":
            return ms_gate(self.theta)
        if self.kind == "Rotation":
            return rotation_gate(self.theta, self.phi)
        return brick_unitary(self.phi, float(self.phi_upper))


class LayerPlan(BaseModel):
    model_config = ConfigDict(frozen=True)

    parity: Parity
    gates: List[GateSpec]
    phi_draws: List[float]

    @property
    def bonds(self) -> List[Tuple[int, int]]:
        return [(g.targets[0], g.targets[1]) for g in self.gates]


def layer_bonds(parity: Parity, n_sites: int) -> List[Tuple[int, int]]:
    start = 0 if parity == "odd" else 1
    return [(i, i + 1) for i in range(start, n_sites - 1, 2)]


def plan_layer(parity: Parity, n_sites: int, angle_source: np.random.Generator) -> LayerPlan:
    """Draw one brick layer.

    Odd layers cover bonds (0,1),(2,3),...; even layers cover (1,2),(3,4),...
    and leave both chain ends idle. Angles are drawn bond by bond from left
    to right, lower site first.
    """
    if parity not in ("even", "odd"):
        raise InvalidArgument(f"parity must be 'even' or 'odd', got {parity!r}")
    if n_sites < 4 or n_sites % 2:
        raise InvalidArgument(f"n_sites must be even and >= 4, got {n_sites}")
    gates: List[GateSpec] = []
    draws: List[float] = []
    for lo, hi in layer_bonds(parity, n_sites):
        idx = angle_source.integers(0, len(PHI_CHOICES), size=2)
        phi_lo, phi_hi = PHI_CHOICES[int(idx[0])], PHI_CHOICES[int(idx[1])]
        draws.extend([phi_lo, phi_hi])
        gates.append(GateSpec(kind="Composite", theta=MS_ANGLE, phi=phi_lo, phi_upper=phi_hi, targets=(lo, hi)))
    return LayerPlan(parity=parity, gates=gates, phi_draws=draws)
