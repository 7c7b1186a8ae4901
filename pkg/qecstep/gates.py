"""Rotation and CNOT gate Hamiltonians, physical and logical."""

from __future__ import annotations

import dataclasses
import functools
import math
from collections.abc import Iterable
from typing import Final, Literal

import numpy as np

from qecstep import phase_code
from qecstep.operators import (
    OperatorMatrix,
    PauliString,
    expm_hermitian,
    pauli_sum,
    spectral_norm,
)

GateKind = Literal["rotation", "cnot", "idle"]

TIME_TOL: Final = 1e-12


@dataclasses.dataclass(frozen=True)
class GateSpec:
    """A gate generated by a constant Hamiltonian.

    Args:
        kind: "rotation", "cnot", or "idle" for an empty Hamiltonian.
        omega0: Energy scale.
        theta: Polar angle of the rotation axis.
        phi: Azimuthal angle of the rotation axis.
        angle: Rotation angle; the gate time is ``angle / omega0``.
        logical: Act on code blocks instead of bare qubits.
        duration: Gate time of an idle gate.
        blocks: Block count of an idle gate.
    """

    kind: GateKind = "rotation"
    omega0: float = 1.0
    theta: float = 0.0
    phi: float = 0.0
    angle: float = math.pi / 2
    logical: bool = False
    duration: float | None = None
    blocks: int = 1

    def __post_init__(self):
        if self.kind not in ("rotation", "cnot", "idle"):
            raise ValueError(f'Unknown gate kind "{self.kind}"')
        if self.omega0 <= 0:
            raise ValueError(f"omega0 must be positive, got {self.omega0}")
        if self.kind == "idle" and (self.duration is None or self.duration <= 0):
            raise ValueError("An idle gate needs a positive duration")
        if self.kind == "rotation" and self.angle <= 0:
            raise ValueError(f"Rotation angle must be positive, got {self.angle}")
        if self.kind == "cnot" and self.blocks not in (1, 2):
            raise ValueError("A CNOT always spans two blocks")
        if self.blocks < 1:
            raise ValueError("A gate needs at least one block")

    @property
    def t_g(self) -> float:
        if self.kind == "rotation":
            return self.angle / self.omega0
        if self.kind == "cnot":
            return math.pi / self.omega0
        return float(self.duration)  # type: ignore[arg-type]

    @property
    def n_blocks(self) -> int:
        if self.kind == "cnot":
            return 2
        if self.kind == "rotation":
            return 1
        return self.blocks

    @property
    def n_qubits(self) -> int:
        return self.n_blocks * (phase_code.N_PHYSICAL if self.logical else 1)


def _paulis(n_qubits: int, block: int, logical: bool) -> phase_code.LogicalPaulis:
    if logical:
        return phase_code.logical_paulis(n_qubits, block)

    x = PauliString.single(n_qubits, block, "X")
    z = PauliString.single(n_qubits, block, "Z")
    return phase_code.LogicalPaulis(x=x, z=z, y=1j * (x * z))


def rot_hamiltonian(
    theta: float, phi: float, omega0: float = 1.0, logical: bool = False
) -> OperatorMatrix:
    """``omega0 (cos(theta) sz + sin(theta) cos(phi) sx + sin(theta) sin(phi) sy)``

    ``sy`` is taken as ``+i sx sz`` so that evolving for ``angle / omega0``
    reproduces the rotation by ``angle`` about the Bloch axis
    ``(sin theta cos phi, sin theta sin phi, cos theta)``.
    """
    n_qubits = phase_code.N_PHYSICAL if logical else 1
    sigma = _paulis(n_qubits, 0, logical)
    h = pauli_sum(
        [
            (omega0 * math.cos(theta), sigma.z),
            (omega0 * math.sin(theta) * math.cos(phi), sigma.x),
            (omega0 * math.sin(theta) * math.sin(phi), sigma.y),
        ]
    )
    return OperatorMatrix(h, hermitian=True)


def cnot_hamiltonian(omega0: float = 1.0, logical: bool = False) -> OperatorMatrix:
    """``omega0 (1 - sz_control) / 2 (1 - sx_target) / 2`` with block 0 as control"""
    n_qubits = 2 * (phase_code.N_PHYSICAL if logical else 1)
    control = _paulis(n_qubits, 0, logical).z
    target = _paulis(n_qubits, 1, logical).x
    quarter = omega0 / 4
    h = pauli_sum(
        [
            (quarter, PauliString.identity(n_qubits)),
            (-quarter, control),
            (-quarter, target),
            (quarter, control * target),
        ]
    )
    return OperatorMatrix(h, hermitian=True)


@functools.lru_cache(maxsize=64)
def hamiltonian(g: GateSpec) -> OperatorMatrix:
    if g.kind == "rotation":
        return rot_hamiltonian(g.theta, g.phi, g.omega0, g.logical)
    if g.kind == "cnot":
        return cnot_hamiltonian(g.omega0, g.logical)

    return OperatorMatrix.zeros([2] * g.n_qubits)


def gate_unitary(g: GateSpec, t: float) -> OperatorMatrix:
    """``exp(-i H_g t)`` for ``0 <= t <= t_g``.

    Raises:
        ValueError: When ``t`` lies outside ``[0, t_g]``.
    """
    if t < 0 or t > g.t_g * (1 + TIME_TOL):
        raise ValueError(f"Time {t} lies outside the gate interval [0, {g.t_g}]")

    return expm_hermitian(hamiltonian(g), t)


def ideal_unitary(g: GateSpec) -> OperatorMatrix:
    return gate_unitary(g, g.t_g)


def rotation_unitary(theta: float, phi: float, angle: float) -> OperatorMatrix:
    """``cos(angle) I - i sin(angle) n.sigma`` on one bare qubit"""
    nx = math.sin(theta) * math.cos(phi)
    ny = math.sin(theta) * math.sin(phi)
    nz = math.cos(theta)
    n_sigma = np.array([[nz, nx - 1j * ny], [nx + 1j * ny, -nz]], dtype=complex)
    return OperatorMatrix(
        math.cos(angle) * np.eye(2) - 1j * math.sin(angle) * n_sigma, unitary=True
    )


def cnot_unitary() -> OperatorMatrix:
    """``(1 + Z0) / 2 + (1 - Z0) / 2 X1`` on two bare qubits"""
    z0 = PauliString.from_label("ZI").dense().data
    x1 = PauliString.from_label("IX").dense().data
    identity = np.eye(4)
    return OperatorMatrix((identity + z0) / 2 + (identity - z0) / 2 @ x1, unitary=True)


def subspace_leakage(
    g: GateSpec, times: Iterable[float], h: OperatorMatrix | None = None
) -> float:
    """Largest weight any code state leaves outside the code space at the sampled times.

    Args:
        g: A logical gate.
        times: Times in ``[0, t_g]``.
        h: Replace the gate Hamiltonian, for instance with a corrupted one.

    Raises:
        ValueError: When the gate is not logical.
    """
    if not g.logical:
        raise ValueError("Leakage is only defined for logical gates")

    h = h if h is not None else hamiltonian(g)
    isometry = phase_code.encoding_isometry(g.n_blocks)
    outside = np.eye(isometry.shape[0]) - phase_code.code_projector(g.n_blocks).data
    leakage = 0.0
    for t in times:
        if t < 0 or t > g.t_g * (1 + TIME_TOL):
            raise ValueError(f"Time {t} lies outside the gate interval [0, {g.t_g}]")
        u = expm_hermitian(h, t).data
        leakage = max(leakage, spectral_norm(outside @ u @ isometry))

    return leakage
