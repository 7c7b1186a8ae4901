"""The three-qubit phase-flip code.

``|0>_L = |+++>`` and ``|1>_L = |--->``. Stabilizers are ``X0 X1`` and
``X1 X2``. Block ``b`` of a multi-block register occupies qubits
``3b .. 3b + 2``.
"""

from __future__ import annotations

import dataclasses
import functools
import math
from typing import Final, NamedTuple, TypeVar, Union

import numpy as np

from qecstep.operators import OperatorMatrix, PauliString, StateMatrix

N_PHYSICAL: Final = 3
NORMALIZATION_TOL: Final = 1e-10
IMPOSSIBLE_OUTCOME_TOL: Final = 1e-14

_PLUS: Final = np.array([1, 1], dtype=complex) / math.sqrt(2)
_MINUS: Final = np.array([1, -1], dtype=complex) / math.sqrt(2)

State = Union[np.ndarray, StateMatrix]
_S = TypeVar("_S", np.ndarray, StateMatrix)


class ImpossibleOutcomeError(RuntimeError):
    """A syndrome projection annihilated the state."""


class Syndrome(NamedTuple):
    """Outcomes of the ``X0 X1`` and ``X1 X2`` measurements"""

    first: int
    second: int

    @classmethod
    def from_index(cls, index: int) -> Syndrome:
        return SYNDROMES[index]

    @property
    def ordinal(self) -> int:
        return SYNDROMES.index(self)

    @property
    def error_qubit(self) -> int | None:
        """The qubit whose phase flip this syndrome reports"""
        return _SYNDROME_TABLE[self]

    @property
    def triggered(self) -> bool:
        return self.error_qubit is not None


SYNDROMES: Final = (Syndrome(0, 0), Syndrome(1, 0), Syndrome(1, 1), Syndrome(0, 1))
_SYNDROME_TABLE: Final = {
    Syndrome(0, 0): None,
    Syndrome(1, 0): 0,
    Syndrome(1, 1): 1,
    Syndrome(0, 1): 2,
}


class LogicalPaulis(NamedTuple):
    x: PauliString
    z: PauliString
    y: PauliString


@dataclasses.dataclass(frozen=True)
class CodeSpec:
    n_physical: int
    basis: tuple[np.ndarray, np.ndarray]
    stabilizers: tuple[PauliString, PauliString]
    logical: LogicalPaulis


def _block_offset(n_qubits: int, block: int) -> int:
    if n_qubits < N_PHYSICAL or n_qubits % N_PHYSICAL:
        raise ValueError(f"A register of {n_qubits} qubits does not hold whole code blocks")
    if not 0 <= block < n_qubits // N_PHYSICAL:
        raise ValueError(f"Block {block} is out of range for {n_qubits} qubits")

    return N_PHYSICAL * block


def stabilizers(n_qubits: int = N_PHYSICAL, block: int = 0) -> tuple[PauliString, PauliString]:
    offset = _block_offset(n_qubits, block)
    return (
        PauliString(n_qubits, {offset: "X", offset + 1: "X"}),
        PauliString(n_qubits, {offset + 1: "X", offset + 2: "X"}),
    )


def logical_paulis(n_qubits: int = N_PHYSICAL, block: int = 0) -> LogicalPaulis:
    """Logical operators of one block.

    ``sigma_Lz = X`` on the first qubit of the block, ``sigma_Lx = Z Z Z`` and
    ``sigma_Ly = i sigma_Lx sigma_Lz``.
    """
    offset = _block_offset(n_qubits, block)
    x = PauliString(n_qubits, {offset: "Z", offset + 1: "Z", offset + 2: "Z"})
    z = PauliString(n_qubits, {offset: "X"})
    return LogicalPaulis(x=x, z=z, y=1j * (x * z))


@functools.cache
def code_spec() -> CodeSpec:
    return CodeSpec(
        n_physical=N_PHYSICAL,
        basis=(encode(1, 0), encode(0, 1)),
        stabilizers=stabilizers(),
        logical=logical_paulis(),
    )


def encode(alpha: complex, beta: complex) -> np.ndarray:
    """Return ``alpha |+++> + beta |--->``.

    Raises:
        ValueError: When ``|alpha|^2 + |beta|^2`` differs from one.
    """
    norm = abs(alpha) ** 2 + abs(beta) ** 2
    if abs(norm - 1) > NORMALIZATION_TOL:
        raise ValueError(f"Logical amplitudes have squared norm {norm:.6g}, expected 1")

    zero = np.kron(np.kron(_PLUS, _PLUS), _PLUS)
    one = np.kron(np.kron(_MINUS, _MINUS), _MINUS)
    return alpha * zero + beta * one


def encode_blocks(amplitudes: list[tuple[complex, complex]]) -> np.ndarray:
    """Product of encoded blocks, block 0 leftmost"""
    if not amplitudes:
        raise ValueError("At least one block is required")

    return functools.reduce(np.kron, (encode(a, b) for a, b in amplitudes))


@functools.lru_cache(maxsize=8)
def encoding_isometry(n_blocks: int = 1) -> np.ndarray:
    """The ``8^n x 2^n`` map from logical to physical amplitudes"""
    single = np.column_stack([encode(1, 0), encode(0, 1)])
    result = functools.reduce(np.kron, [single] * n_blocks)
    result.setflags(write=False)
    return result


@functools.lru_cache(maxsize=8)
def code_projector(n_blocks: int = 1) -> OperatorMatrix:
    """Projector onto the code space of ``n_blocks`` blocks"""
    isometry = encoding_isometry(n_blocks)
    return OperatorMatrix(
        isometry @ isometry.conj().T, [2] * (N_PHYSICAL * n_blocks), hermitian=True
    )


@functools.lru_cache(maxsize=64)
def syndrome_projector(
    syndrome: Syndrome, n_qubits: int = N_PHYSICAL, block: int = 0
) -> np.ndarray:
    """Projector onto the eigenspace reporting ``syndrome`` for one block"""
    side = 1 << n_qubits
    identity = np.eye(side, dtype=complex)
    projector = identity
    for bit, stabilizer in zip(syndrome, stabilizers(n_qubits, block)):
        sign = -1 if bit else 1
        projector = projector @ (identity + sign * stabilizer.dense().data) / 2

    projector.setflags(write=False)
    return projector


def syndrome_projectors(n_qubits: int = N_PHYSICAL, block: int = 0) -> tuple[np.ndarray, ...]:
    return tuple(syndrome_projector(s, n_qubits, block) for s in SYNDROMES)


@functools.lru_cache(maxsize=64)
def _phase_flip(n_qubits: int, qubit: int) -> np.ndarray:
    return PauliString.single(n_qubits, qubit, "Z").dense().data


def _register_size(state: State, extra_qubits: int) -> int:
    side = state.side if isinstance(state, StateMatrix) else np.asarray(state).shape[0]
    n = side.bit_length() - 1 - extra_qubits
    if 1 << (n + extra_qubits) != side:
        raise ValueError(f"State of side {side} is not a qubit register")
    return n


def _lift(op: np.ndarray, extra_qubits: int) -> np.ndarray:
    return op if not extra_qubits else np.kron(op, np.eye(1 << extra_qubits))


def syndrome_probabilities(
    state: State, *, block: int = 0, extra_qubits: int = 0
) -> np.ndarray:
    """Born probabilities of the four syndromes, in `SYNDROMES` order.

    ``extra_qubits`` trailing factors (such as bath modes) are left untouched.
    """
    n = _register_size(state, extra_qubits)
    projectors = [_lift(p, extra_qubits) for p in syndrome_projectors(n, block)]
    if isinstance(state, StateMatrix):
        probs = [np.real(np.trace(p @ state.data)) for p in projectors]
    else:
        vector = np.asarray(state)
        probs = [np.real(np.vdot(vector, p @ vector)) for p in projectors]

    return np.clip(np.array(probs), 0.0, 1.0)


def project_syndrome(
    state: _S, syndrome: Syndrome, *, block: int = 0, extra_qubits: int = 0
) -> _S:
    """Project onto a syndrome outcome and renormalize.

    Raises:
        ImpossibleOutcomeError: When the projection has negligible weight.
    """
    n = _register_size(state, extra_qubits)
    projector = _lift(syndrome_projector(syndrome, n, block), extra_qubits)
    if isinstance(state, StateMatrix):
        projected = projector @ state.data @ projector
        weight = float(np.real(np.trace(projected)))
        if weight < IMPOSSIBLE_OUTCOME_TOL:
            raise ImpossibleOutcomeError(f"Syndrome {tuple(syndrome)} has zero probability")
        data = projected / weight
        return StateMatrix(0.5 * (data + data.conj().T), state.dims)

    projected = projector @ np.asarray(state, dtype=complex)
    weight = float(np.linalg.norm(projected))
    if weight < IMPOSSIBLE_OUTCOME_TOL:
        raise ImpossibleOutcomeError(f"Syndrome {tuple(syndrome)} has zero probability")
    return projected / weight


def measure_syndrome(
    state: _S, rng: np.random.Generator, *, block: int = 0, extra_qubits: int = 0
) -> tuple[Syndrome, _S]:
    """Projectively measure both stabilizers of one block.

    Returns:
        The observed syndrome and the renormalized post-measurement state.

    Raises:
        ImpossibleOutcomeError: When the sampled outcome has negligible weight.
    """
    probs = syndrome_probabilities(state, block=block, extra_qubits=extra_qubits)
    probs[probs < IMPOSSIBLE_OUTCOME_TOL] = 0.0
    index = int(rng.choice(len(SYNDROMES), p=probs / probs.sum()))
    syndrome = SYNDROMES[index]
    return syndrome, project_syndrome(state, syndrome, block=block, extra_qubits=extra_qubits)


def recover(state: _S, syndrome: Syndrome, *, block: int = 0, extra_qubits: int = 0) -> _S:
    """Undo the phase flip named by the syndrome"""
    qubit = syndrome.error_qubit
    if qubit is None:
        return state

    n = _register_size(state, extra_qubits)
    flip = _lift(_phase_flip(n, _block_offset(n, block) + qubit), extra_qubits)
    if isinstance(state, StateMatrix):
        return StateMatrix(flip @ state.data @ flip, state.dims)

    return flip @ np.asarray(state, dtype=complex)
