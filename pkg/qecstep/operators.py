"""Dense operator algebra shared by every other module.

Qubit 0 is always the leftmost Kronecker factor.
"""

from __future__ import annotations

import functools
import math
from collections.abc import Iterable, Mapping, Sequence
from typing import Final, Union

import numpy as np
import numpy.typing as npt
import scipy.linalg

HERMITIAN_TOL: Final = 1e-12
UNITARY_TOL: Final = 1e-12
TRACE_TOL: Final = 1e-10
EIGENVALUE_FLOOR: Final = -1e-10

AXES: Final = ("X", "Y", "Z")

_PAULI_MATRICES: Final = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# (left, right) -> (power of i, resulting axis) for single-qubit products
_AXIS_PRODUCTS: Final = {
    ("X", "Y"): (1, "Z"),
    ("Y", "Z"): (1, "X"),
    ("Z", "X"): (1, "Y"),
    ("Y", "X"): (3, "Z"),
    ("Z", "Y"): (3, "X"),
    ("X", "Z"): (3, "Y"),
}

_PHASE_POWERS: Final = {1: 0, 1j: 1, -1: 2, -1j: 3}
_POWER_PHASES: Final = (1 + 0j, 1j, -1 + 0j, -1j)

ArrayLike = Union[npt.ArrayLike, "OperatorMatrix"]


def _phase_power(phase: complex) -> int:
    for value, power in _PHASE_POWERS.items():
        if phase == value:
            return power

    raise ValueError(f"Pauli phase must be one of +1, -1, +i, -i, not {phase}")


class PauliString:
    """A tensor product of single-qubit Pauli factors with an exact phase.

    The phase is stored as a power of i so that products never drift off
    the set {+1, -1, +i, -i}.

    Args:
        n_qubits: Number of qubits the string acts on.
        factors: Mapping of qubit index to axis ("X", "Y" or "Z"). Missing
            indices and "I" entries are the identity.
        phase: One of 1, -1, 1j, -1j.
    """

    def __init__(
        self,
        n_qubits: int,
        factors: Mapping[int, str] | None = None,
        phase: complex = 1,
    ):
        if not isinstance(n_qubits, int) or n_qubits < 1:
            raise ValueError(f"n_qubits must be a positive integer, not {n_qubits!r}")

        normalized = {}
        for qubit, axis in (factors or {}).items():
            axis = axis.upper()
            if not 0 <= qubit < n_qubits:
                raise ValueError(f"Qubit index {qubit} is out of range for {n_qubits} qubits")
            if axis == "I":
                continue
            if axis not in AXES:
                raise ValueError(f'Unknown Pauli axis "{axis}"')
            normalized[qubit] = axis

        self._n_qubits = n_qubits
        self._factors = tuple(sorted(normalized.items()))
        self._power = _phase_power(phase)

    @classmethod
    def from_label(cls, label: str, phase: complex = 1) -> PauliString:
        """Build from a label such as "ZXI", one character per qubit."""
        if not label:
            raise ValueError("Pauli label must not be empty")

        return cls(len(label), dict(enumerate(label)), phase)

    @classmethod
    def single(cls, n_qubits: int, qubit: int, axis: str) -> PauliString:
        return cls(n_qubits, {qubit: axis})

    @classmethod
    def identity(cls, n_qubits: int) -> PauliString:
        return cls(n_qubits)

    @property
    def n_qubits(self) -> int:
        return self._n_qubits

    @property
    def factors(self) -> dict[int, str]:
        return dict(self._factors)

    @property
    def phase(self) -> complex:
        return _POWER_PHASES[self._power]

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(qubit for qubit, _ in self._factors)

    @property
    def weight(self) -> int:
        return len(self._factors)

    @property
    def label(self) -> str:
        factors = dict(self._factors)
        return "".join(factors.get(q, "I") for q in range(self._n_qubits))

    def is_hermitian(self) -> bool:
        return self._power in (0, 2)

    def with_phase(self, phase: complex) -> PauliString:
        return PauliString(self._n_qubits, dict(self._factors), phase)

    def embed(self, n_qubits: int, offset: int = 0) -> PauliString:
        """Place this string on a larger register starting at ``offset``."""
        if offset < 0 or offset + self._n_qubits > n_qubits:
            raise ValueError(
                f"Cannot embed {self._n_qubits} qubits at offset {offset} into {n_qubits}"
            )

        return PauliString(
            n_qubits, {q + offset: a for q, a in self._factors}, self.phase
        )

    def commutes(self, other: PauliString) -> bool:
        """True when the two strings commute, false when they anticommute."""
        self._check_compatible(other)
        mine = dict(self._factors)
        clashes = sum(
            1 for qubit, axis in other._factors if qubit in mine and mine[qubit] != axis
        )
        return clashes % 2 == 0

    def _check_compatible(self, other: PauliString) -> None:
        if self._n_qubits != other._n_qubits:
            raise ValueError(
                f"Pauli strings act on {self._n_qubits} and {other._n_qubits} qubits"
            )

    def __mul__(self, other: PauliString | complex) -> PauliString:
        if isinstance(other, PauliString):
            self._check_compatible(other)
            power = self._power + other._power
            result = dict(self._factors)
            for qubit, axis in other._factors:
                if qubit not in result:
                    result[qubit] = axis
                elif result[qubit] == axis:
                    del result[qubit]
                else:
                    extra, result[qubit] = _AXIS_PRODUCTS[(result[qubit], axis)]
                    power += extra

            return PauliString(self._n_qubits, result, _POWER_PHASES[power % 4])

        if isinstance(other, (int, float, complex)):
            power = (self._power + _phase_power(complex(other))) % 4
            return PauliString(self._n_qubits, dict(self._factors), _POWER_PHASES[power])

        return NotImplemented

    def __rmul__(self, other: complex) -> PauliString:
        if isinstance(other, (int, float, complex)):
            return self * other

        return NotImplemented

    def __neg__(self) -> PauliString:
        return self * -1

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PauliString):
            return NotImplemented

        return (
            self._n_qubits == other._n_qubits
            and self._factors == other._factors
            and self._power == other._power
        )

    def __hash__(self) -> int:
        return hash((self._n_qubits, self._factors, self._power))

    def __repr__(self) -> str:
        sign = {0: "+", 1: "+i", 2: "-", 3: "-i"}[self._power]
        return f"PauliString({sign}{self.label})"

    def dense(self) -> OperatorMatrix:
        return _dense_pauli(self)


@functools.lru_cache(maxsize=4096)
def _dense_pauli(p: PauliString) -> OperatorMatrix:
    factors = p.factors
    matrix = functools.reduce(
        np.kron, (_PAULI_MATRICES[factors.get(q, "I")] for q in range(p.n_qubits))
    )
    return OperatorMatrix(
        p.phase * matrix,
        [2] * p.n_qubits,
        hermitian=p.is_hermitian(),
        unitary=True,
    )


def _default_dims(side: int) -> list[int]:
    n = side.bit_length() - 1
    if side >= 2 and 1 << n == side:
        return [2] * n

    return [side]


class OperatorMatrix:
    """A dense complex square matrix with declared tensor-factor dimensions.

    Instances are read-only. The ``hermitian`` and ``unitary`` flags are
    verified at construction when requested.

    Args:
        data: The square matrix.
        dims: Tensor-factor dimensions whose product is the side length.
            Defaults to qubit factors when the side is a power of two.
        hermitian: Verify the matrix is Hermitian.
        unitary: Verify the matrix is unitary.

    Raises:
        ValueError: When the matrix is not square, the dimensions do not
            match, or a requested flag does not hold.
    """

    def __init__(
        self,
        data: ArrayLike,
        dims: Sequence[int] | None = None,
        *,
        hermitian: bool = False,
        unitary: bool = False,
    ):
        if isinstance(data, OperatorMatrix):
            dims = data.dims if dims is None else dims
            data = data.data

        matrix = np.array(data, dtype=complex)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"Operator must be a square matrix, got shape {matrix.shape}")

        dims = list(dims) if dims is not None else _default_dims(matrix.shape[0])
        if any(d < 2 for d in dims):
            raise ValueError(f"Every tensor factor must have dimension >= 2, got {dims}")
        if math.prod(dims) != matrix.shape[0]:
            raise ValueError(f"Dimensions {dims} do not match matrix side {matrix.shape[0]}")

        matrix.setflags(write=False)
        self._data = matrix
        self._dims = tuple(dims)

        if hermitian and not self.is_hermitian():
            raise ValueError("Operator flagged hermitian is not Hermitian")
        if unitary and not self.is_unitary():
            raise ValueError("Operator flagged unitary is not unitary")

        self._hermitian = hermitian
        self._unitary = unitary

    @classmethod
    def identity(cls, dims: Sequence[int]) -> OperatorMatrix:
        return cls(np.eye(math.prod(dims)), dims, hermitian=True, unitary=True)

    @classmethod
    def zeros(cls, dims: Sequence[int]) -> OperatorMatrix:
        side = math.prod(dims)
        return cls(np.zeros((side, side)), dims, hermitian=True)

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def dims(self) -> tuple[int, ...]:
        return self._dims

    @property
    def side(self) -> int:
        return self._data.shape[0]

    @property
    def hermitian(self) -> bool:
        return self._hermitian

    @property
    def unitary(self) -> bool:
        return self._unitary

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return bool(np.max(np.abs(self._data - self._data.conj().T), initial=0.0) < tol)

    def is_unitary(self, tol: float = UNITARY_TOL) -> bool:
        deviation = self._data.conj().T @ self._data - np.eye(self.side)
        return bool(np.max(np.abs(deviation), initial=0.0) < tol)

    def dagger(self) -> OperatorMatrix:
        return OperatorMatrix(self._data.conj().T, self._dims)

    def trace(self) -> complex:
        return complex(np.trace(self._data))

    @functools.cached_property
    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        """Cached eigendecomposition ``(eigenvalues, eigenvectors)`` of a Hermitian operator."""
        if not self._hermitian and not self.is_hermitian():
            raise ValueError("Eigendecomposition requires a Hermitian operator")

        return scipy.linalg.eigh(self._data)

    def _coerce(self, other: ArrayLike) -> np.ndarray:
        if isinstance(other, OperatorMatrix):
            if other.dims != self._dims:
                raise ValueError(f"Dimension mismatch: {self._dims} and {other.dims}")
            return other.data

        return np.asarray(other, dtype=complex)

    def __matmul__(self, other: ArrayLike) -> OperatorMatrix | np.ndarray:
        if isinstance(other, OperatorMatrix):
            return OperatorMatrix(self._data @ self._coerce(other), self._dims)

        vector = np.asarray(other, dtype=complex)
        if vector.shape[0] != self.side:
            raise ValueError(f"Cannot apply a {self.side}-dim operator to shape {vector.shape}")
        return self._data @ vector

    def __add__(self, other: ArrayLike) -> OperatorMatrix:
        return OperatorMatrix(self._data + self._coerce(other), self._dims)

    def __sub__(self, other: ArrayLike) -> OperatorMatrix:
        return OperatorMatrix(self._data - self._coerce(other), self._dims)

    def __mul__(self, scalar: complex) -> OperatorMatrix:
        if not isinstance(scalar, (int, float, complex, np.number)):
            return NotImplemented

        return OperatorMatrix(scalar * self._data, self._dims)

    __rmul__ = __mul__

    def __neg__(self) -> OperatorMatrix:
        return OperatorMatrix(-self._data, self._dims)

    def __array__(self, dtype=None, copy=None) -> np.ndarray:
        return self._data if dtype is None else self._data.astype(dtype)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(dims={list(self._dims)})"


class StateMatrix(OperatorMatrix):
    """A density matrix: Hermitian, unit trace and positive semidefinite.

    Raises:
        ValueError: When any of the density-matrix conditions fail.
    """

    def __init__(self, data: ArrayLike, dims: Sequence[int] | None = None):
        super().__init__(data, dims)

        if not self.is_hermitian():
            raise ValueError("State matrix is not Hermitian")

        trace = self.trace()
        if abs(trace - 1) > TRACE_TOL:
            raise ValueError(f"State matrix trace is {trace.real:.3g}, expected 1")

        floor = float(scipy.linalg.eigvalsh(self.data)[0])
        if floor < EIGENVALUE_FLOOR:
            raise ValueError(f"State matrix has negative eigenvalue {floor:.3g}")

        self._hermitian = True

    @classmethod
    def from_vector(cls, psi: npt.ArrayLike, dims: Sequence[int] | None = None) -> StateMatrix:
        vector = np.asarray(psi, dtype=complex).ravel()
        norm = np.linalg.norm(vector)
        if abs(norm - 1) > TRACE_TOL:
            raise ValueError(f"State vector has norm {norm:.6g}, expected 1")

        return cls(np.outer(vector, vector.conj()), dims)

    @classmethod
    def maximally_mixed(cls, dims: Sequence[int]) -> StateMatrix:
        side = math.prod(dims)
        return cls(np.eye(side) / side, dims)

    def purity(self) -> float:
        return float(np.real(np.trace(self.data @ self.data)))


def kron(factors: Sequence[OperatorMatrix]) -> OperatorMatrix:
    """Kronecker product of the factors in the given order.

    Raises:
        ValueError: When no factors are given.
    """
    if not factors:
        raise ValueError("kron requires at least one factor")

    data = functools.reduce(np.kron, (f.data for f in factors))
    dims = [d for f in factors for d in f.dims]
    if all(isinstance(f, StateMatrix) for f in factors):
        return StateMatrix(data, dims)

    return OperatorMatrix(
        data,
        dims,
        hermitian=all(f.hermitian for f in factors),
        unitary=all(f.unitary for f in factors),
    )


def dense(p: PauliString) -> OperatorMatrix:
    return p.dense()


def extend(op: OperatorMatrix, extra_dims: Sequence[int]) -> OperatorMatrix:
    """``op`` followed by the identity on ``extra_dims``."""
    if not extra_dims:
        return op

    return kron([op, OperatorMatrix.identity(extra_dims)])


def pauli_sum(terms: Iterable[tuple[complex, PauliString]]) -> OperatorMatrix:
    """Dense sum of weighted Pauli strings."""
    terms = list(terms)
    if not terms:
        raise ValueError("pauli_sum requires at least one term")

    n_qubits = terms[0][1].n_qubits
    data = sum(coefficient * p.dense().data for coefficient, p in terms)
    return OperatorMatrix(data, [2] * n_qubits)


def pauli_exp(p: PauliString, angle: float) -> OperatorMatrix:
    """Return ``exp(-i angle P)`` through the closed form ``cos I - i sin P``.

    Raises:
        ValueError: When the phase of ``p`` is +i or -i.
    """
    if not p.is_hermitian():
        raise ValueError(f"pauli_exp requires a Hermitian Pauli string, got phase {p.phase}")

    side = 1 << p.n_qubits
    data = math.cos(angle) * np.eye(side) - 1j * math.sin(angle) * p.dense().data
    return OperatorMatrix(data, [2] * p.n_qubits, unitary=True)


def expm_hermitian(h: OperatorMatrix, t: float) -> OperatorMatrix:
    """Return ``exp(-i H t)`` from the cached eigendecomposition of ``H``.

    Raises:
        ValueError: When ``H`` is not Hermitian.
    """
    if not h.hermitian and not h.is_hermitian():
        raise ValueError("expm_hermitian requires a Hermitian operator")

    eigenvalues, vectors = h.eigh
    data = (vectors * np.exp(-1j * eigenvalues * t)) @ vectors.conj().T
    return OperatorMatrix(data, h.dims)


def commutator(a: OperatorMatrix, b: OperatorMatrix) -> OperatorMatrix:
    return OperatorMatrix(a.data @ b.data - b.data @ a.data, a.dims)


def partial_trace(rho: OperatorMatrix, keep: Iterable[int]) -> OperatorMatrix:
    """Trace out every tensor factor not listed in ``keep``.

    Returns a `StateMatrix` when given one.

    Raises:
        ValueError: When ``keep`` is empty or names an invalid factor.
    """
    dims = rho.dims
    n = len(dims)
    keep = sorted(set(keep))
    if not keep:
        raise ValueError("partial_trace requires at least one factor to keep")
    if keep[0] < 0 or keep[-1] >= n:
        raise ValueError(f"Factor indices {keep} are invalid for dims {list(dims)}")

    tensor = rho.data.reshape(dims + dims)
    traced = [axis for axis in range(n) if axis not in keep]
    for removed, axis in enumerate(reversed(traced)):
        tensor = np.trace(tensor, axis1=axis, axis2=axis + n - removed)

    kept_dims = [dims[axis] for axis in keep]
    side = math.prod(kept_dims)
    cls = StateMatrix if isinstance(rho, StateMatrix) else OperatorMatrix
    return cls(tensor.reshape(side, side), kept_dims)


def _as_matrix(value: ArrayLike) -> np.ndarray:
    return value.data if isinstance(value, OperatorMatrix) else np.asarray(value, dtype=complex)


def state_fidelity(rho: ArrayLike, psi: npt.ArrayLike) -> float:
    """Overlap ``<psi|rho|psi>`` clipped to [0, 1].

    Raises:
        ValueError: When the dimensions differ.
    """
    matrix = _as_matrix(rho)
    vector = np.asarray(psi, dtype=complex).ravel()
    if matrix.shape[0] != vector.shape[0]:
        raise ValueError(
            f"State of side {matrix.shape[0]} and vector of length {vector.shape[0]} differ"
        )

    return float(np.clip(np.real(vector.conj() @ matrix @ vector), 0.0, 1.0))


def gate_fidelity(u: ArrayLike, v: ArrayLike) -> float:
    """Global-phase invariant overlap ``|Tr(U^dagger V)| / d``.

    Raises:
        ValueError: When the dimensions differ.
    """
    a, b = _as_matrix(u), _as_matrix(v)
    if a.shape != b.shape:
        raise ValueError(f"Cannot compare gates of shapes {a.shape} and {b.shape}")

    return float(min(abs(np.trace(a.conj().T @ b)) / a.shape[0], 1.0))


def spectral_norm(a: ArrayLike) -> float:
    return float(scipy.linalg.svdvals(_as_matrix(a))[0])


def trace_distance(a: ArrayLike, b: ArrayLike) -> float:
    """Half the trace norm of ``a - b``."""
    return float(0.5 * np.sum(scipy.linalg.svdvals(_as_matrix(a) - _as_matrix(b))))


def phase_aligned_distance(u: ArrayLike, v: ArrayLike) -> float:
    """Spectral norm of ``U - e^{i alpha} V`` for the best global phase alpha."""
    a, b = _as_matrix(u), _as_matrix(v)
    overlap = np.trace(b.conj().T @ a)
    alpha = np.angle(overlap) if abs(overlap) > 0 else 0.0
    return spectral_norm(a - np.exp(1j * alpha) * b)
