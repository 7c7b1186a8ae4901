"""Environment models: an exact two-level bath and a stochastic dephasing channel."""

from __future__ import annotations

import dataclasses
import functools
import logging
import math
from collections.abc import Sequence
from typing import Final

import numpy as np

from qecstep import utils
from qecstep.operators import (
    AXES,
    OperatorMatrix,
    PauliString,
    StateMatrix,
    expm_hermitian,
    extend,
    kron,
    partial_trace,
)

logger = logging.getLogger(__name__)

TRACE_CONDITION_TOL: Final = 1e-12

_VACUUM: Final = np.array([[1, 0], [0, 0]], dtype=complex)
_NUMBER: Final = np.array([[0, 0], [0, 1]], dtype=complex)
# Lowering plus raising on a two-level mode
_QUADRATURE: Final = np.array([[0, 1], [1, 0]], dtype=complex)


def default_frequencies(n_sys: int) -> tuple[float, ...]:
    return tuple(1.0 + 0.1 * k for k in range(n_sys))


class BathModel:
    """System qubits coupled linearly to one two-level bath mode each.

    The joint register lists the ``n_sys`` system qubits first, followed by
    the bath modes. Mode ``k`` couples to the system through ``couplings[k]``.

    Args:
        n_sys: Number of system qubits.
        frequencies: Mode frequency per system qubit.
        lam: Dimensionless coupling strength.
        couplings: System coupling operators. Defaults to ``Z`` on qubit ``k``.
        env_init: Initial bath state. Defaults to the vacuum.

    Raises:
        ValueError: On invalid sizes, negative frequencies or coupling, or
            an initial bath state that gives a non-zero first-order trace.
    """

    def __init__(
        self,
        n_sys: int,
        frequencies: Sequence[float] | None = None,
        lam: float = 0.0,
        *,
        couplings: Sequence[PauliString] | None = None,
        env_init: StateMatrix | None = None,
    ):
        if n_sys < 1:
            raise ValueError("A bath needs at least one system qubit")

        frequencies = tuple(
            float(w) for w in (frequencies if frequencies else default_frequencies(n_sys))
        )
        if len(frequencies) != n_sys:
            raise ValueError(f"Expected {n_sys} frequencies, got {len(frequencies)}")
        if any(w < 0 for w in frequencies):
            raise ValueError(f"Bath frequencies must be non-negative, got {frequencies}")
        if len(set(frequencies)) != len(frequencies):
            logger.warning("Degenerate bath frequencies %s", frequencies)

        if lam < 0:
            raise ValueError(f"Coupling strength must be >= 0, got {lam}")

        couplings = tuple(
            couplings
            if couplings is not None
            else (PauliString.single(n_sys, k, "Z") for k in range(n_sys))
        )
        if len(couplings) != n_sys:
            raise ValueError(f"Expected {n_sys} coupling operators, got {len(couplings)}")
        for coupling in couplings:
            if coupling.n_qubits != n_sys or not coupling.is_hermitian():
                raise ValueError(f"Invalid coupling operator {coupling!r}")

        if env_init is None:
            env_init = StateMatrix(kron([OperatorMatrix(_VACUUM)] * n_sys), [2] * n_sys)
        elif env_init.dims != (2,) * n_sys:
            raise ValueError(f"Bath state must have dims {[2] * n_sys}, got {list(env_init.dims)}")

        self._n_sys = n_sys
        self._frequencies = frequencies
        self._lam = float(lam)
        self._couplings = couplings
        self._env_init = env_init

        residual = self.first_order_trace()
        if residual > TRACE_CONDITION_TOL:
            raise ValueError(
                f"Bath state violates the first-order trace condition (residual {residual:.3g})"
            )

    @property
    def n_sys(self) -> int:
        return self._n_sys

    @property
    def frequencies(self) -> tuple[float, ...]:
        return self._frequencies

    @property
    def lam(self) -> float:
        return self._lam

    @property
    def couplings(self) -> tuple[PauliString, ...]:
        return self._couplings

    @property
    def env_init(self) -> StateMatrix:
        return self._env_init

    @property
    def sys_dims(self) -> tuple[int, ...]:
        return (2,) * self._n_sys

    @property
    def env_dims(self) -> tuple[int, ...]:
        return (2,) * self._n_sys

    @property
    def dims(self) -> tuple[int, ...]:
        return self.sys_dims + self.env_dims

    @property
    def system_factors(self) -> tuple[int, ...]:
        return tuple(range(self._n_sys))

    def _mode(self, k: int, matrix: np.ndarray) -> np.ndarray:
        factors = [np.eye(2)] * self._n_sys
        factors[k] = matrix
        return functools.reduce(np.kron, factors)

    @functools.cached_property
    def h_env(self) -> OperatorMatrix:
        """``I_S ⊗ sum_k w_k n_k``"""
        data = sum(w * self._mode(k, _NUMBER) for k, w in enumerate(self._frequencies))
        env = OperatorMatrix(data, self.env_dims, hermitian=True)
        return kron([OperatorMatrix.identity(self.sys_dims), env])

    @functools.cached_property
    def h_int(self) -> OperatorMatrix:
        """``sum_k S_k ⊗ (a_k + a_k^dagger)``, without the coupling strength"""
        data = sum(
            np.kron(s.dense().data, self._mode(k, _QUADRATURE))
            for k, s in enumerate(self._couplings)
        )
        return OperatorMatrix(data, self.dims, hermitian=True)

    def with_coupling(self, lam: float) -> BathModel:
        return BathModel(
            self._n_sys,
            self._frequencies,
            lam,
            couplings=self._couplings,
            env_init=self._env_init,
        )

    def embed_system(self, h_sys: OperatorMatrix | None) -> OperatorMatrix:
        """Extend a system operator by the identity on the bath.

        Raises:
            ValueError: When ``h_sys`` does not act on the system factors only.
        """
        if h_sys is None:
            return OperatorMatrix.zeros(self.dims)
        if h_sys.dims != self.sys_dims:
            raise ValueError(
                f"System Hamiltonian must act on the system factors {list(self.sys_dims)} only,"
                f" got dims {list(h_sys.dims)}"
            )

        return extend(h_sys, self.env_dims)

    def hamiltonian(self, h_sys: OperatorMatrix | None = None) -> OperatorMatrix:
        """The joint ``H_S ⊗ I + H_E + lam H_int``"""
        data = self.embed_system(h_sys).data + self.h_env.data + self._lam * self.h_int.data
        return OperatorMatrix(data, self.dims, hermitian=True)

    def joint_state(self, rho_sys: StateMatrix) -> StateMatrix:
        if rho_sys.dims != self.sys_dims:
            raise ValueError(f"System state must have dims {list(self.sys_dims)}")

        return StateMatrix(kron([rho_sys, self._env_init]), self.dims)

    def first_order_trace(self) -> float:
        """Largest entry of ``Tr_E{H_int (I_S ⊗ env_init)}``"""
        product = self.h_int.data @ extend_left(self._env_init, self.sys_dims).data
        reduced = partial_trace(OperatorMatrix(product, self.dims), self.system_factors)
        return float(np.max(np.abs(reduced.data)))

    def __repr__(self) -> str:
        return f"BathModel(n_sys={self._n_sys}, lam={self._lam}, frequencies={self._frequencies})"


def extend_left(op: OperatorMatrix, dims: Sequence[int]) -> OperatorMatrix:
    """The identity on ``dims`` followed by ``op``."""
    return kron([OperatorMatrix.identity(dims), OperatorMatrix(op.data, op.dims)])


def build_dephasing_bath(
    n_sys: int, frequencies: Sequence[float] | None = None, lam: float = 0.0
) -> BathModel:
    """Couple each system qubit to its own vacuum mode through ``Z``.

    Args:
        n_sys: Number of system qubits.
        frequencies: Mode frequencies, ``1.0 + 0.1 k`` by default.
        lam: Coupling strength.

    Raises:
        ValueError: When ``n_sys < 1``.
    """
    return BathModel(n_sys, frequencies, lam)


def interaction_picture_h(bath: BathModel, t: float) -> OperatorMatrix:
    """``U_E^dagger(t) H_int U_E(t)``"""
    if not math.isfinite(t):
        raise ValueError(f"Time must be finite, got {t}")

    u_env = expm_hermitian(bath.h_env, t).data
    data = u_env.conj().T @ bath.h_int.data @ u_env
    return OperatorMatrix(data, bath.dims, hermitian=True)


def gate_frame_h(bath: BathModel, h_sys: OperatorMatrix | None, t: float) -> OperatorMatrix:
    """``U_S^dagger(t) H_I(t) U_S(t)`` with the gate unitary extended by the bath identity.

    Raises:
        ValueError: When ``h_sys`` does not act on the system factors only.
    """
    if h_sys is not None and h_sys.dims != bath.sys_dims:
        raise ValueError(
            f"System Hamiltonian must act on the system factors {list(bath.sys_dims)} only"
        )

    h_interaction = interaction_picture_h(bath, t)
    if h_sys is None:
        return h_interaction

    u_sys = extend(expm_hermitian(h_sys, t), bath.env_dims).data
    data = u_sys.conj().T @ h_interaction.data @ u_sys
    return OperatorMatrix(data, bath.dims, hermitian=True)


def calibrated_flip_probability(lam: float, dt: float, omega: float = 1.0) -> float:
    """Per-step phase-flip probability matching a vacuum mode of frequency ``omega``.

    Equals ``(lam * 2 sin(omega dt / 2) / omega)^2``, tending to ``(lam dt)^2``.
    """
    if lam < 0 or dt < 0:
        raise ValueError("Coupling strength and step duration must be non-negative")

    amplitude = lam * dt if omega == 0 else lam * 2 * math.sin(omega * dt / 2) / omega
    return min(amplitude**2, 1.0)


@dataclasses.dataclass(frozen=True)
class StochasticChannel:
    """Independent Pauli flips on each system qubit.

    Args:
        p: Flip probability per qubit per application.
        axis: The Pauli axis applied on a flip.
        seed: Stream seed for `StochasticChannel.rng`.
        targets: Qubits that may flip. All qubits when ``None``.
    """

    p: float
    axis: str = "Z"
    seed: int = 0
    targets: tuple[int, ...] | None = None

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"Flip probability must be in [0, 1], got {self.p}")
        if self.axis not in AXES:
            raise ValueError(f'Unknown Pauli axis "{self.axis}"')

    def rng(self, index: int = 0) -> np.random.Generator:
        return np.random.default_rng(utils.derive_seed(self.seed, "channel", index))

    def qubits(self, n_sys: int) -> tuple[int, ...]:
        if self.targets is None:
            return tuple(range(n_sys))

        invalid = [q for q in self.targets if not 0 <= q < n_sys]
        if invalid:
            raise ValueError(f"Channel targets {invalid} are out of range for {n_sys} qubits")
        return tuple(sorted(set(self.targets)))


def sample_errors(
    ch: StochasticChannel, n_sys: int, rng: np.random.Generator
) -> frozenset[int]:
    """Draw the set of qubits flipped during one application of the channel"""
    draws = rng.random(n_sys) < ch.p
    return frozenset(q for q in ch.qubits(n_sys) if draws[q])
