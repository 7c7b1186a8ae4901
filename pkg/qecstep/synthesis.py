"""Multi-body Pauli exponentials built from two-body ones with group commutators.

A plan stores its factors in the order they act: the first factor is
applied first. ``(P, theta)`` denotes ``exp(-i theta P)``.
"""

from __future__ import annotations

import dataclasses
import functools
import logging
import math
from collections.abc import Iterable, Sequence
from typing import Final, Literal

import numpy as np
import scipy.optimize

from qecstep import phase_code, utils
from qecstep.operators import (
    OperatorMatrix,
    PauliString,
    pauli_exp,
    phase_aligned_distance,
)

logger = logging.getLogger(__name__)

MAX_INNER_EPSILON: Final = 0.5
MAX_FACTOR_WEIGHT: Final = 2

Factor = tuple[PauliString, float]
SweepGate = Literal["sigma_x", "cnot"]


@dataclasses.dataclass(frozen=True)
class SynthesisPlan:
    """A time-ordered product of two-body Pauli exponentials.

    Args:
        n_qubits: Register size.
        factors: ``(P, theta)`` pairs in the order they act.
        target: The multi-body exponential ``(T, angle)`` being approximated.
        residual_order: Leading power of epsilon in the approximation error.

    Raises:
        ValueError: When a factor acts on more than two qubits, has a
            non-real phase, or lives on a different register.
    """

    n_qubits: int
    factors: tuple[Factor, ...]
    target: Factor | None = None
    residual_order: int | None = None

    def __post_init__(self):
        for p, _ in self.factors:
            if p.n_qubits != self.n_qubits:
                raise ValueError(f"Factor {p!r} does not act on {self.n_qubits} qubits")
            if p.weight > MAX_FACTOR_WEIGHT:
                raise ValueError(f"Factor {p!r} acts on more than two qubits")
            if not p.is_hermitian():
                raise ValueError(f"Factor {p!r} is not Hermitian")

    def inverse(self) -> SynthesisPlan:
        target = None if self.target is None else (self.target[0], -self.target[1])
        return SynthesisPlan(
            self.n_qubits,
            tuple((p, -theta) for p, theta in reversed(self.factors)),
            target,
            self.residual_order,
        )

    def __add__(self, other: SynthesisPlan) -> SynthesisPlan:
        """``other`` acting after ``self``"""
        if other.n_qubits != self.n_qubits:
            raise ValueError("Plans act on different registers")

        return SynthesisPlan(self.n_qubits, self.factors + other.factors)

    def repeat(self, n: int) -> SynthesisPlan:
        if n < 0:
            raise ValueError("Repeat count must be non-negative")

        target = None if self.target is None else (self.target[0], n * self.target[1])
        return SynthesisPlan(self.n_qubits, self.factors * n, target, self.residual_order)

    def __len__(self) -> int:
        return len(self.factors)


def _target(a: PauliString, b: PauliString) -> PauliString:
    if a.weight > MAX_FACTOR_WEIGHT or b.weight > MAX_FACTOR_WEIGHT:
        raise ValueError("Group-commutator generators must act on at most two qubits")
    if a.commutes(b):
        raise ValueError(f"{a!r} and {b!r} commute; their group commutator is the identity")

    return -1j * (a * b)


def block_2nd(a: PauliString, b: PauliString, epsilon: float) -> SynthesisPlan:
    """``e^{-i eps A} e^{-i eps B} e^{i eps A} e^{i eps B} = e^{-2i eps^2 T} + O(eps^3)``

    ``T = -i A B``.

    Raises:
        ValueError: When ``A`` and ``B`` commute or are not two-body.
    """
    target = _target(a, b)
    factors = ((b, -epsilon), (a, -epsilon), (b, epsilon), (a, epsilon))
    return SynthesisPlan(a.n_qubits, factors, (target, 2 * epsilon**2), 3)


def _third_order_correction(a: PauliString, b: PauliString, epsilon: float) -> tuple[Factor, ...]:
    return ((a, -2 * epsilon**3), (b, 2 * epsilon**3))


def block_3rd(a: PauliString, b: PauliString, epsilon: float) -> SynthesisPlan:
    """`block_2nd` followed by ``e^{-2i eps^3 B} e^{2i eps^3 A}``, accurate to ``O(eps^4)``"""
    second = block_2nd(a, b, epsilon)
    return SynthesisPlan(
        a.n_qubits,
        _third_order_correction(a, b, epsilon) + second.factors,
        second.target,
        4,
    )


def inner_angle(epsilon: float) -> float:
    """Rotation angle produced by `inner_7th`"""
    return 2 * epsilon**2 - 8 * epsilon**4 / 3 - 56 * epsilon**6 / 45


def inner_7th(
    epsilon: float, qubits: Sequence[int] = (0, 1, 2), n_qubits: int | None = None
) -> SynthesisPlan:
    """Seventh-order plan for ``exp(i phi(eps) Z X_q0,q1 ... )``.

    The target is ``Z_q0 Z_q1 X_q2`` with angle ``phi = 2 eps^2 - 8 eps^4 / 3
    - 56 eps^6 / 45``, built from ``A = Z_q0 X_q1`` and ``B = Y_q1 X_q2``.

    Raises:
        ValueError: When ``|eps| >= 0.5``.
    """
    if abs(epsilon) >= MAX_INNER_EPSILON:
        raise ValueError(f"|epsilon| must be below {MAX_INNER_EPSILON}, got {epsilon}")

    q0, q1, q2 = qubits
    n_qubits = n_qubits or max(qubits) + 1
    a = PauliString(n_qubits, {q0: "Z", q1: "X"})
    b = PauliString(n_qubits, {q1: "Y", q2: "X"})
    eps = epsilon
    written = (
        (a, -eps),
        (b, eps),
        (a, eps),
        (b, -eps),
        (a, -(6 * eps**5 + 16 * eps**7 / 5)),
        (b, 2 * eps**5 - 56 * eps**7 / 5),
        (a, 2 * eps**3),
        (b, 2 * eps**3),
    )
    # Written left to right, so the rightmost factor acts first
    return SynthesisPlan(n_qubits, tuple(reversed(written)), (_target(a, b), -inner_angle(eps)), 8)


@functools.lru_cache(maxsize=4096)
def _solve_inner_epsilon(angle: float) -> float:
    if angle == 0:
        return 0.0

    upper = MAX_INNER_EPSILON * (1 - 1e-12)
    if angle > inner_angle(upper):
        raise ValueError(
            f"Angle {angle} exceeds the largest seventh-order angle {inner_angle(upper):.6g}"
        )

    return scipy.optimize.brentq(lambda eps: inner_angle(eps) - angle, 0.0, upper, xtol=1e-15)


def three_body(
    angle: float, qubits: Sequence[int] = (0, 1, 2), n_qubits: int | None = None
) -> SynthesisPlan:
    """Two-body plan for ``exp(-i angle Z_q0 Z_q1 X_q2)`` from `inner_7th`.

    Raises:
        ValueError: When ``|angle|`` is beyond the seventh-order range.
    """
    epsilon = _solve_inner_epsilon(abs(angle))
    plan = inner_7th(epsilon, qubits, n_qubits)
    return plan.inverse() if angle > 0 else plan


def cnot_4body(
    epsilon: float,
    qubits: Sequence[int] = (0, 1, 2, 3),
    n_qubits: int | None = None,
    order: int = 3,
) -> SynthesisPlan:
    """Two-body plan for ``exp(-2i eps^2 Z_q0 Z_q1 Z_q2 X_q3)``.

    The outer group commutator uses ``A = Z_q0 Z_q1 X_q2`` and
    ``B = Y_q2 X_q3``; each ``A`` factor is expanded with `three_body`.
    The third-order correction is ``e^{-2i eps^3 Y_q2 X_q3} e^{2i eps^3 A}``.

    Raises:
        ValueError: When ``|eps| >= 0.5``, the order is not 2 or 3, or an
            ``A`` angle is beyond the seventh-order range.
    """
    if abs(epsilon) >= MAX_INNER_EPSILON:
        raise ValueError(f"|epsilon| must be below {MAX_INNER_EPSILON}, got {epsilon}")
    if order not in (2, 3):
        raise ValueError(f"Order must be 2 or 3, got {order}")

    q0, q1, q2, q3 = qubits
    n_qubits = n_qubits or max(qubits) + 1
    a = PauliString(n_qubits, {q0: "Z", q1: "Z", q2: "X"})
    b = PauliString(n_qubits, {q2: "Y", q3: "X"})
    target = -1j * (a * b)
    outer: tuple[Factor, ...] = ((b, -epsilon), (a, -epsilon), (b, epsilon), (a, epsilon))
    if order == 3:
        outer = _third_order_correction(a, b, epsilon) + outer

    factors: list[Factor] = []
    for p, theta in outer:
        if p == a:
            factors.extend(three_body(theta, (q0, q1, q2), n_qubits).factors)
        else:
            factors.append((p, theta))

    return SynthesisPlan(n_qubits, tuple(factors), (target, 2 * epsilon**2), order + 1)


def _check_dims(plan: SynthesisPlan, side: int) -> None:
    if side != 1 << plan.n_qubits:
        raise ValueError(f"Plan acts on {plan.n_qubits} qubits, state has side {side}")


def compose(plan: SynthesisPlan) -> OperatorMatrix:
    """The product unitary of the plan"""
    side = 1 << plan.n_qubits
    u = np.eye(side, dtype=complex)
    for p, theta in plan.factors:
        u = math.cos(theta) * u - 1j * math.sin(theta) * (p.dense().data @ u)

    return OperatorMatrix(u, [2] * plan.n_qubits)


def execute(plan: SynthesisPlan, state: np.ndarray) -> np.ndarray:
    """Apply the plan factor by factor to a state vector or density matrix.

    Raises:
        ValueError: When the state does not match the plan's register.
    """
    state = np.asarray(state, dtype=complex)
    _check_dims(plan, state.shape[0])
    if state.ndim == 1:
        for p, theta in plan.factors:
            state = math.cos(theta) * state - 1j * math.sin(theta) * (p.dense().data @ state)
        return state

    u = compose(plan).data
    return u @ state @ u.conj().T


def target_unitary(plan: SynthesisPlan) -> OperatorMatrix:
    if plan.target is None:
        raise ValueError("Plan has no declared target")

    return pauli_exp(*plan.target)


def plan_residual(plan: SynthesisPlan) -> float:
    """Phase-aligned spectral distance between the plan and its target"""
    return phase_aligned_distance(compose(plan), target_unitary(plan))


def _block(order: int):
    if order == 2:
        return block_2nd
    if order == 3:
        return block_3rd

    raise ValueError(f"Order must be 2 or 3, got {order}")


def logical_sigma_x_step(n_steps: int, order: int) -> tuple[SynthesisPlan, float]:
    """One of ``n_steps`` blocks realizing ``exp(-i pi/2 sigma_Lx)`` on the code.

    Returns:
        The plan and its epsilon, with ``2 eps^2 = pi / (2 n_steps)``.
    """
    epsilon = math.sqrt(math.pi / (4 * n_steps))
    a = PauliString(phase_code.N_PHYSICAL, {0: "Z", 1: "X"})
    b = PauliString(phase_code.N_PHYSICAL, {1: "Y", 2: "Z"})
    return _block(order)(a, b, epsilon), epsilon


def logical_cnot_step(n_steps: int, order: int) -> tuple[SynthesisPlan, float]:
    """One of ``n_steps`` slices of the logical CNOT on two blocks.

    The logical CNOT is ``e^{i pi/4 X0} e^{i pi/4 Z3 Z4 Z5} e^{-i pi/4 X0 Z3 Z4 Z5}`` up
    to a global phase. Each slice advances all three commuting pieces by
    ``1 / n_steps`` of their angle.

    Returns:
        The plan and its epsilon, with ``2 eps^2 = pi / (4 n_steps)``.
    """
    n_qubits = 2 * phase_code.N_PHYSICAL
    quarter = math.pi / (4 * n_steps)
    epsilon = math.sqrt(quarter / 2)
    control = SynthesisPlan(n_qubits, ((PauliString(n_qubits, {0: "X"}), -quarter),))
    # Swapped generators flip the sign of the target so the rotation is positive
    parity = _block(order)(
        PauliString(n_qubits, {4: "Y", 5: "Z"}),
        PauliString(n_qubits, {3: "Z", 4: "X"}),
        epsilon,
    )
    coupling = cnot_4body(epsilon, (3, 4, 5, 0), n_qubits, order)
    return control + parity + coupling, epsilon


@dataclasses.dataclass(frozen=True)
class SweepRow:
    gate: str
    order: int
    n: int
    epsilon: float
    initial_state: str
    infidelity: float


def _initial_states(gate: SweepGate) -> list[tuple[str, np.ndarray]]:
    if gate == "sigma_x":
        return [("0L", phase_code.encode(1, 0)), ("1L", phase_code.encode(0, 1))]

    labels = ("00L", "01L", "10L", "11L")
    isometry = phase_code.encoding_isometry(2)
    return [(label, isometry[:, index]) for index, label in enumerate(labels)]


def _ideal(gate: SweepGate) -> np.ndarray:
    if gate == "sigma_x":
        return pauli_exp(phase_code.logical_paulis().x, math.pi / 2).data

    n_qubits = 2 * phase_code.N_PHYSICAL
    control = PauliString(n_qubits, {0: "X"})
    parity = PauliString(n_qubits, {3: "Z", 4: "Z", 5: "Z"})
    return (
        pauli_exp(control, -math.pi / 4).data
        @ pauli_exp(parity, -math.pi / 4).data
        @ pauli_exp(control * parity, math.pi / 4).data
    )


def _sweep_point(gate: SweepGate, n_steps: int, order: int) -> list[SweepRow]:
    step = logical_sigma_x_step if gate == "sigma_x" else logical_cnot_step
    plan, epsilon = step(n_steps, order)
    total = np.linalg.matrix_power(compose(plan).data, n_steps)
    ideal = _ideal(gate)
    rows = []
    for label, psi in _initial_states(gate):
        overlap = np.vdot(ideal @ psi, total @ psi)
        rows.append(
            SweepRow(
                gate=gate,
                order=order,
                n=n_steps,
                epsilon=epsilon,
                initial_state=label,
                infidelity=float(max(1 - abs(overlap) ** 2, 0.0)),
            )
        )

    return rows


def fidelity_sweep(
    gate: SweepGate,
    n_values: Iterable[int],
    order: int,
    threads: int | None = None,
) -> list[SweepRow]:
    """Infidelity of the synthesized logical gate against the ideal one for each step count.

    Args:
        gate: "sigma_x" for the logical bit flip or "cnot" for the logical CNOT.
        n_values: Step counts.
        order: 2 or 3, the order of the outer group commutator.
        threads: Parallel workers. Defaults to `qecstep.config.threads`.

    Raises:
        ValueError: On an unknown gate or order or a non-positive step count.
    """
    if gate not in ("sigma_x", "cnot"):
        raise ValueError(f'Unknown sweep gate "{gate}"')
    _block(order)
    n_values = [int(n) for n in n_values]
    if any(n < 1 for n in n_values):
        raise ValueError(f"Step counts must be positive, got {n_values}")

    logger.info("Sweeping %s order %s over %s step counts", gate, order, len(n_values))
    points = utils.parallel_map(lambda n: _sweep_point(gate, n, order), n_values, threads)
    return [row for rows in points for row in rows]
