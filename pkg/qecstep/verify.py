"""Numerical self-checks run by ``qecstep verify``."""

from __future__ import annotations

import dataclasses
import logging
import math
from collections.abc import Callable, Sequence
from typing import Final

import numpy as np

from qecstep import fitting, gates, perturbation, phase_code, synthesis, utils
from qecstep.bath import build_dephasing_bath
from qecstep.operators import (
    AXES,
    PauliString,
    StateMatrix,
    pauli_exp,
    phase_aligned_distance,
    spectral_norm,
)

logger = logging.getLogger(__name__)

IDENTITY_TOL: Final = 1e-12
CORRECTION_TOL: Final = 1e-10
UNITARITY_TOL: Final = 1e-8
MEMORY_TOL: Final = 1e-10
CLOSED_FORM_TOL: Final = 1e-10
LEAKAGE_TOL: Final = 1e-10

ORDER_EPSILONS: Final = (0.04, 0.06, 0.09, 0.135, 0.2)
STEP_COUNTS: Final = (10, 20, 50, 100, 200)
PREDICTION_LAMBDAS: Final = (1e-1, 10**-1.25, 10**-1.5, 10**-1.75, 1e-2)
RANDOM_CONFIGS: Final = 10
RANDOM_STATES: Final = 20


@dataclasses.dataclass(frozen=True)
class CheckResult:
    """The outcome of one named check.

    For bounds ``value`` must not exceed ``tolerance``; for slopes it must lie
    within ``tolerance`` of ``expected``.
    """

    module: str
    name: str
    value: float
    tolerance: float
    passed: bool
    expected: float | None = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def __str__(self) -> str:
        status = "ok" if self.passed else "FAILED"
        target = (
            f"{self.expected} ± {self.tolerance}"
            if self.expected is not None
            else f"<= {self.tolerance:.1e}"
        )
        return f"{status:6} {self.module}.{self.name}: {self.value:.6g} ({target})"


@dataclasses.dataclass(frozen=True)
class VerifyReport:
    checks: tuple[CheckResult, ...]

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def failures(self) -> tuple[CheckResult, ...]:
        return tuple(check for check in self.checks if not check.passed)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": [check.to_dict() for check in self.checks]}

    def format(self) -> str:
        return "\n".join(str(check) for check in self.checks)


def bound(module: str, name: str, value: float, tolerance: float) -> CheckResult:
    return CheckResult(module, name, float(value), tolerance, bool(value <= tolerance))


def slope(
    module: str, name: str, fit: fitting.SlopeFit, expected: float, tolerance: float
) -> CheckResult:
    return CheckResult(
        module, name, fit.slope, tolerance, fit.within(expected, tolerance), expected
    )


def _random_state(rng: np.random.Generator, side: int) -> StateMatrix:
    ginibre = rng.normal(size=(side, side)) + 1j * rng.normal(size=(side, side))
    rho = ginibre @ ginibre.conj().T
    return StateMatrix(rho / np.trace(rho))


def check_operators() -> list[CheckResult]:
    worst = 0.0
    for left in AXES:
        for right in AXES:
            a = PauliString.from_label(left + "I")
            b = PauliString.from_label(right + "X")
            product = a.dense().data @ b.dense().data
            worst = max(worst, float(np.max(np.abs((a * b).dense().data - product))))

    u = pauli_exp(PauliString.from_label("ZZX"), 0.3)
    return [
        bound("operators", "pauli_products", worst, IDENTITY_TOL),
        bound(
            "operators",
            "pauli_exp_unitary",
            spectral_norm(u.data @ u.data.conj().T - np.eye(u.side)),
            IDENTITY_TOL,
        ),
    ]


def check_code() -> list[CheckResult]:
    logical = phase_code.logical_paulis()
    identity = np.eye(1 << phase_code.N_PHYSICAL)
    x, z, y = (op.dense().data for op in (logical.x, logical.z, logical.y))

    pauli1 = max(spectral_norm(op @ op - identity) for op in (x, y, z))
    for stabilizer in phase_code.stabilizers():
        s = stabilizer.dense().data
        pauli1 = max(pauli1, *(spectral_norm(op @ s - s @ op) for op in (x, y, z)))

    pauli2 = max(
        spectral_norm(z @ x - 1j * y),
        spectral_norm(x @ y - 1j * z),
        spectral_norm(y @ z - 1j * x),
        spectral_norm(x @ z + z @ x),
    )

    deviation = 0.0
    for alpha, beta in ((1, 0), (0, 1), (0.6, 0.8j)):
        psi = phase_code.encode(alpha, beta)
        for qubit in range(phase_code.N_PHYSICAL):
            flipped = PauliString.single(phase_code.N_PHYSICAL, qubit, "Z").dense().data @ psi
            probs = phase_code.syndrome_probabilities(flipped)
            syndrome = phase_code.SYNDROMES[int(np.argmax(probs))]
            recovered = phase_code.recover(
                phase_code.project_syndrome(flipped, syndrome), syndrome
            )
            deviation = max(deviation, abs(1 - abs(np.vdot(psi, recovered)) ** 2))

    return [
        bound("phase_code", "pauli1", pauli1, IDENTITY_TOL),
        bound("phase_code", "pauli2", pauli2, IDENTITY_TOL),
        bound("phase_code", "single_error_correction", deviation, CORRECTION_TOL),
    ]


def check_perturbation(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(utils.derive_seed(seed, "verify", 0))
    c1_worst = 0.0
    c2_worst = 0.0
    for _ in range(RANDOM_CONFIGS):
        theta, phi = rng.uniform(0, math.pi), rng.uniform(0, 2 * math.pi)
        t = rng.uniform(0.1, 2.0)
        bath = build_dephasing_bath(1, lam=0.1)
        h = gates.rot_hamiltonian(theta, phi, omega0=rng.uniform(0.5, 2.0))
        first = perturbation.c1(bath, h, t).data
        second = perturbation.c2(bath, h, t).data
        c1_worst = max(c1_worst, spectral_norm(first + first.conj().T))
        c2_worst = max(
            c2_worst, spectral_norm(second.conj().T + first @ first.conj().T + second)
        )

    commuting = gates.GateSpec(theta=math.pi / 2, logical=True)
    bath = build_dephasing_bath(phase_code.N_PHYSICAL, lam=0.1)
    gate_kernel = perturbation.error_superop(bath, gates.hamiltonian(commuting), 0.5)
    memory_kernel = perturbation.error_superop(bath, None, 0.5)
    memory_gap = 0.0
    for _ in range(RANDOM_STATES):
        rho = bath.joint_state(_random_state(rng, 1 << phase_code.N_PHYSICAL))
        memory_gap = max(
            memory_gap, spectral_norm(gate_kernel(rho).data - memory_kernel(rho).data)
        )

    flipping = gates.GateSpec(theta=0.0, logical=True)
    h_flip = gates.hamiltonian(flipping)
    residuals = [
        perturbation.step_commutation_residual(bath, h_flip, flipping.t_g / n)
        for n in STEP_COUNTS
    ]

    single = build_dephasing_bath(1)
    h_single = gates.rot_hamiltonian(math.pi / 3, math.pi / 5)
    rho_single = StateMatrix.from_vector([math.cos(0.4), math.sin(0.4)])
    prediction = [
        perturbation.prediction_residual(rho_single, single.with_coupling(lam), h_single, 1.0)
        for lam in PREDICTION_LAMBDAS
    ]
    prediction_slope = fitting.fit_slope(PREDICTION_LAMBDAS, prediction).slope

    return [
        bound("perturbation", "c1_antihermitian", c1_worst, UNITARITY_TOL),
        bound("perturbation", "c2_unitarity", c2_worst, UNITARITY_TOL),
        bound("perturbation", "commuting_gate_matches_memory", memory_gap, MEMORY_TOL),
        slope(
            "perturbation",
            "short_step_residual",
            fitting.fit_slope(STEP_COUNTS, residuals),
            -1.0,
            0.1,
        ),
        CheckResult(
            "perturbation",
            "prediction_order",
            prediction_slope,
            perturbation.THIRD_ORDER_SLOPE,
            prediction_slope >= perturbation.THIRD_ORDER_SLOPE,
        ),
    ]


def check_gates(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(utils.derive_seed(seed, "verify", 1))
    rotation = 0.0
    for _ in range(RANDOM_CONFIGS):
        theta, phi = rng.uniform(0, math.pi), rng.uniform(0, 2 * math.pi)
        angle = rng.uniform(0.1, math.pi)
        g = gates.GateSpec(theta=theta, phi=phi, angle=angle)
        rotation = max(
            rotation,
            phase_aligned_distance(
                gates.ideal_unitary(g), gates.rotation_unitary(theta, phi, angle)
            ),
        )

    cnot = phase_aligned_distance(
        gates.ideal_unitary(gates.GateSpec(kind="cnot")), gates.cnot_unitary()
    )

    theta, phi = rng.uniform(0, math.pi), rng.uniform(0, 2 * math.pi)
    logical = [
        gates.GateSpec(theta=theta, phi=phi, logical=True),
        gates.GateSpec(kind="cnot", logical=True),
    ]
    leakage = max(gates.subspace_leakage(g, np.linspace(0, g.t_g, 10)) for g in logical)

    return [
        bound("gates", "rotation_closed_form", rotation, CLOSED_FORM_TOL),
        bound("gates", "cnot_closed_form", cnot, CLOSED_FORM_TOL),
        bound("gates", "logical_leakage", leakage, LEAKAGE_TOL),
    ]


def _order_fit(
    build: Callable[[float], synthesis.SynthesisPlan], epsilons: Sequence[float]
) -> fitting.SlopeFit:
    return fitting.fit_slope(
        epsilons, [synthesis.plan_residual(build(eps)) for eps in epsilons]
    )


def check_synthesis(epsilons: Sequence[float] = ORDER_EPSILONS) -> list[CheckResult]:
    a = PauliString.from_label("ZXI")
    b = PauliString.from_label("IYZ")
    return [
        slope(
            "synthesis",
            "block_2nd_order",
            _order_fit(lambda eps: synthesis.block_2nd(a, b, eps), epsilons),
            3.0,
            0.2,
        ),
        slope(
            "synthesis",
            "block_3rd_order",
            _order_fit(lambda eps: synthesis.block_3rd(a, b, eps), epsilons),
            4.0,
            0.2,
        ),
        slope(
            "synthesis", "inner_7th_order", _order_fit(synthesis.inner_7th, epsilons), 8.0, 0.4
        ),
        slope(
            "synthesis", "cnot_4body_order", _order_fit(synthesis.cnot_4body, epsilons), 4.0, 0.3
        ),
    ]


def run_checks(seed: int = 0) -> VerifyReport:
    """Run every check and collect the results"""
    checks: list[CheckResult] = []
    for name, suite in (
        ("operators", check_operators),
        ("phase_code", check_code),
        ("perturbation", lambda: check_perturbation(seed)),
        ("gates", lambda: check_gates(seed)),
        ("synthesis", check_synthesis),
    ):
        logger.info("Running %s checks", name)
        checks.extend(suite())

    return VerifyReport(tuple(checks))


