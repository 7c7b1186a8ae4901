import math

import numpy as np
import pytest

from qecstep import fitting, synthesis
from qecstep.operators import PauliString, phase_aligned_distance

EPSILONS = (0.04, 0.06, 0.09, 0.135, 0.2)
A = PauliString.from_label("ZXI")
B = PauliString.from_label("IYZ")


def _order(build):
    return fitting.fit_slope(
        EPSILONS, [synthesis.plan_residual(build(eps)) for eps in EPSILONS]
    ).slope


def test_plan_validation():
    with pytest.raises(ValueError, match="more than two qubits"):
        synthesis.SynthesisPlan(3, ((PauliString.from_label("ZZZ"), 0.1),))
    with pytest.raises(ValueError, match="not Hermitian"):
        synthesis.SynthesisPlan(3, ((1j * A, 0.1),))
    with pytest.raises(ValueError, match="does not act on 4 qubits"):
        synthesis.SynthesisPlan(4, ((A, 0.1),))
    with pytest.raises(ValueError, match="commute"):
        synthesis.block_2nd(A, PauliString.from_label("ZZI"), 0.1)
    with pytest.raises(ValueError, match="at most two qubits"):
        synthesis.block_2nd(PauliString.from_label("ZZX"), B, 0.1)


def test_plan_algebra():
    plan = synthesis.block_2nd(A, B, 0.2)
    assert len(plan) == 4
    identity = synthesis.compose(plan + plan.inverse()).data
    np.testing.assert_allclose(identity, np.eye(8), atol=1e-12)

    twice = plan.repeat(2)
    assert len(twice) == 8
    assert twice.target[1] == pytest.approx(2 * plan.target[1])
    np.testing.assert_allclose(
        synthesis.compose(twice).data,
        synthesis.compose(plan).data @ synthesis.compose(plan).data,
        atol=1e-12,
    )
    assert len(plan.repeat(0)) == 0
    with pytest.raises(ValueError, match="non-negative"):
        plan.repeat(-1)
    with pytest.raises(ValueError, match="different registers"):
        plan + synthesis.SynthesisPlan(2, ())
    with pytest.raises(ValueError, match="no declared target"):
        synthesis.target_unitary(plan + plan)


def test_execute_matches_compose():
    plan = synthesis.block_3rd(A, B, 0.15)
    rng = np.random.default_rng(3)
    psi = rng.normal(size=8) + 1j * rng.normal(size=8)
    psi /= np.linalg.norm(psi)
    u = synthesis.compose(plan).data
    np.testing.assert_allclose(synthesis.execute(plan, psi), u @ psi, atol=1e-12)

    rho = np.outer(psi, psi.conj())
    np.testing.assert_allclose(
        synthesis.execute(plan, rho), u @ rho @ u.conj().T, atol=1e-12
    )
    with pytest.raises(ValueError, match="state has side 4"):
        synthesis.execute(plan, np.ones(4))


@pytest.mark.parametrize(
    "build, expected, tolerance",
    [
        (lambda eps: synthesis.block_2nd(A, B, eps), 3.0, 0.2),
        (lambda eps: synthesis.block_3rd(A, B, eps), 4.0, 0.2),
        (synthesis.inner_7th, 8.0, 0.4),
        (synthesis.cnot_4body, 4.0, 0.3),
    ],
)
def test_residual_orders(build, expected, tolerance):
    assert _order(build) == pytest.approx(expected, abs=tolerance)


def test_block_target():
    plan = synthesis.block_2nd(A, B, 0.1)
    target, angle = plan.target
    assert target == -1j * (A * B)
    assert target.is_hermitian()
    assert angle == pytest.approx(0.02)
    assert plan.residual_order == 3
    assert synthesis.block_3rd(A, B, 0.1).residual_order == 4


def test_three_body():
    plan = synthesis.three_body(0.05)
    target = PauliString.from_label("ZZX")
    assert plan.target[0] == target
    assert plan.target[1] == pytest.approx(0.05)
    assert phase_aligned_distance(
        synthesis.compose(plan), synthesis.target_unitary(plan)
    ) == pytest.approx(0, abs=1e-5)

    with pytest.raises(ValueError, match="seventh-order angle"):
        synthesis.three_body(1.0)
    with pytest.raises(ValueError, match="below 0.5"):
        synthesis.inner_7th(0.5)


def test_cnot_4body_validation():
    with pytest.raises(ValueError, match="below 0.5"):
        synthesis.cnot_4body(0.6)
    with pytest.raises(ValueError, match="Order must be 2 or 3"):
        synthesis.cnot_4body(0.1, order=4)

    plan = synthesis.cnot_4body(0.1, order=2)
    assert plan.residual_order == 3
    assert plan.target[0] == PauliString.from_label("ZZZX")


def test_logical_steps():
    plan, epsilon = synthesis.logical_sigma_x_step(100, 2)
    assert 2 * epsilon**2 == pytest.approx(math.pi / 200)
    assert plan.n_qubits == 3

    plan, epsilon = synthesis.logical_cnot_step(100, 3)
    assert 2 * epsilon**2 == pytest.approx(math.pi / 400)
    assert plan.n_qubits == 6
    assert all(p.weight <= 2 for p, _ in plan.factors)


def test_sigma_x_sweep():
    rows = synthesis.fidelity_sweep("sigma_x", [100, 1000], 2, threads=1)
    assert [(row.n, row.initial_state) for row in rows] == [
        (100, "0L"),
        (100, "1L"),
        (1000, "0L"),
        (1000, "1L"),
    ]
    worst = max(row.infidelity for row in rows if row.n == 1000)
    assert math.log10(worst) == pytest.approx(-3, abs=0.5)

    third = synthesis.fidelity_sweep("sigma_x", [300], 3, threads=1)
    assert max(row.infidelity for row in third) <= 1e-4


def test_cnot_sweep():
    rows = synthesis.fidelity_sweep("cnot", [300], 3, threads=1)
    assert {row.initial_state for row in rows} == {"00L", "01L", "10L", "11L"}
    assert max(row.infidelity for row in rows) <= 1e-4


@pytest.mark.parametrize("gate", ["sigma_x", "cnot"])
@pytest.mark.parametrize("order", [2, 3])
def test_sweep_improves_with_steps(gate, order):
    rows = synthesis.fidelity_sweep(gate, [4, 10, 30, 100, 300], order, threads=1)
    for state in {row.initial_state for row in rows}:
        series = [
            row.infidelity
            for row in sorted(rows, key=lambda row: row.n)
            if row.initial_state == state
        ]
        assert len(series) == 5
        assert all(later <= earlier + 1e-12 for earlier, later in zip(series, series[1:]))


def test_sweep_validation():
    with pytest.raises(ValueError, match='Unknown sweep gate "toffoli"'):
        synthesis.fidelity_sweep("toffoli", [10], 2)
    with pytest.raises(ValueError, match="Order must be 2 or 3"):
        synthesis.fidelity_sweep("sigma_x", [10], 5)
    with pytest.raises(ValueError, match="must be positive"):
        synthesis.fidelity_sweep("sigma_x", [0], 2)
