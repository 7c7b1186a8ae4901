import math

import numpy as np
import pytest

from qecstep import fitting, gates, perturbation
from qecstep.bath import build_dephasing_bath
from qecstep.operators import StateMatrix, kron, spectral_norm
from qecstep.perturbation import InnerLimit, QuadratureSpec

LAMBDAS = (1e-1, 10**-1.25, 10**-1.5, 10**-1.75, 1e-2)


@pytest.fixture
def single():
    return build_dephasing_bath(1)


@pytest.fixture
def rho_single():
    return StateMatrix.from_vector([math.cos(0.4), math.sin(0.4)])


@pytest.fixture
def h_single():
    return gates.rot_hamiltonian(math.pi / 3, math.pi / 5)


def _random_state(rng, side):
    ginibre = rng.normal(size=(side, side)) + 1j * rng.normal(size=(side, side))
    rho = ginibre @ ginibre.conj().T
    return StateMatrix(rho / np.trace(rho))


def test_quadrature_rules():
    quad = QuadratureSpec(8)
    _, w = quad.line()
    assert w.sum() == pytest.approx(1)
    assert quad.square()[2].sum() == pytest.approx(1)

    u, v, w = quad.triangle()
    assert w.sum() == pytest.approx(0.5)
    assert np.sum(w * v) == pytest.approx(1 / 6)
    assert np.all(v <= u)
    assert quad.doubled().nodes == 16

    with pytest.raises(ValueError, match="at least 4 nodes"):
        QuadratureSpec(3)


def test_unitarity_conditions():
    rng = np.random.default_rng(0)
    for _ in range(5):
        bath = build_dephasing_bath(1, frequencies=[rng.uniform(0.5, 2)])
        h = gates.rot_hamiltonian(rng.uniform(0, math.pi), rng.uniform(0, 2 * math.pi))
        t = rng.uniform(0.1, 2)
        first = perturbation.c1(bath, h, t).data
        second = perturbation.c2(bath, h, t).data
        assert spectral_norm(first + first.conj().T) < 1e-8
        assert spectral_norm(second.conj().T + first @ first.conj().T + second) < 1e-8


def test_coefficients_at_time_zero(single, h_single):
    assert spectral_norm(perturbation.c1(single, h_single, 0)) == 0
    assert spectral_norm(perturbation.c2(single, h_single, 0)) == 0
    with pytest.raises(ValueError, match="non-negative"):
        perturbation.c1(single, h_single, -1)


def test_truncated_propagator_is_second_order(single, h_single):
    def gap(lam):
        bath = single.with_coupling(lam)
        return spectral_norm(
            perturbation.truncated_propagator(bath, h_single, 1.0).data
            - perturbation.exact_propagator(bath, h_single, 1.0).data
        )

    assert 6 < gap(0.02) / gap(0.01) < 10


def test_doubling_nodes_converges(single, h_single):
    quad = QuadratureSpec()
    for coefficient in (perturbation.c1, perturbation.c2):
        coarse = coefficient(single, h_single, 1.0, quad).data
        fine = coefficient(single, h_single, 1.0, quad.doubled()).data
        assert spectral_norm(coarse - fine) < 1e-8


def test_commuting_gate_matches_memory():
    bath = build_dephasing_bath(3, lam=0.1)
    commuting = gates.hamiltonian(gates.GateSpec(theta=math.pi / 2, logical=True))
    gate_kernel = perturbation.error_superop(bath, commuting, 0.5)
    memory_kernel = perturbation.error_superop(bath, None, 0.5)
    rng = np.random.default_rng(1)
    for _ in range(5):
        rho = bath.joint_state(_random_state(rng, 8))
        assert spectral_norm(gate_kernel(rho) - memory_kernel(rho)) < 1e-10


def test_kernel_output_is_traceless_and_hermitian(single, h_single, rho_single):
    kernel = perturbation.error_superop(single, h_single, 0.8)
    out = kernel(single.joint_state(rho_single))
    assert abs(out.trace()) < 1e-10
    assert out.is_hermitian(1e-10)
    assert kernel.inner_limit is InnerLimit.TRIANGLE
    assert kernel.nodes == perturbation.DEFAULT_NODES

    with pytest.raises(ValueError, match="acts on side"):
        kernel(np.eye(2))
    with pytest.raises(ValueError, match="t > 0"):
        perturbation.error_superop(single, h_single, 0)


def test_square_inner_limit_drops_nested_term(single, h_single):
    kernel = perturbation.error_superop(single, h_single, 0.8, inner_limit=InnerLimit.SQUARE)
    assert not kernel.nested.any()


def test_predict_state_without_coupling(single, h_single, rho_single):
    predicted = perturbation.predict_state(rho_single, single, h_single, 0.9)
    exact = perturbation.exact_state(rho_single, single, h_single, 0.9)
    assert spectral_norm(predicted.data - exact.data) < 1e-12
    unchanged = perturbation.predict_state(rho_single, single.with_coupling(0.1), h_single, 0)
    np.testing.assert_allclose(unchanged.data, rho_single.data)


def test_prediction_is_third_order(single, h_single, rho_single):
    """The residual falls at least as fast as lam^3.

    Odd orders vanish on a vacuum bath, so the measured slope sits near 4.
    """
    residuals = [
        perturbation.prediction_residual(rho_single, single.with_coupling(lam), h_single, 1.0)
        for lam in LAMBDAS
    ]
    assert fitting.fit_slope(LAMBDAS, residuals).slope >= perturbation.THIRD_ORDER_SLOPE


def test_select_inner_limit(single, h_single, rho_single):
    chosen, fits = perturbation.select_inner_limit(rho_single, single, h_single, 1.0, LAMBDAS)
    assert chosen is InnerLimit.TRIANGLE
    assert fits[InnerLimit.SQUARE].slope < perturbation.THIRD_ORDER_SLOPE


def test_select_inner_limit_fails(mocker, single, h_single, rho_single):
    mocker.patch(
        "qecstep.perturbation.fitting.fit_slope",
        autospec=True,
        return_value=fitting.SlopeFit((1,), (1,), 2.0, 0.0, 1.0, (1, 10)),
    )
    with pytest.raises(RuntimeError, match="No inner-limit variant"):
        perturbation.select_inner_limit(rho_single, single, h_single, 1.0, LAMBDAS)


def test_joint_initial_states(single, h_single, rho_single):
    bath = single.with_coupling(0.05)
    joint = bath.joint_state(rho_single)
    np.testing.assert_allclose(
        perturbation.predict_state(joint, bath, h_single, 0.5).data,
        perturbation.predict_state(rho_single, bath, h_single, 0.5).data,
    )

    bell = StateMatrix.from_vector(np.array([1, 0, 0, 1]) / math.sqrt(2))
    with pytest.raises(ValueError, match="correlated"):
        perturbation.predict_state(bell, bath, h_single, 0.5)

    excited = kron([rho_single, StateMatrix.from_vector([0, 1])])
    with pytest.raises(ValueError, match="env_init"):
        perturbation.predict_state(excited, bath, h_single, 0.5)

    with pytest.raises(ValueError, match="dims"):
        perturbation.predict_state(StateMatrix.maximally_mixed([2, 2, 2]), bath, h_single, 0.5)


def test_step_commutation_residual():
    bath = build_dephasing_bath(3)
    flipping = gates.GateSpec(theta=0.0, logical=True)
    h = gates.hamiltonian(flipping)
    steps = (10, 20, 50, 100, 200)
    residuals = [perturbation.step_commutation_residual(bath, h, flipping.t_g / n) for n in steps]
    assert fitting.fit_slope(steps, residuals).within(-1.0, 0.1)
    assert perturbation.step_commutation_residual(bath, h, 0) == 0

    commuting = gates.hamiltonian(gates.GateSpec(theta=math.pi / 2, logical=True))
    assert perturbation.step_commutation_residual(bath, commuting, 0.3) < 1e-12


def test_dephasing_conserves_populations():
    bath = build_dephasing_bath(2, lam=0.3)
    rho = _random_state(np.random.default_rng(2), 4)
    evolved = perturbation.exact_state(rho, bath, None, 2.0)
    np.testing.assert_allclose(np.diag(evolved.data), np.diag(rho.data), atol=1e-10)
    assert evolved.purity() < rho.purity()
