import math

import numpy as np
import pytest

from qecstep import phase_code
from qecstep.operators import PauliString, StateMatrix
from qecstep.phase_code import SYNDROMES, ImpossibleOutcomeError, Syndrome


def _flip(n_qubits, qubit):
    return PauliString.single(n_qubits, qubit, "Z").dense().data


def test_encode():
    zero = phase_code.encode(1, 0)
    assert np.allclose(zero, np.full(8, 1 / math.sqrt(8)))
    one = phase_code.encode(0, 1)
    assert abs(np.vdot(zero, one)) < 1e-15

    with pytest.raises(ValueError, match="squared norm"):
        phase_code.encode(1, 1)
    with pytest.raises(ValueError, match="At least one block"):
        phase_code.encode_blocks([])

    pair = phase_code.encode_blocks([(1, 0), (0, 1)])
    np.testing.assert_allclose(pair, np.kron(zero, one))


def test_syndrome_table():
    assert [s.error_qubit for s in SYNDROMES] == [None, 0, 1, 2]
    assert [s.ordinal for s in SYNDROMES] == [0, 1, 2, 3]
    assert Syndrome.from_index(2) == Syndrome(1, 1)
    assert not Syndrome(0, 0).triggered
    assert Syndrome(0, 1).triggered


def test_logical_operators():
    logical = phase_code.logical_paulis()
    assert logical.x.label == "ZZZ"
    assert logical.z.label == "XII"
    zero, one = phase_code.encode(1, 0), phase_code.encode(0, 1)
    np.testing.assert_allclose(logical.x.dense().data @ zero, one, atol=1e-15)
    np.testing.assert_allclose(logical.z.dense().data @ one, -one, atol=1e-15)
    np.testing.assert_allclose(
        logical.z.dense().data @ logical.x.dense().data,
        1j * logical.y.dense().data,
        atol=1e-15,
    )
    for stabilizer in phase_code.stabilizers():
        for op in logical:
            assert op.commutes(stabilizer)

    second = phase_code.logical_paulis(6, block=1)
    assert second.x.label == "IIIZZZ"
    with pytest.raises(ValueError, match="out of range"):
        phase_code.logical_paulis(6, block=2)
    with pytest.raises(ValueError, match="whole code blocks"):
        phase_code.stabilizers(4)


def test_code_spec():
    spec = phase_code.code_spec()
    assert spec.n_physical == 3
    assert len(spec.basis) == 2
    assert spec.logical.x == phase_code.logical_paulis().x


def test_code_projector():
    projector = phase_code.code_projector(1).data
    np.testing.assert_allclose(projector @ projector, projector, atol=1e-15)
    assert np.trace(projector).real == pytest.approx(2)
    assert phase_code.encoding_isometry(2).shape == (64, 4)
    total = sum(phase_code.syndrome_projectors())
    np.testing.assert_allclose(total, np.eye(8), atol=1e-15)


@pytest.mark.parametrize("qubit", [0, 1, 2])
@pytest.mark.parametrize("alpha, beta", [(1, 0), (0, 1), (0.6, 0.8j)])
def test_single_flip_corrected(qubit, alpha, beta):
    psi = phase_code.encode(alpha, beta)
    flipped = _flip(3, qubit) @ psi
    probs = phase_code.syndrome_probabilities(flipped)
    expected = [s for s in SYNDROMES if s.error_qubit == qubit][0]
    assert probs[expected.ordinal] == pytest.approx(1)

    syndrome, post = phase_code.measure_syndrome(flipped, np.random.default_rng(0))
    assert syndrome == expected
    recovered = phase_code.recover(post, syndrome)
    assert abs(np.vdot(psi, recovered)) ** 2 == pytest.approx(1, abs=1e-10)


def test_density_matrix_correction():
    psi = phase_code.encode(math.cos(0.3), math.sin(0.3))
    rho = StateMatrix.from_vector(_flip(3, 2) @ psi)
    syndrome, post = phase_code.measure_syndrome(rho, np.random.default_rng(1))
    assert syndrome == Syndrome(0, 1)
    recovered = phase_code.recover(post, syndrome)
    assert isinstance(recovered, StateMatrix)
    assert np.real(np.vdot(psi, recovered.data @ psi)) == pytest.approx(1)


def test_no_error_is_untouched():
    psi = phase_code.encode(0.6, 0.8)
    syndrome, post = phase_code.measure_syndrome(psi, np.random.default_rng(2))
    assert syndrome == Syndrome(0, 0)
    assert phase_code.recover(post, syndrome) is post


def test_impossible_outcome():
    psi = phase_code.encode(1, 0)
    with pytest.raises(ImpossibleOutcomeError, match="zero probability"):
        phase_code.project_syndrome(psi, Syndrome(1, 1))
    with pytest.raises(ImpossibleOutcomeError):
        phase_code.project_syndrome(StateMatrix.from_vector(psi), Syndrome(0, 1))


def test_superposed_error_collapses():
    psi = phase_code.encode(1, 0)
    mixed = (psi + _flip(3, 0) @ psi) / math.sqrt(2)
    probs = phase_code.syndrome_probabilities(mixed)
    np.testing.assert_allclose(probs, [0.5, 0.5, 0, 0], atol=1e-15)

    outcomes = {
        phase_code.measure_syndrome(mixed, np.random.default_rng(seed))[0] for seed in range(20)
    }
    assert outcomes == {Syndrome(0, 0), Syndrome(1, 0)}


def test_second_block_and_bath_qubits():
    psi = phase_code.encode_blocks([(1, 0), (0.6, 0.8)])
    flipped = _flip(6, 4) @ psi
    assert phase_code.syndrome_probabilities(flipped, block=0)[0] == pytest.approx(1)
    syndrome, post = phase_code.measure_syndrome(flipped, np.random.default_rng(0), block=1)
    assert syndrome.error_qubit == 1
    np.testing.assert_allclose(phase_code.recover(post, syndrome, block=1), psi, atol=1e-12)

    joint = np.kron(_flip(3, 0) @ phase_code.encode(1, 0), [1, 0, 0, 0])
    syndrome, post = phase_code.measure_syndrome(
        joint, np.random.default_rng(0), extra_qubits=2
    )
    assert syndrome == Syndrome(1, 0)
    np.testing.assert_allclose(
        phase_code.recover(post, syndrome, extra_qubits=2),
        np.kron(phase_code.encode(1, 0), [1, 0, 0, 0]),
        atol=1e-12,
    )
    with pytest.raises(ValueError, match="not a qubit register"):
        phase_code.syndrome_probabilities(np.ones(6) / math.sqrt(6))


def test_knill_laflamme_for_single_phase_flips():
    projector = phase_code.code_projector(1).data
    errors = [np.eye(8)] + [_flip(3, qubit) for qubit in range(3)]
    for a, first in enumerate(errors):
        for b, second in enumerate(errors):
            block = projector @ first.conj().T @ second @ projector
            np.testing.assert_allclose(block, (a == b) * projector, atol=1e-12)


def test_encode_preserves_inner_products():
    rng = np.random.default_rng(13)

    def amplitudes():
        pair = rng.normal(size=2) + 1j * rng.normal(size=2)
        return pair / np.linalg.norm(pair)

    for _ in range(20):
        left, right = amplitudes(), amplitudes()
        assert np.vdot(phase_code.encode(*left), phase_code.encode(*right)) == pytest.approx(
            np.vdot(left, right)
        )
