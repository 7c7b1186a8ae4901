import itertools
import math

import numpy as np
import pytest

from qecstep import operators
from qecstep.operators import OperatorMatrix, PauliString, StateMatrix


@pytest.mark.parametrize(
    "left, right, expected",
    [
        ("X", "Y", PauliString.from_label("Z", 1j)),
        ("Y", "X", PauliString.from_label("Z", -1j)),
        ("Z", "X", PauliString.from_label("Y", 1j)),
        ("X", "X", PauliString.identity(1)),
    ],
)
def test_pauli_products(left, right, expected):
    a = PauliString.from_label(left)
    b = PauliString.from_label(right)
    assert a * b == expected
    np.testing.assert_allclose((a * b).dense().data, a.dense().data @ b.dense().data)


def test_pauli_string_properties():
    p = PauliString(3, {0: "Z", 2: "x", 1: "I"})
    assert p.label == "ZIX"
    assert p.support == (0, 2)
    assert p.weight == 2
    assert p.is_hermitian()
    assert not (1j * p).is_hermitian()
    assert (-p).phase == -1
    assert p.embed(6, offset=3).label == "IIIZIX"
    assert repr(-1j * p) == "PauliString(-iZIX)"

    with pytest.raises(ValueError, match="out of range"):
        PauliString(2, {2: "X"})
    with pytest.raises(ValueError, match="Unknown Pauli axis"):
        PauliString(1, {0: "W"})
    with pytest.raises(ValueError, match="Pauli phase"):
        PauliString(1, {0: "X"}, phase=2)
    with pytest.raises(ValueError, match="Cannot embed"):
        p.embed(4, offset=2)
    with pytest.raises(ValueError, match="act on 3 and 2"):
        p * PauliString.identity(2)


def test_pauli_commutes():
    zx = PauliString.from_label("ZXI")
    yz = PauliString.from_label("IYZ")
    assert not zx.commutes(yz)
    assert zx.commutes(PauliString.from_label("ZZZ").with_phase(-1)) is False
    assert PauliString.from_label("XXI").commutes(PauliString.from_label("ZZZ"))


def test_operator_matrix_validation():
    with pytest.raises(ValueError, match="square"):
        OperatorMatrix(np.zeros((2, 3)))
    with pytest.raises(ValueError, match="do not match"):
        OperatorMatrix(np.eye(4), [2, 3])
    with pytest.raises(ValueError, match="not Hermitian"):
        OperatorMatrix([[0, 1], [0, 0]], hermitian=True)
    with pytest.raises(ValueError, match="not unitary"):
        OperatorMatrix(2 * np.eye(2), unitary=True)

    op = OperatorMatrix(np.eye(6), [2, 3])
    assert op.dims == (2, 3)
    assert OperatorMatrix(np.eye(8)).dims == (2, 2, 2)
    with pytest.raises(ValueError):
        op.data[0, 0] = 2


def test_operator_arithmetic():
    x = PauliString.from_label("X").dense()
    z = PauliString.from_label("Z").dense()
    assert np.allclose((x @ z).data, -1j * PauliString.from_label("Y").dense().data)
    assert np.allclose((x + z - x).data, z.data)
    assert np.allclose((2 * x).data, 2 * x.data)
    y = PauliString.from_label("Y").dense()
    assert np.allclose(operators.commutator(x, z).data, -2j * y.data)
    assert np.allclose(x @ np.array([1, 0]), [0, 1])
    with pytest.raises(ValueError, match="Dimension mismatch"):
        x + OperatorMatrix.identity([2, 2])


def test_state_matrix():
    psi = np.array([1, 1j]) / math.sqrt(2)
    rho = StateMatrix.from_vector(psi)
    assert rho.purity() == pytest.approx(1)
    assert StateMatrix.maximally_mixed([2, 2]).purity() == pytest.approx(0.25)

    with pytest.raises(ValueError, match="trace"):
        StateMatrix(np.eye(2))
    with pytest.raises(ValueError, match="negative eigenvalue"):
        StateMatrix(np.diag([1.5, -0.5]))
    with pytest.raises(ValueError, match="norm"):
        StateMatrix.from_vector([1, 1])


def test_kron_and_partial_trace():
    a = StateMatrix.from_vector([1, 0])
    b = StateMatrix.maximally_mixed([2])
    joint = operators.kron([a, b])
    assert isinstance(joint, StateMatrix)
    assert joint.dims == (2, 2)

    np.testing.assert_allclose(operators.partial_trace(joint, [0]).data, a.data, atol=1e-15)
    np.testing.assert_allclose(operators.partial_trace(joint, [1]).data, b.data, atol=1e-15)
    assert isinstance(operators.partial_trace(joint, [1]), StateMatrix)

    with pytest.raises(ValueError, match="at least one factor"):
        operators.kron([])
    with pytest.raises(ValueError, match="at least one factor to keep"):
        operators.partial_trace(joint, [])
    with pytest.raises(ValueError, match="invalid"):
        operators.partial_trace(joint, [2])


def test_partial_trace_bell_state():
    bell = StateMatrix.from_vector(np.array([1, 0, 0, 1]) / math.sqrt(2))
    reduced = operators.partial_trace(bell, [0])
    np.testing.assert_allclose(reduced.data, np.eye(2) / 2, atol=1e-15)


def test_extend():
    z = PauliString.from_label("Z").dense()
    extended = operators.extend(z, [2, 2])
    assert extended.dims == (2, 2, 2)
    np.testing.assert_allclose(extended.data, PauliString.from_label("ZII").dense().data)
    assert operators.extend(z, []) is z


def test_pauli_exp():
    p = PauliString.from_label("ZZX")
    u = operators.pauli_exp(p, 0.3)
    assert u.is_unitary()
    np.testing.assert_allclose(
        u.data, operators.expm_hermitian(OperatorMatrix(p.dense()), 0.3).data, atol=1e-12
    )
    with pytest.raises(ValueError, match="Hermitian Pauli string"):
        operators.pauli_exp(1j * p, 0.3)


def test_expm_hermitian():
    h = operators.pauli_sum(
        [(0.5, PauliString.from_label("XI")), (1.5, PauliString.from_label("IZ"))]
    )
    u = operators.expm_hermitian(h, 0.7)
    assert u.is_unitary()
    np.testing.assert_allclose(
        u.data,
        operators.pauli_exp(PauliString.from_label("XI"), 0.35).data
        @ operators.pauli_exp(PauliString.from_label("IZ"), 1.05).data,
        atol=1e-12,
    )
    with pytest.raises(ValueError, match="requires a Hermitian operator"):
        operators.expm_hermitian(OperatorMatrix([[0, 1], [0, 0]]), 1.0)
    with pytest.raises(ValueError, match="at least one term"):
        operators.pauli_sum([])


def test_distances():
    x = PauliString.from_label("X").dense()
    assert operators.phase_aligned_distance(x, -1j * x) == pytest.approx(0, abs=1e-15)
    assert operators.gate_fidelity(x, 1j * x) == pytest.approx(1)
    assert operators.spectral_norm(3 * x) == pytest.approx(3)

    zero = StateMatrix.from_vector([1, 0])
    one = StateMatrix.from_vector([0, 1])
    assert operators.trace_distance(zero, one) == pytest.approx(1)
    assert operators.state_fidelity(zero, [1, 0]) == pytest.approx(1)
    with pytest.raises(ValueError, match="differ"):
        operators.state_fidelity(zero, [1, 0, 0, 0])
    with pytest.raises(ValueError, match="shapes"):
        operators.gate_fidelity(x, np.eye(4))


@pytest.mark.parametrize("n_qubits", [1, 2, 3])
def test_commutes_matches_dense(n_qubits):
    labels = itertools.product("IXYZ", repeat=n_qubits)
    strings = [PauliString.from_label("".join(label)) for label in labels]
    for a, b in itertools.product(strings, repeat=2):
        ab = a.dense().data @ b.dense().data
        ba = b.dense().data @ a.dense().data
        if a.commutes(b):
            np.testing.assert_allclose(ab, ba, atol=1e-12)
        else:
            np.testing.assert_allclose(ab, -ba, atol=1e-12)


def test_pauli_exp_adds_angles():
    rng = np.random.default_rng(7)
    for label in ("X", "ZY", "XIZ"):
        p = PauliString.from_label(label)
        first, second = rng.uniform(-math.pi, math.pi, size=2)
        np.testing.assert_allclose(
            (operators.pauli_exp(p, first) @ operators.pauli_exp(p, second)).data,
            operators.pauli_exp(p, first + second).data,
            atol=1e-12,
        )


def test_expm_hermitian_inverse():
    rng = np.random.default_rng(8)
    for side in (2, 4, 8):
        raw = rng.normal(size=(side, side)) + 1j * rng.normal(size=(side, side))
        h = OperatorMatrix(raw + raw.conj().T, hermitian=True)
        t = rng.uniform(0.1, 3)
        product = operators.expm_hermitian(h, t) @ operators.expm_hermitian(h, -t)
        np.testing.assert_allclose(product.data, np.eye(side), atol=1e-10)


def _random_psd(rng, side):
    ginibre = rng.normal(size=(side, side)) + 1j * rng.normal(size=(side, side))
    return ginibre @ ginibre.conj().T


def test_partial_trace_linear_and_positive():
    rng = np.random.default_rng(9)
    for _ in range(50):
        dims = [int(d) for d in rng.choice([2, 3], size=rng.integers(1, 5))]
        side = math.prod(dims)
        keep = [k for k in range(len(dims)) if rng.random() < 0.5] or [0]
        a, b = _random_psd(rng, side), _random_psd(rng, side)
        x, y = rng.normal(size=2)

        combined = operators.partial_trace(OperatorMatrix(x * a + y * b, dims), keep)
        separate = x * operators.partial_trace(OperatorMatrix(a, dims), keep).data + y * (
            operators.partial_trace(OperatorMatrix(b, dims), keep).data
        )
        np.testing.assert_allclose(combined.data, separate, atol=1e-9)

        reduced = operators.partial_trace(StateMatrix(a / np.trace(a), dims), keep)
        assert np.linalg.eigvalsh(reduced.data)[0] >= -1e-12
        assert reduced.trace() == pytest.approx(1)


def test_kron_eigenvalues_are_products():
    rng = np.random.default_rng(10)
    a = rng.uniform(-2, 2, size=2)
    b = rng.uniform(-2, 2, size=3)
    joint = operators.kron([OperatorMatrix(np.diag(a), [2]), OperatorMatrix(np.diag(b), [3])])
    np.testing.assert_allclose(
        np.sort(np.linalg.eigvalsh(joint.data)), np.sort(np.outer(a, b).ravel()), atol=1e-12
    )
