import numpy as np
import pytest
from hypothesis import given, settings

from ddqpt.errors import InvalidObservableError, InvalidStateError
from ddqpt.qstate import (
    EXCITED,
    GROUND,
    I2,
    MIXED,
    PLUS,
    SX,
    SY,
    SZ,
    DensityMatrix,
    bloch_from_density,
    density_from_bloch,
    expectation,
    ket,
    pauli_basis,
    trace_distance,
)

from conftest import bloch_vectors, density_matrices


def test_pauli_basis_order_and_values():
    b = pauli_basis()
    assert len(b) == 4
    np.testing.assert_array_equal(b[0], [[1, 0], [0, 1]])
    np.testing.assert_array_equal(b[1], [[0, 1], [1, 0]])
    np.testing.assert_array_equal(b[2], [[0, 1], [-1, 0]])
    np.testing.assert_array_equal(b[3], [[1, 0], [0, -1]])


def test_pauli_basis_elements_are_unitary_and_orthogonal():
    b = pauli_basis()
    for i, e in enumerate(b):
        np.testing.assert_allclose(e @ e.conj().T, I2, atol=1e-15)
        for j, f in enumerate(b):
            assert np.trace(e.conj().T @ f) == pytest.approx(2.0 if i == j else 0.0)


def test_pauli_basis_returns_fresh_copies():
    b = pauli_basis()
    b[0][0, 0] = 7
    assert pauli_basis()[0][0, 0] == 1


def test_density_from_bloch_examples():
    np.testing.assert_allclose(density_from_bloch((0, 0, 1)).matrix, [[1, 0], [0, 0]])
    np.testing.assert_allclose(density_from_bloch((0, 0, 0)).matrix, 0.5 * np.eye(2))
    np.testing.assert_allclose(density_from_bloch((1, 0, 0)).matrix, [[0.5, 0.5], [0.5, 0.5]])


def test_density_from_bloch_rejects_long_vectors():
    with pytest.raises(InvalidStateError):
        density_from_bloch((1, 1, 0))


def test_y_component_sign():
    plus_i = ket([1, 1j])
    assert bloch_from_density(plus_i) == pytest.approx((0, 1, 0))


@pytest.mark.parametrize(
    "m",
    [
        [[1, 1], [0, 0]],  # not Hermitian
        [[1, 0], [0, 1]],  # trace 2
        [[1.5, 0], [0, -0.5]],  # negative eigenvalue
        [[np.nan, 0], [0, 1]],
        np.eye(3) / 3,
    ],
)
def test_density_matrix_validation(m):
    with pytest.raises(InvalidStateError):
        DensityMatrix(np.array(m))


def test_density_matrix_is_read_only():
    rho = density_from_bloch((0, 0, 1))
    with pytest.raises(ValueError):
        rho.matrix[0, 0] = 0


def test_expectation_examples():
    assert expectation(GROUND, SZ) == pytest.approx(1.0)
    for p in (SX, SY, SZ):
        assert expectation(MIXED, p) == pytest.approx(0.0)
    assert expectation(PLUS, SX) == pytest.approx(1.0)


def test_expectation_rejects_non_hermitian():
    with pytest.raises(InvalidObservableError):
        expectation(GROUND, np.array([[0, 1], [0, 0]]))


def test_trace_distance_between_poles():
    assert trace_distance(GROUND, EXCITED) == pytest.approx(1.0)
    assert trace_distance(GROUND, GROUND) == pytest.approx(0.0)


@settings(max_examples=1000, deadline=None)
@given(bloch_vectors())
def test_bloch_round_trip(v):
    rho = density_from_bloch(v)
    assert np.allclose(tuple(bloch_from_density(rho)), v, atol=1e-10, rtol=0)


@settings(max_examples=300, deadline=None)
@given(density_matrices())
def test_expectation_of_identity_is_one(rho):
    assert expectation(rho, I2) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(bloch_vectors())
def test_density_from_bloch_output_is_valid(v):
    m = density_from_bloch(v).matrix
    assert np.allclose(m, m.conj().T, atol=1e-10)
    assert abs(np.trace(m) - 1) < 1e-10
    assert np.linalg.eigvalsh(m).min() > -1e-10
