import math

import numpy as np
import pytest

from nisqsim.state import (CX_MATRIX, H_MATRIX, I_MATRIX, X_MATRIX, Z_MATRIX, StateVector, apply_1q,
                           apply_2q, distribution, is_unitary, measure_qubit, project, u_matrix)

R2 = 1 / math.sqrt(2)


def amps(s):
    return s.amplitudes


def test_u_identity():
    assert np.allclose(u_matrix(0, 0, 0), I_MATRIX, atol=1e-12)


def test_u_pauli_x():
    assert np.allclose(u_matrix(math.pi, 0, math.pi), X_MATRIX, atol=1e-12)


def test_u_hadamard():
    assert np.allclose(u_matrix(math.pi / 2, 0, math.pi), H_MATRIX, atol=1e-12)


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_u_rejects_non_finite(bad):
    with pytest.raises(ValueError):
        u_matrix(bad, 0, 0)


def test_x_on_zero():
    s = apply_1q(StateVector.zero(1), X_MATRIX, 0)
    assert np.allclose(amps(s), [0, 1])
    assert s.matvecs == 1


def test_z_on_zero():
    assert np.allclose(amps(apply_1q(StateVector.zero(1), Z_MATRIX, 0)), [1, 0])


def test_two_hadamards():
    s = apply_1q(apply_1q(StateVector.zero(2), H_MATRIX, 0), H_MATRIX, 1)
    assert np.allclose(amps(s), [0.5] * 4)
    assert np.allclose(distribution(s), [0.25] * 4)
    assert s.matvecs == 2


def test_little_endian_order():
    s = apply_1q(StateVector.zero(3), X_MATRIX, 1)
    assert np.argmax(np.abs(amps(s))) == 2


def test_cx_control_set():
    s = apply_2q(StateVector.basis(2, 0b01), CX_MATRIX, 0, 1)  # q0 = 1
    assert np.allclose(amps(s), [0, 0, 0, 1])
    assert s.matvecs == 1


def test_cx_control_clear():
    assert np.allclose(amps(apply_2q(StateVector.zero(2), CX_MATRIX, 0, 1)), [1, 0, 0, 0])


def test_cx_argument_order_matters():
    s = apply_2q(StateVector.basis(2, 0b01), CX_MATRIX, 1, 0)  # control q1 = 0
    assert np.allclose(amps(s), [0, 1, 0, 0])


def test_bell():
    s = apply_2q(apply_1q(StateVector.zero(2), H_MATRIX, 0), CX_MATRIX, 0, 1)
    assert np.allclose(amps(s), [R2, 0, 0, R2])
    assert np.allclose(distribution(s), [0.5, 0, 0, 0.5])


def test_two_qubit_gate_against_kron():
    rng = np.random.default_rng(1)
    psi = rng.normal(size=8) + 1j * rng.normal(size=8)
    psi /= np.linalg.norm(psi)
    s = apply_2q(StateVector(3, psi.copy()), CX_MATRIX, 2, 0)
    # full matrix with control q2 (MSB) and target q0 (LSB)
    full = np.zeros((8, 8))
    for b in range(8):
        out = b ^ 1 if b & 4 else b
        full[out, b] = 1
    assert np.allclose(amps(s), full @ psi, atol=1e-12)


@pytest.mark.parametrize("call", [
    lambda s: apply_1q(s, X_MATRIX, 2),
    lambda s: apply_1q(s, X_MATRIX, -1),
    lambda s: apply_2q(s, CX_MATRIX, 0, 0),
    lambda s: apply_2q(s, CX_MATRIX, 0, 5),
])
def test_index_errors(call):
    with pytest.raises(IndexError):
        call(StateVector.zero(2))


def test_measure_one_state():
    rng = np.random.default_rng(0)
    for _ in range(20):
        bit, post = measure_qubit(StateVector.basis(1, 1), 0, rng)
        assert bit == 1 and np.allclose(amps(post), [0, 1])


def test_measure_bell_collapses():
    bell = StateVector(2, np.array([R2, 0, 0, R2], dtype=complex))
    rng = np.random.default_rng(3)
    seen = set()
    for _ in range(50):
        bit, post = measure_qubit(bell, 0, rng)
        seen.add(bit)
        assert np.allclose(distribution(post), [1, 0, 0, 0] if bit == 0 else [0, 0, 0, 1])
    assert seen == {0, 1}


def test_measure_frequency_within_three_sigma():
    theta = 1.1
    s = apply_1q(StateVector.zero(1), u_matrix(theta, 0, 0), 0)
    p1 = math.sin(theta / 2) ** 2
    rng = np.random.default_rng(2024)
    n = 8192
    ones = sum(measure_qubit(s, 0, rng)[0] for _ in range(n))
    assert abs(ones / n - p1) <= 3 * math.sqrt(p1 * (1 - p1) / n)


def test_project_zero_probability():
    with pytest.raises(ValueError):
        project(StateVector.zero(1), 0, 1)


def test_zero_state_distribution():
    assert np.array_equal(distribution(StateVector.zero(2)), [1, 0, 0, 0])


def test_twenty_qubits():
    s = StateVector.zero(20)
    s = apply_1q(s, H_MATRIX, 19)
    s = apply_2q(s, CX_MATRIX, 19, 0)
    assert abs(s.norm() - 1) < 1e-9
    d = distribution(s)
    assert d[0] == pytest.approx(0.5) and d[(1 << 19) | 1] == pytest.approx(0.5)


def test_is_unitary():
    assert is_unitary(CX_MATRIX) and is_unitary(u_matrix(0.3, 1.2, -2.0))
    assert not is_unitary(np.array([[1, 1], [0, 1]]))
