"""Full-statevector primitives.

Conventions:
  * little-endian basis order: qubit 0 is the least-significant bit of the
    basis index, so |q1 q0> = |10> is amplitude index 2;
  * a 4x4 gate applied to (q1, q2) uses local index 2*bit(q1) + bit(q2), so
    ``CX_MATRIX`` applied to (control, target) is the usual controlled-NOT.

Gate application is functional: every call returns a new StateVector whose
``matvecs`` counter is one higher than its input's. One call is one
matrix-vector multiplication, the unit used for computation accounting.
"""

from __future__ import annotations

import math

import numpy as np

X_MATRIX = np.array([[0, 1], [1, 0]], dtype=complex)
Y_MATRIX = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z_MATRIX = np.array([[1, 0], [0, -1]], dtype=complex)
I_MATRIX = np.eye(2, dtype=complex)
H_MATRIX = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
CX_MATRIX = np.array(
    [[1, 0, 0, 0],
     [0, 1, 0, 0],
     [0, 0, 0, 1],
     [0, 0, 1, 0]], dtype=complex)

NORM_TOL = 1e-9


class StateVector:
    """2**n complex amplitudes plus the number of matvecs that produced them."""

    __slots__ = ("n", "amplitudes", "matvecs")

    def __init__(self, n: int, amplitudes: np.ndarray, matvecs: int = 0):
        self.n = n
        self.amplitudes = amplitudes
        self.matvecs = matvecs

    @classmethod
    def zero(cls, n: int) -> "StateVector":
        if n < 1:
            raise ValueError("need at least one qubit")
        amps = np.zeros(1 << n, dtype=complex)
        amps[0] = 1.0
        return cls(n, amps)

    @classmethod
    def basis(cls, n: int, index: int) -> "StateVector":
        if not 0 <= index < (1 << n):
            raise ValueError(f"basis index {index} out of range for {n} qubits")
        amps = np.zeros(1 << n, dtype=complex)
        amps[index] = 1.0
        return cls(n, amps)

    def norm(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def __repr__(self) -> str:
        return f"StateVector(n={self.n}, matvecs={self.matvecs})"


def u_matrix(theta: float, phi: float, lam: float) -> np.ndarray:
    """The OpenQASM single-qubit U gate."""
    if not all(map(math.isfinite, (theta, phi, lam))):
        raise ValueError(f"non-finite angle in U({theta}, {phi}, {lam})")
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array(
        [[c, -np.exp(1j * lam) * s],
         [np.exp(1j * phi) * s, np.exp(1j * (phi + lam)) * c]], dtype=complex)


def is_unitary(m: np.ndarray, tol: float = NORM_TOL) -> bool:
    m = np.asarray(m)
    return m.shape[0] == m.shape[1] and np.allclose(m.conj().T @ m, np.eye(m.shape[0]), atol=tol, rtol=0)


def _check_qubit(s: StateVector, q: int) -> None:
    if not 0 <= q < s.n:
        raise IndexError(f"qubit {q} out of range for {s.n}-qubit state")


def apply_1q(s: StateVector, g: np.ndarray, q: int) -> StateVector:
    _check_qubit(s, q)
    psi = s.amplitudes.reshape(-1, 2, 1 << q)
    out = np.empty_like(psi)
    a0, a1 = psi[:, 0, :], psi[:, 1, :]
    out[:, 0, :] = g[0, 0] * a0 + g[0, 1] * a1
    out[:, 1, :] = g[1, 0] * a0 + g[1, 1] * a1
    return StateVector(s.n, out.reshape(-1), s.matvecs + 1)


def apply_2q(s: StateVector, g: np.ndarray, q1: int, q2: int) -> StateVector:
    _check_qubit(s, q1)
    _check_qubit(s, q2)
    if q1 == q2:
        raise IndexError(f"two-qubit gate on repeated qubit {q1}")
    n = s.n
    ax1, ax2 = n - 1 - q1, n - 1 - q2
    tensor = s.amplitudes.reshape((2,) * n)
    out = np.tensordot(g.reshape(2, 2, 2, 2), tensor, axes=([2, 3], [ax1, ax2]))
    out = np.moveaxis(out, [0, 1], [ax1, ax2])
    return StateVector(n, np.ascontiguousarray(out).reshape(-1), s.matvecs + 1)


def prob_one(s: StateVector, q: int) -> float:
    _check_qubit(s, q)
    psi = s.amplitudes.reshape(-1, 2, 1 << q)[:, 1, :]
    return float(np.sum(psi.real ** 2 + psi.imag ** 2))


def project(s: StateVector, q: int, bit: int) -> StateVector:
    """Project qubit ``q`` onto ``bit`` and renormalize (does not count as a matvec)."""
    psi = s.amplitudes.reshape(-1, 2, 1 << q).copy()
    psi[:, 1 - bit, :] = 0
    amps = psi.reshape(-1)
    norm = math.sqrt(float(np.vdot(amps, amps).real))
    if norm == 0:
        raise ValueError(f"projection of qubit {q} onto {bit} has zero probability")
    return StateVector(s.n, amps / norm, s.matvecs)


def measure_qubit(s: StateVector, q: int, rng: np.random.Generator) -> tuple[int, StateVector]:
    """Sample a Z-basis outcome for qubit ``q``; one uniform draw per call."""
    p1 = prob_one(s, q)
    bit = 1 if rng.random() < p1 else 0
    return bit, project(s, q, bit)


def distribution(s: StateVector) -> np.ndarray:
    a = s.amplitudes
    return a.real ** 2 + a.imag ** 2
