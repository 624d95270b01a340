"""Dense state vectors over a qubit register.

Bit convention: basis index ``I`` stores qubit ``q`` in bit ``q`` of ``I``
(qubit 0 is the least significant bit). For a two-qubit operator acting on
the ordered pair ``(qa, qb)`` the 4x4 row/column index is
``2 * bit(qa) + bit(qb)``, i.e. ``qa`` is the first tensor factor.

All gate applications mutate the state in place through strided views of
the amplitude buffer and return the same state object. Operators need not
be unitary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError

I2 = np.eye(2, dtype=complex)
Z = np.diag([1.0, -1.0]).astype(complex)
P0 = np.array([[1, 0], [0, 0]], dtype=complex)
P1 = np.array([[0, 0], [0, 1]], dtype=complex)
# |0><1| and |1><0|
SIGMA_01 = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_10 = np.array([[0, 0], [1, 0]], dtype=complex)

CZ = np.diag([1.0, 1.0, 1.0, -1.0]).astype(complex)
ISWAP = np.array(
    [[1, 0, 0, 0], [0, 0, 1j, 0], [0, 1j, 0, 0], [0, 0, 0, 1]], dtype=complex
)


@dataclass(eq=False)
class SubsystemState:
    """Amplitudes of an ``n``-qubit register (``2**n`` complex doubles)."""

    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        amps = np.ascontiguousarray(self.amplitudes, dtype=np.complex128)
        if amps.ndim != 1 or amps.size < 2 or amps.size & (amps.size - 1):
            raise ArgumentError(f"amplitude length {amps.size} is not 2**n with n >= 1")
        self.amplitudes = amps

    @property
    def num_qubits(self) -> int:
        return self.amplitudes.size.bit_length() - 1

    def copy(self) -> SubsystemState:
        return SubsystemState(self.amplitudes.copy())

    def to_bytes(self) -> bytes:
        return self.amplitudes.tobytes()

    @classmethod
    def from_bytes(cls, buf: bytes) -> SubsystemState:
        return cls(np.frombuffer(buf, dtype=np.complex128).copy())


def _check_site(n: int, q: int) -> None:
    if not 0 <= q < n:
        raise ArgumentError(f"qubit {q} out of range for {n}-qubit register")


def _as_matrix(op, shape: tuple[int, int]) -> np.ndarray:
    m = np.asarray(op, dtype=np.complex128)
    if m.shape != shape:
        raise ArgumentError(f"operator has shape {m.shape}, expected {shape}")
    return m


def product_state(n: int, basis_index: int) -> SubsystemState:
    if n < 1:
        raise ArgumentError(f"need at least one qubit, got {n}")
    if not 0 <= basis_index < (1 << n):
        raise ArgumentError(f"basis index {basis_index} out of range for {n} qubits")
    amps = np.zeros(1 << n, dtype=np.complex128)
    amps[basis_index] = 1.0
    return SubsystemState(amps)


def apply_one_qubit(state: SubsystemState, op, q: int) -> SubsystemState:
    """Apply a 2x2 operator to qubit ``q`` in place."""
    n = state.num_qubits
    _check_site(n, q)
    m = _as_matrix(op, (2, 2))
    v = state.amplitudes.reshape(-1, 2, 1 << q)
    a = v[:, 0, :].copy()
    b = v[:, 1, :].copy()
    v[:, 0, :] = m[0, 0] * a + m[0, 1] * b
    v[:, 1, :] = m[1, 0] * a + m[1, 1] * b
    return state


def apply_two_qubit(state: SubsystemState, op, qa: int, qb: int) -> SubsystemState:
    """Apply a 4x4 operator to the ordered qubit pair ``(qa, qb)`` in place."""
    n = state.num_qubits
    _check_site(n, qa)
    _check_site(n, qb)
    if qa == qb:
        raise ArgumentError("two-qubit operator needs distinct qubits")
    m = _as_matrix(op, (4, 4))
    hi, lo = max(qa, qb), min(qa, qb)
    v = state.amplitudes.reshape(-1, 2, 1 << (hi - lo - 1), 2, 1 << lo)

    def block(bit_a: int, bit_b: int) -> tuple:
        bits = {qa: bit_a, qb: bit_b}
        return (slice(None), bits[hi], slice(None), bits[lo], slice(None))

    slots = [block(i >> 1, i & 1) for i in range(4)]
    old = [v[s].copy() for s in slots]
    for row, s in enumerate(slots):
        v[s] = m[row, 0] * old[0] + m[row, 1] * old[1] + m[row, 2] * old[2] + m[row, 3] * old[3]
    return state


def inner_product(a: SubsystemState, b: SubsystemState) -> complex:
    """Return <a|b> (``a`` is conjugated)."""
    if a.amplitudes.size != b.amplitudes.size:
        raise ArgumentError(
            f"register size mismatch: {a.num_qubits} vs {b.num_qubits} qubits"
        )
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def amplitude(state: SubsystemState, idx: int) -> complex:
    if not 0 <= idx < state.amplitudes.size:
        raise ArgumentError(f"index {idx} out of range for {state.num_qubits} qubits")
    return complex(state.amplitudes[idx])


def norm_squared(state: SubsystemState) -> float:
    amps = state.amplitudes
    return float(np.dot(amps.real, amps.real) + np.dot(amps.imag, amps.imag))
