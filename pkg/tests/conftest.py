from __future__ import annotations

from functools import reduce

import numpy as np
import pytest

from sfsim.statevec import SubsystemState


def embed_one(op: np.ndarray, q: int, n: int) -> np.ndarray:
    """Dense 2**n operator of ``op`` on qubit ``q`` (qubit 0 = least significant bit)."""
    factors = [op if j == q else np.eye(2) for j in reversed(range(n))]
    return reduce(np.kron, factors)


def embed_two(op: np.ndarray, qa: int, qb: int, n: int) -> np.ndarray:
    """Dense 2**n operator of a 4x4 ``op`` on ordered pair ``(qa, qb)``, by index loops."""
    dim = 1 << n
    out = np.zeros((dim, dim), dtype=complex)
    mask = (1 << qa) | (1 << qb)
    for col in range(dim):
        c = 2 * ((col >> qa) & 1) + ((col >> qb) & 1)
        for r in range(4):
            row = (col & ~mask) | ((r >> 1) << qa) | ((r & 1) << qb)
            out[row, col] += op[r, c]
    return out


def dense_period(layer) -> np.ndarray:
    n = layer.n
    u = reduce(np.kron, [np.diag(layer.site_phases[q]) for q in reversed(range(n))])
    for b in layer.bond_order:
        u = embed_two(layer.bond_gates[b], b, b + 1, n) @ u
    return u


def random_state(rng: np.random.Generator, n: int) -> SubsystemState:
    v = rng.standard_normal(1 << n) + 1j * rng.standard_normal(1 << n)
    return SubsystemState(v / np.linalg.norm(v))


def random_matrix(rng: np.random.Generator, dim: int) -> np.ndarray:
    return rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))


def random_unitary(rng: np.random.Generator, dim: int) -> np.ndarray:
    q, r = np.linalg.qr(random_matrix(rng, dim))
    d = np.diag(r)
    return q * (d / abs(d))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)
