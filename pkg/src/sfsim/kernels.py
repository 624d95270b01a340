"""Compiled in-place kernels for the trajectory engine's hot path.

Same bit convention as :mod:`sfsim.statevec`. The reference implementations
there are used by the oracle; these fused versions only serve the engine,
and the test suite checks the two against each other.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def apply_1q(amps, op, q):
    step = 1 << q
    n = amps.size
    o00, o01, o10, o11 = op[0, 0], op[0, 1], op[1, 0], op[1, 1]
    for base in range(0, n, step << 1):
        for i in range(base, base + step):
            a = amps[i]
            b = amps[i + step]
            amps[i] = o00 * a + o01 * b
            amps[i + step] = o10 * a + o11 * b


@njit(cache=True)
def _apply_bond(amps, g, q):
    # g acts on (q, q + 1) with q as the first tensor factor:
    # row index 2 * bit(q) + bit(q + 1).
    sa = 1 << q
    sb = sa << 1
    n = amps.size
    for base in range(0, n, sb << 1):
        for i in range(base, base + sa):
            i00 = i
            i01 = i + sb
            i10 = i + sa
            i11 = i + sa + sb
            a0 = amps[i00]
            a1 = amps[i01]
            a2 = amps[i10]
            a3 = amps[i11]
            amps[i00] = g[0, 0] * a0 + g[0, 1] * a1 + g[0, 2] * a2 + g[0, 3] * a3
            amps[i01] = g[1, 0] * a0 + g[1, 1] * a1 + g[1, 2] * a2 + g[1, 3] * a3
            amps[i10] = g[2, 0] * a0 + g[2, 1] * a1 + g[2, 2] * a2 + g[2, 3] * a3
            amps[i11] = g[3, 0] * a0 + g[3, 1] * a1 + g[3, 2] * a2 + g[3, 3] * a3


@njit(cache=True)
def evolve_periods(amps, diag, bond_gates, bond_order, periods):
    """Apply ``periods`` Floquet periods (diagonal, then ordered bonds) in place."""
    for _ in range(periods):
        for i in range(amps.size):
            amps[i] *= diag[i]
        for j in range(bond_order.size):
            b = bond_order[j]
            _apply_bond(amps, bond_gates[b], b)


@njit(cache=True)
def amplitude_after_1q(amps, op, q, idx):
    """Return ``(op_q |amps>)[idx]`` without touching ``amps``."""
    m = 1 << q
    bit = (idx >> q) & 1
    return op[bit, 0] * amps[idx & ~m] + op[bit, 1] * amps[idx | m]


def site_diagonal(site_phases: np.ndarray) -> np.ndarray:
    """Diagonal of the tensor product of per-site diagonal 2x2 matrices.

    ``site_phases[q] = (phase for bit 0, phase for bit 1)`` on qubit ``q``.
    """
    diag = np.ones(1, dtype=np.complex128)
    for q in range(site_phases.shape[0]):
        # qubit q is the next more-significant bit
        diag = np.concatenate([diag * site_phases[q, 0], diag * site_phases[q, 1]])
    return diag
