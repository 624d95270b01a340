"""Brute-force full-register evolution for verification at small sizes.

Subsystem 1 occupies qubits ``0 .. L1-1`` and subsystem 2 occupies
``L1 .. L-1``, so the global basis index of ``|k'>|l'>`` is
``k' + 2**L1 * l'``. Only the generic kernels of :mod:`sfsim.statevec` are
used; nothing here goes through the cutting engine.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import statevec as sv
from .errors import ResourceError
from .randmodel import CircuitRealization, GateKind, apply_floquet_period

DEFAULT_CAP = 16


@dataclass
class OracleResult:
    amplitudes: np.ndarray
    values: np.ndarray
    states: list[np.ndarray] | None = None
    norms: np.ndarray | None = None


def oracle_run(
    real: CircuitRealization, cap: int = DEFAULT_CAP, keep_states: bool = False
) -> OracleResult:
    L = real.L1 + real.L2
    if L > cap:
        raise ResourceError(f"oracle limited to {cap} qubits, realization has {L}", required=L, limit=cap)
    psi0 = sv.product_state(L, real.k + (real.l << real.L1))
    psi = psi0.copy()
    gate = real.gate
    amps = [sv.inner_product(psi0, psi)]
    norms = [sv.norm_squared(psi)]
    states = [psi.amplitudes.copy()] if keep_states else None
    for t in range(real.T):
        for _ in range(real.Np):
            apply_floquet_period(psi, real.layer1, offset=0)
            apply_floquet_period(psi, real.layer2, offset=real.L1)
        if real.gate_kind is not GateKind.NONE:
            q1, q2 = real.schedule[t]
            sv.apply_two_qubit(psi, gate, int(q1), real.L1 + int(q2))
        amps.append(sv.inner_product(psi0, psi))
        norms.append(sv.norm_squared(psi))
        if keep_states:
            states.append(psi.amplitudes.copy())
    a = np.array(amps)
    return OracleResult(a, np.abs(a) ** 2, states, np.array(norms))


def subsystem_survival(layer, basis_index: int, Np: int, T: int) -> np.ndarray:
    """``|<k|U^t|k>|**2`` for one isolated chain, t = 0..T."""
    psi0 = sv.product_state(layer.n, basis_index)
    psi = psi0.copy()
    out = [1.0]
    for _ in range(T):
        for _ in range(Np):
            apply_floquet_period(psi, layer)
        out.append(abs(sv.inner_product(psi0, psi)) ** 2)
    return np.array(out)
