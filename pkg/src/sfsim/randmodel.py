"""Random Floquet circuit model for two disordered chains.

Each subsystem is an open chain evolved by a fixed Floquet unitary
``U = U_u U_d``: ``U_d`` is a product of per-site diagonal phase gates (the
spectra of CUE 2x2 draws) and ``U_u`` applies nearest-neighbour gates
``exp(i M / alpha)`` with GUE generators ``M`` in a random bond order.
A :class:`CircuitRealization` bundles both layers with the connecting-gate
schedule and the initial product state, and is a pure function of
``(params, master_seed, realization_index)``.
"""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import statevec as sv
from .errors import ArgumentError
from .kernels import site_diagonal

PURPOSE_TAGS = {
    "layer1": 0,
    "layer2": 1,
    "schedule": 2,
    "initial_state": 3,
    "sampling": 4,
}

RNG_ALGORITHM = (
    "numpy.random.Generator(Philox-4x64) seeded by "
    "SeedSequence(entropy=master_seed, spawn_key=(realization_index, purpose_tag)); "
    f"purpose tags {PURPOSE_TAGS}"
)


def substream(master_seed: int, realization_index: int, purpose: str) -> np.random.Generator:
    """Independent counter-based stream for one (realization, purpose) pair."""
    if not 0 <= master_seed < 2**64:
        raise ArgumentError(f"master seed {master_seed} is not a 64-bit unsigned integer")
    if realization_index < 0:
        raise ArgumentError(f"negative realization index {realization_index}")
    try:
        tag = PURPOSE_TAGS[purpose]
    except KeyError:
        raise ArgumentError(f"unknown rng purpose {purpose!r}") from None
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(realization_index, tag))
    return np.random.Generator(np.random.Philox(seq))


def _ginibre(rng: np.random.Generator, dim: int) -> np.ndarray:
    # real and imaginary parts each have variance 1/2
    return (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / math.sqrt(2)


def sample_haar_2x2(rng: np.random.Generator) -> np.ndarray:
    """Haar-random 2x2 unitary (QR of a Ginibre matrix, R-diagonal phases fixed)."""
    q, r = np.linalg.qr(_ginibre(rng, 2))
    d = np.diag(r)
    return q * (d / np.abs(d))


def cue_site_phases(rng: np.random.Generator) -> np.ndarray:
    """Eigenvalues of a CUE 2x2 draw, ordered by phase in [0, 2pi)."""
    ev = np.linalg.eigvals(sample_haar_2x2(rng))
    ev = ev / np.abs(ev)
    return ev[np.argsort(np.mod(np.angle(ev), 2 * np.pi), kind="stable")]


def sample_gue_4x4(rng: np.random.Generator) -> np.ndarray:
    """GUE matrix ``(X + X^dagger) / sqrt(2)``; unit diagonal variance."""
    x = _ginibre(rng, 4)
    m = (x + x.conj().T) / math.sqrt(2)
    # exact Hermiticity, independent of rounding in the sum above
    return np.triu(m) + np.triu(m, 1).conj().T


def bond_gate(m: np.ndarray, alpha: float) -> np.ndarray:
    """``exp(i M / alpha)`` through the Hermitian eigendecomposition of ``M``."""
    if not alpha > 0:
        raise ArgumentError(f"alpha must be positive, got {alpha}")
    w, v = np.linalg.eigh(np.asarray(m, dtype=np.complex128))
    return (v * np.exp(1j * w / alpha)) @ v.conj().T


@dataclass(frozen=True, eq=False)
class DisorderedFloquetLayer:
    """Fixed Floquet data of one chain.

    ``site_phases[q]`` holds the diagonal of ``d_q``; ``bond_gates[b]`` acts on
    qubits ``(b, b + 1)`` with ``b`` as first tensor factor; bonds are applied
    in the order listed by ``bond_order``.
    """

    n: int
    alpha: float
    site_phases: np.ndarray
    bond_gates: np.ndarray
    bond_order: np.ndarray

    @cached_property
    def diagonal(self) -> np.ndarray:
        return site_diagonal(self.site_phases)

    @classmethod
    def trivial(cls, n: int) -> DisorderedFloquetLayer:
        """Layer whose period is the identity."""
        return cls(
            n=n,
            alpha=1.0,
            site_phases=np.ones((n, 2), dtype=np.complex128),
            bond_gates=np.tile(np.eye(4, dtype=np.complex128), (n - 1, 1, 1)),
            bond_order=np.arange(n - 1, dtype=np.int64),
        )


def build_layer(n: int, alpha: float, rng: np.random.Generator) -> DisorderedFloquetLayer:
    if n < 2:
        raise ArgumentError(f"a chain needs at least 2 sites, got {n}")
    if not alpha > 0:
        raise ArgumentError(f"alpha must be positive, got {alpha}")
    phases = np.array([cue_site_phases(rng) for _ in range(n)])
    gates = np.array([bond_gate(sample_gue_4x4(rng), alpha) for _ in range(n - 1)])
    order = rng.permutation(n - 1).astype(np.int64)
    return DisorderedFloquetLayer(n, float(alpha), phases, gates, order)


def apply_floquet_period(
    state: sv.SubsystemState, layer: DisorderedFloquetLayer, offset: int | None = None
) -> sv.SubsystemState:
    """Apply one period ``U_u U_d`` to qubits ``offset .. offset + n - 1``.

    Uses the generic reference kernels; ``offset`` lets the full-register
    oracle embed a subsystem layer.
    """
    if offset is None:
        if state.num_qubits != layer.n:
            raise ArgumentError(f"state has {state.num_qubits} qubits, layer has {layer.n}")
        offset = 0
    if offset < 0 or offset + layer.n > state.num_qubits:
        raise ArgumentError("layer does not fit in the register at this offset")
    for q in range(layer.n):
        sv.apply_one_qubit(state, np.diag(layer.site_phases[q]), offset + q)
    for b in layer.bond_order:
        sv.apply_two_qubit(state, layer.bond_gates[b], offset + b, offset + b + 1)
    return state


class GateKind(enum.Enum):
    CZ = "cz"
    ISWAP = "iswap"
    CUSTOM = "custom"
    NONE = "none"


@dataclass(frozen=True)
class ModelParams:
    L1: int
    L2: int
    alpha1: float
    alpha2: float
    Np: int
    T: int
    gate_kind: GateKind
    custom_gate: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        kind = self.gate_kind
        if not isinstance(kind, GateKind):
            try:
                kind = GateKind(str(kind).lower())
            except ValueError:
                raise ArgumentError(f"unknown gate kind {self.gate_kind!r}") from None
            object.__setattr__(self, "gate_kind", kind)
        if self.L1 < 2 or self.L2 < 2:
            raise ArgumentError(f"subsystem sizes must be >= 2, got {self.L1}, {self.L2}")
        if not (self.alpha1 > 0 and self.alpha2 > 0):
            raise ArgumentError("disorder strengths must be positive")
        if self.Np < 1:
            raise ArgumentError(f"Np must be >= 1, got {self.Np}")
        if self.T < 0:
            raise ArgumentError(f"T must be >= 0, got {self.T}")
        if kind is GateKind.CUSTOM:
            if self.custom_gate is None:
                raise ArgumentError("custom gate kind requires a 4x4 matrix")
            g = np.asarray(self.custom_gate, dtype=np.complex128)
            if g.shape != (4, 4) or not np.all(np.isfinite(g)):
                raise ArgumentError("custom gate must be a finite 4x4 matrix")
            object.__setattr__(self, "custom_gate", g)


@dataclass(frozen=True, eq=False)
class CircuitRealization:
    """One reproducible experiment instance.

    ``schedule[t - 1] = (q1, q2)`` is where the connecting gate of step ``t``
    acts; ``q1`` is the first tensor factor of the gate.
    """

    params: ModelParams
    layer1: DisorderedFloquetLayer
    layer2: DisorderedFloquetLayer
    schedule: np.ndarray
    k: int
    l: int
    seed: int
    index: int = 0

    L1 = property(lambda self: self.params.L1)
    L2 = property(lambda self: self.params.L2)
    Np = property(lambda self: self.params.Np)
    T = property(lambda self: self.params.T)
    gate_kind = property(lambda self: self.params.gate_kind)

    @property
    def gate(self) -> np.ndarray | None:
        kind = self.params.gate_kind
        if kind is GateKind.CZ:
            return sv.CZ.copy()
        if kind is GateKind.ISWAP:
            return sv.ISWAP.copy()
        if kind is GateKind.CUSTOM:
            return self.params.custom_gate.copy()
        return None

    def with_gate(self, gate_kind: GateKind, custom_gate=None) -> CircuitRealization:
        """Same layers, schedule and initial state with another connecting gate."""
        p = self.params
        params = ModelParams(p.L1, p.L2, p.alpha1, p.alpha2, p.Np, p.T, gate_kind, custom_gate)
        return CircuitRealization(
            params, self.layer1, self.layer2, self.schedule, self.k, self.l, self.seed, self.index
        )

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        p = self.params
        h.update(repr((p.L1, p.L2, p.alpha1, p.alpha2, p.Np, p.T, p.gate_kind.value)).encode())
        if p.custom_gate is not None:
            h.update(p.custom_gate.tobytes())
        for layer in (self.layer1, self.layer2):
            h.update(layer.site_phases.tobytes())
            h.update(layer.bond_gates.tobytes())
            h.update(layer.bond_order.tobytes())
        h.update(self.schedule.tobytes())
        h.update(repr((self.k, self.l, self.seed, self.index)).encode())
        return h.hexdigest()

    def describe(self) -> dict:
        """JSON-friendly summary; layers are regenerated from the seed."""
        return {
            "realization_id": self.index,
            "master_seed": self.seed,
            "k": self.k,
            "l": self.l,
            "schedule": self.schedule.tolist(),
            "fingerprint": self.fingerprint(),
        }


def build_realization(params: ModelParams, seed: int, index: int = 0) -> CircuitRealization:
    layer1 = build_layer(params.L1, params.alpha1, substream(seed, index, "layer1"))
    layer2 = build_layer(params.L2, params.alpha2, substream(seed, index, "layer2"))
    sched_rng = substream(seed, index, "schedule")
    schedule = np.empty((params.T, 2), dtype=np.int64)
    for t in range(params.T):
        schedule[t, 0] = sched_rng.integers(params.L1)
        schedule[t, 1] = sched_rng.integers(params.L2)
    init_rng = substream(seed, index, "initial_state")
    k = int(init_rng.integers(1 << params.L1))
    l = int(init_rng.integers(1 << params.L2))
    return CircuitRealization(params, layer1, layer2, schedule, k, l, seed, index)
