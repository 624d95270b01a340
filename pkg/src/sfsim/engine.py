"""Schroedinger-Feynman path summation over cut connecting gates.

Every connecting gate is split into ``r`` product terms ``left_s (x) right_s``
(left on subsystem 1, right on subsystem 2). A trajectory picks one term per
time step; its index is the base-``r`` number whose most significant digit
is the step-1 choice, so each subtree of the branch tree is a contiguous
index range.

Trajectories are walked depth first. Each depth owns one checkpoint pair of
subsystem buffers, evolved and branched in place, so a worker holds at most
``T`` pairs regardless of ``r``. A node at depth ``t`` with prefix ``p``
emits its contribution under the canonical trajectory index
``p * r**(T - t)`` (all later digits zero), which makes every per-step sum
well defined when whole subtrees live on different workers.

Contributions travel as packed little-endian records (:data:`RECORD_DTYPE`)
and are summed in ascending index order by a fixed pairwise tree, so the
result does not depend on how the index space was partitioned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import statevec as sv
from .errors import ArgumentError, IntegrityError, ResourceError
from .kernels import amplitude_after_1q, apply_1q, evolve_periods
from .randmodel import CircuitRealization, GateKind, apply_floquet_period, substream

DEFAULT_TRAJECTORY_BUDGET = 1 << 24
_INDEX_LIMIT = 1 << 63

# realization id, trajectory index, time step, contribution (re, im)
RECORD_DTYPE = np.dtype(
    [("rid", "<u8"), ("traj", "<u8"), ("t", "<u2"), ("re", "<f8"), ("im", "<f8")]
)
RECORD_SIZE = RECORD_DTYPE.itemsize


@dataclass
class BranchSet:
    """Terms ``(left, right)`` with ``sum_s left_s (x) right_s`` equal to the gate."""

    terms: list[tuple[np.ndarray, np.ndarray]]

    @property
    def r(self) -> int:
        return len(self.terms)

    def matrix(self) -> np.ndarray:
        return sum(np.kron(a, b) for a, b in self.terms)


def decompose(gate) -> BranchSet:
    """Split a 4x4 gate into its 2x2 block terms, dropping exactly-zero blocks."""
    g = np.asarray(gate, dtype=np.complex128)
    if g.shape != (4, 4):
        raise ArgumentError(f"gate has shape {g.shape}, expected (4, 4)")
    candidates = [
        (sv.P0, g[0:2, 0:2]),
        (sv.P1, g[2:4, 2:4]),
        (sv.SIGMA_01, g[0:2, 2:4]),
        (sv.SIGMA_10, g[2:4, 0:2]),
    ]
    terms = [(a.copy(), np.ascontiguousarray(b)) for a, b in candidates if np.any(b != 0)]
    if not terms:
        terms = [(sv.P0.copy(), np.zeros((2, 2), dtype=np.complex128))]
    return BranchSet(terms)


def branches_for(real: CircuitRealization) -> BranchSet:
    """Branch set for the realization's connecting gate (one identity term if none)."""
    if real.gate_kind is GateKind.NONE:
        return BranchSet([(sv.I2.copy(), sv.I2.copy())])
    return decompose(real.gate)


def trajectory_count(r: int, T: int) -> int:
    if r < 1 or T < 0:
        raise ArgumentError(f"need r >= 1 and T >= 0, got r={r}, T={T}")
    count = r**T
    if count >= _INDEX_LIMIT:
        raise ResourceError(
            f"{r}**{T} trajectories do not fit a 63-bit index", required=count, limit=_INDEX_LIMIT - 1
        )
    return count


def _digits(traj: int, r: int, T: int) -> list[int]:
    out = []
    for _ in range(T):
        traj, d = divmod(traj, r)
        out.append(d)
    return out[::-1]


def run_trajectory(
    real: CircuitRealization, branches: BranchSet, traj: int | list[int]
) -> list[tuple[int, complex]]:
    """Evolve one full trajectory from scratch and return its owned ``(t, c(t))``.

    Straight-line reference for the depth-first walker; uses the generic
    state-vector kernels.
    """
    T, r = real.T, branches.r
    if branches.r > 1 and real.gate_kind is GateKind.NONE:
        raise ArgumentError("disconnected realization takes a single-term branch set")
    digits = list(traj) if not isinstance(traj, (int, np.integer)) else None
    if digits is None:
        if not 0 <= traj < trajectory_count(r, T):
            raise ArgumentError(f"trajectory index {traj} out of range")
        digits = _digits(int(traj), r, T)
    if len(digits) != T or any(not 0 <= d < r for d in digits):
        raise ArgumentError(f"trajectory digits {digits} invalid for r={r}, T={T}")

    s1 = sv.product_state(real.L1, real.k)
    s2 = sv.product_state(real.L2, real.l)
    out = []
    if not any(digits):
        out.append((0, 1 + 0j))
    for t in range(1, T + 1):
        for _ in range(real.Np):
            apply_floquet_period(s1, real.layer1)
            apply_floquet_period(s2, real.layer2)
        left, right = branches.terms[digits[t - 1]]
        q1, q2 = real.schedule[t - 1]
        sv.apply_one_qubit(s1, left, int(q1))
        sv.apply_one_qubit(s2, right, int(q2))
        if not any(digits[t:]):
            out.append((t, sv.amplitude(s1, real.k) * sv.amplitude(s2, real.l)))
    return out


@dataclass
class RunStats:
    trajectories: int = 0
    nodes: int = 0
    peak_state_complex: int = 0

    def merge(self, other: RunStats) -> None:
        self.trajectories += other.trajectories
        self.nodes += other.nodes
        self.peak_state_complex = max(self.peak_state_complex, other.peak_state_complex)


class _StatePool:
    """Per-depth checkpoint buffers, with an allocation counter."""

    def __init__(self, dim1: int, dim2: int, stats: RunStats):
        self.dims = (dim1, dim2)
        self.pairs: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self.live = 0
        self.stats = stats

    def pair(self, depth: int) -> tuple[np.ndarray, np.ndarray]:
        p = self.pairs.get(depth)
        if p is None:
            p = (np.empty(self.dims[0], np.complex128), np.empty(self.dims[1], np.complex128))
            self.pairs[depth] = p
            self.live += self.dims[0] + self.dims[1]
            self.stats.peak_state_complex = max(self.stats.peak_state_complex, self.live)
        return p


def _is_identity(op: np.ndarray) -> bool:
    return bool(np.array_equal(op, sv.I2))


class _Walker:
    def __init__(self, real: CircuitRealization, branches: BranchSet, sample=None):
        self.real = real
        self.r = branches.r
        self.T = real.T
        self.ops = [
            (np.ascontiguousarray(a), np.ascontiguousarray(b), _is_identity(a), _is_identity(b))
            for a, b in branches.terms
        ]
        self.sched = [(int(a), int(b)) for a, b in real.schedule]
        self.sample = sample
        self.stats = RunStats()
        self.pool = _StatePool(1 << real.L1, 1 << real.L2, self.stats)
        self.traj: list[int] = []
        self.t: list[int] = []
        self.c: list[complex] = []
        l1, l2 = real.layer1, real.layer2
        self.evolve_args = (
            (l1.diagonal, l1.bond_gates, l1.bond_order),
            (l2.diagonal, l2.bond_gates, l2.bond_order),
        )

    def _emit(self, prefix: int, t: int, c: complex) -> None:
        self.traj.append(prefix * self.r ** (self.T - t))
        self.t.append(t)
        self.c.append(c)

    def _evolve(self, pair) -> None:
        np_ = self.real.Np
        evolve_periods(pair[0], *self.evolve_args[0], np_)
        evolve_periods(pair[1], *self.evolve_args[1], np_)
        self.stats.nodes += 1

    def _contribution(self, pair, s: int, t: int) -> complex:
        left, right, left_id, right_id = self.ops[s]
        q1, q2 = self.sched[t - 1]
        k, l = self.real.k, self.real.l
        a = pair[0][k] if left_id else amplitude_after_1q(pair[0], left, q1, k)
        b = pair[1][l] if right_id else amplitude_after_1q(pair[1], right, q2, l)
        return complex(a * b)

    def _branch(self, pair, s: int, t: int) -> None:
        left, right, left_id, right_id = self.ops[s]
        q1, q2 = self.sched[t - 1]
        if not left_id:
            apply_1q(pair[0], left, q1)
        if not right_id:
            apply_1q(pair[1], right, q2)

    def _has_samples(self, prefix: int, t: int) -> bool:
        if self.sample is None:
            return True
        width = self.r ** (self.T - t)
        lo = np.searchsorted(self.sample, prefix * width)
        return lo < self.sample.size and self.sample[lo] < (prefix + 1) * width

    def run_unit(self, prefix_digits: list[int], emit_from: int) -> None:
        """Walk the subtree below ``prefix_digits``.

        Ancestors at depth ``t < emit_from`` are owned by an earlier unit and
        are evolved but not emitted.
        """
        pair = self.pool.pair(0)
        pair[0][:] = 0
        pair[1][:] = 0
        pair[0][self.real.k] = 1
        pair[1][self.real.l] = 1
        if emit_from == 0:
            self._emit(0, 0, 1 + 0j)
        prefix = 0
        if not prefix_digits and self.T == 0:
            self.stats.trajectories += 1
            return
        for t, s in enumerate(prefix_digits, start=1):
            self._evolve(pair)
            prefix = prefix * self.r + s
            if t >= emit_from:
                self._emit(prefix, t, self._contribution(pair, s, t))
            if t == self.T:
                self.stats.trajectories += 1
                return
            self._branch(pair, s, t)
        self._dfs(pair, len(prefix_digits), prefix)

    def _dfs(self, pair, depth: int, prefix: int) -> None:
        self._evolve(pair)
        t = depth + 1
        for s in range(self.r):
            child_prefix = prefix * self.r + s
            if not self._has_samples(child_prefix, t):
                continue
            self._emit(child_prefix, t, self._contribution(pair, s, t))
            if t == self.T:
                self.stats.trajectories += 1
                continue
            child = self.pool.pair(t)
            np.copyto(child[0], pair[0])
            np.copyto(child[1], pair[1])
            self._branch(child, s, t)
            self._dfs(child, t, child_prefix)

    def records(self) -> np.ndarray:
        rec = np.empty(len(self.c), dtype=RECORD_DTYPE)
        rec["rid"] = self.real.index
        rec["traj"] = self.traj
        rec["t"] = self.t
        c = np.asarray(self.c, dtype=np.complex128)
        rec["re"] = c.real
        rec["im"] = c.imag
        return rec


def encode_records(records: np.ndarray) -> bytes:
    return np.ascontiguousarray(records, dtype=RECORD_DTYPE).tobytes()


def decode_records(buf: bytes) -> np.ndarray:
    if len(buf) % RECORD_SIZE:
        raise IntegrityError(f"record stream length {len(buf)} is not a multiple of {RECORD_SIZE}")
    return np.frombuffer(buf, dtype=RECORD_DTYPE).copy()


@dataclass(frozen=True)
class WorkUnit:
    """One subtree: the realization, a digit prefix, and the first depth it emits."""

    real: CircuitRealization
    prefix: tuple[int, ...]
    emit_from: int
    sample: np.ndarray | None = None


def execute_unit(unit: WorkUnit) -> tuple[bytes, RunStats]:
    """Worker entry point: run one subtree, return packed records and stats."""
    walker = _Walker(unit.real, branches_for(unit.real), unit.sample)
    walker.run_unit(list(unit.prefix), unit.emit_from)
    return encode_records(walker.records()), walker.stats


def pairwise_sum(values: np.ndarray) -> complex:
    """Sum in the given order with a fixed adjacent-pair tree."""
    x = np.asarray(values, dtype=np.complex128)
    if x.size == 0:
        return 0j
    while x.size > 1:
        tail = x[-1:] if x.size % 2 else x[:0]
        x = np.concatenate([x[0 : x.size - 1 : 2] + x[1 : x.size - tail.size : 2], tail])
    return complex(x[0])


@dataclass
class SurvivalSeries:
    amplitudes: np.ndarray
    values: np.ndarray
    exact: bool = True
    stats: RunStats = field(default_factory=RunStats)

    @property
    def T(self) -> int:
        return self.amplitudes.size - 1


def reduce_survival(
    records: np.ndarray, T: int, r: int, exact: bool = True, rescale: bool = False
) -> SurvivalSeries:
    """Sum per-step contributions into ``a(t)`` and ``L(t) = |a(t)|**2``.

    Records from a single realization, in any arrival order. In exact mode the
    contribution set must be complete (``r**t`` canonical indices at step t).
    """
    rec = np.asarray(records, dtype=RECORD_DTYPE)
    if rec.size and np.unique(rec["rid"]).size > 1:
        raise IntegrityError("records from several realizations passed to one reduction")
    order = np.lexsort((rec["traj"], rec["t"]))
    rec = rec[order]
    amps = np.zeros(T + 1, dtype=np.complex128)
    bounds = np.searchsorted(rec["t"], np.arange(T + 2))
    for t in range(T + 1):
        chunk = rec[bounds[t] : bounds[t + 1]]
        idx = chunk["traj"]
        if idx.size > 1 and np.any(idx[1:] == idx[:-1]):
            raise IntegrityError(f"duplicate contributions at t={t}")
        stride = r ** (T - t)
        if np.any(idx % stride):
            raise IntegrityError(f"non-canonical trajectory index at t={t}")
        if exact:
            expected = r**t
            if idx.size != expected or not np.array_equal(idx // stride, np.arange(expected)):
                raise IntegrityError(
                    f"t={t}: have {idx.size} contributions, expected {expected}"
                )
        a = pairwise_sum(chunk["re"] + 1j * chunk["im"])
        if rescale and not exact and idx.size:
            a *= r**t / idx.size
        amps[t] = a
    if bounds[-1] != rec.size:
        raise IntegrityError(f"records with t > {T}")
    return SurvivalSeries(amps, np.abs(amps) ** 2, exact=exact)


def plan_units(
    real: CircuitRealization, r: int, split_depth: int = 0, sample: np.ndarray | None = None
) -> list[WorkUnit]:
    """Partition the trajectory space into subtrees of depth ``split_depth``."""
    T = real.T
    if not 0 <= split_depth <= T:
        raise ArgumentError(f"split depth {split_depth} outside [0, {T}]")
    width = r ** (T - split_depth)
    if sample is None:
        prefixes = range(r**split_depth)
    else:
        prefixes = np.unique(sample // width).tolist()
    units = []
    prev = None
    for p in prefixes:
        digits = tuple(_digits(int(p), r, split_depth))
        if prev is None:
            emit_from = 0
        else:
            common = 0
            while common < split_depth and digits[common] == prev[common]:
                common += 1
            emit_from = common + 1
        units.append(WorkUnit(real, digits, emit_from, sample))
        prev = digits
    return units


_PERMUTATION_LIMIT = 1 << 24


def sample_trajectories(rng: np.random.Generator, total: int, m: int) -> np.ndarray:
    """First ``m`` entries of a random ordering of ``range(total)``.

    Any ``m`` gives a uniformly random subset, and for a fixed stream the
    subsets are nested in ``m``, so larger fractions refine smaller ones.
    """
    if total <= _PERMUTATION_LIMIT:
        return rng.permutation(total)[:m].astype(np.int64)
    # first occurrences in an i.i.d. stream: same law, no O(total) buffer
    seen: dict[int, None] = {}
    while len(seen) < m:
        for x in rng.integers(total, size=max(1024, m - len(seen))).tolist():
            if len(seen) == m:
                break
            seen.setdefault(x)
    return np.fromiter(seen, dtype=np.int64, count=m)


def prepare_units(
    real: CircuitRealization,
    mode: str = "exact",
    fraction: float = 1.0,
    rng: np.random.Generator | None = None,
    split_depth: int = 0,
    budget: int = DEFAULT_TRAJECTORY_BUDGET,
) -> tuple[list[WorkUnit], int, bool]:
    """Work units of one realization, its branch count, and whether it is exact."""
    branches = branches_for(real)
    r, T = branches.r, real.T
    total = trajectory_count(r, T)
    sample = None
    if mode == "exact":
        if total > budget:
            raise ResourceError(
                f"exact run needs {total} trajectories, budget is {budget}", required=total, limit=budget
            )
    elif mode == "sampled":
        if not 0 < fraction <= 1:
            raise ArgumentError(f"fraction must be in (0, 1], got {fraction}")
        m = math.ceil(fraction * total)
        if m > budget:
            raise ResourceError(
                f"sampled run needs {m} trajectories, budget is {budget}", required=m, limit=budget
            )
        if rng is None:
            rng = substream(real.seed, real.index, "sampling")
        if m < total:
            sample = np.sort(sample_trajectories(rng, total, m))
    else:
        raise ArgumentError(f"unknown mode {mode!r}")
    return plan_units(real, r, split_depth, sample), r, sample is None


def collect(results, T: int, r: int, exact: bool, rescale: bool = False) -> SurvivalSeries:
    """Reduce ``execute_unit`` outputs of one realization."""
    stats = RunStats()
    for _, st in results:
        stats.merge(st)
    records = decode_records(b"".join(buf for buf, _ in results))
    series = reduce_survival(records, T, r, exact=exact, rescale=rescale)
    series.stats = stats
    return series


def run_survival(
    real: CircuitRealization,
    mode: str = "exact",
    fraction: float = 1.0,
    rng: np.random.Generator | None = None,
    split_depth: int = 0,
    pool=None,
    budget: int = DEFAULT_TRAJECTORY_BUDGET,
    rescale: bool = False,
) -> SurvivalSeries:
    """Survival amplitude series of one realization.

    ``mode="sampled"`` keeps a uniformly random subset of
    ``ceil(fraction * r**T)`` full-depth trajectories; at every step the
    distinct prefixes of that subset are summed, without rescaling unless
    ``rescale`` is set. ``pool`` is anything with an ordered ``map``; subtrees
    of depth ``split_depth`` are the work units.
    """
    units, r, exact = prepare_units(real, mode, fraction, rng, split_depth, budget)
    mapper = pool.map if pool is not None else map
    return collect(list(mapper(execute_unit, units)), real.T, r, exact, rescale)


def _prefix_states(real: CircuitRealization, branches: BranchSet, t: int):
    """Yield post-gate subsystem states of every length-``t`` prefix."""
    if not 0 <= t <= real.T:
        raise ArgumentError(f"t={t} outside [0, {real.T}]")
    walker = _Walker(real, branches)
    start = (
        sv.product_state(real.L1, real.k).amplitudes,
        sv.product_state(real.L2, real.l).amplitudes,
    )

    def rec(pair, depth):
        if depth == t:
            yield pair
            return
        pair = (pair[0].copy(), pair[1].copy())
        walker._evolve(pair)
        for s in range(branches.r):
            child = (pair[0].copy(), pair[1].copy())
            walker._branch(child, s, depth + 1)
            yield from rec(child, depth + 1)

    yield from rec(start, 0)


def reconstruct_state(real: CircuitRealization, branches: BranchSet, t: int) -> np.ndarray:
    """Full ``2**L`` state after ``t`` steps, index ``k' + 2**L1 * l'``. Small systems only."""
    full = np.zeros((1 << real.L2, 1 << real.L1), dtype=np.complex128)
    for s1, s2 in _prefix_states(real, branches, t):
        full += np.outer(s2, s1)
    return full.ravel()


def reconstruct_amplitude(
    real: CircuitRealization, branches: BranchSet, k2: int, l2: int, t: int
) -> complex:
    """Coefficient of ``|k2>|l2>`` after ``t`` steps, summed over all prefixes."""
    if not 0 <= k2 < (1 << real.L1) or not 0 <= l2 < (1 << real.L2):
        raise ArgumentError(f"basis pair ({k2}, {l2}) out of range")
    return complex(sum(s1[k2] * s2[l2] for s1, s2 in _prefix_states(real, branches, t)))
