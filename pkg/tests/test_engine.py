import math
import multiprocessing

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_matrix
from sfsim import engine as en
from sfsim import statevec as sv
from sfsim.errors import ArgumentError, IntegrityError, ResourceError
from sfsim.oracle import oracle_run, subsystem_survival
from sfsim.randmodel import GateKind, ModelParams, build_realization


def realization(L1=4, L2=4, T=3, kind="cz", seed=1, index=0, custom=None, Np=3, alpha=(2.0, 1.0)):
    p = ModelParams(L1, L2, alpha[0], alpha[1], Np, T, kind, custom)
    return build_realization(p, seed, index)


def test_decompose_cz():
    b = en.decompose(sv.CZ)
    assert b.r == 2
    (l0, r0), (l1, r1) = b.terms
    np.testing.assert_array_equal(l0, sv.P0)
    np.testing.assert_array_equal(r0, sv.I2)
    np.testing.assert_array_equal(l1, sv.P1)
    np.testing.assert_array_equal(r1, sv.Z)


def test_decompose_iswap():
    b = en.decompose(sv.ISWAP)
    expected = [
        (sv.P0, sv.P0),
        (sv.P1, sv.P1),
        (sv.SIGMA_01, 1j * sv.SIGMA_10),
        (sv.SIGMA_10, 1j * sv.SIGMA_01),
    ]
    assert b.r == 4
    for (l, r), (el, er) in zip(b.terms, expected):
        np.testing.assert_array_equal(l, el)
        np.testing.assert_array_equal(r, er)


def test_decompose_identity():
    b = en.decompose(np.eye(4))
    assert b.r == 2
    np.testing.assert_array_equal(b.terms[0][0], sv.P0)
    np.testing.assert_array_equal(b.terms[1][1], sv.I2)


def test_decompose_random_identity(rng):
    for _ in range(100):
        g = random_matrix(rng, 4)
        b = en.decompose(g)
        assert b.r == 4
        assert np.max(np.abs(b.matrix() - g)) <= 1e-14
        assert all(np.any(l) or np.any(r) for l, r in b.terms)


def test_decompose_prunes_only_exact_zeros():
    g = np.eye(4, dtype=complex)
    g[0, 2] = 1e-300
    assert en.decompose(g).r == 3


@pytest.mark.parametrize("r, T, n", [(2, 6, 64), (4, 6, 4096), (3, 0, 1), (4, 31, 4**31)])
def test_trajectory_count(r, T, n):
    assert en.trajectory_count(r, T) == n


@pytest.mark.parametrize("r, T", [(2, 63), (4, 32), (3, 40)])
def test_trajectory_count_overflow(r, T):
    with pytest.raises(ResourceError):
        en.trajectory_count(r, T)


def test_run_trajectory_t0():
    real = realization(T=0)
    assert en.run_trajectory(real, en.branches_for(real), 0) == [(0, 1 + 0j)]


def test_run_trajectory_disconnected_factorizes():
    real = realization(kind="none", T=4)
    contrib = dict(en.run_trajectory(real, en.branches_for(real), 0))
    assert sorted(contrib) == [0, 1, 2, 3, 4]
    s1 = subsystem_survival(real.layer1, real.k, real.Np, 4)
    s2 = subsystem_survival(real.layer2, real.l, real.Np, 4)
    got = np.array([abs(contrib[t]) ** 2 for t in range(5)])
    np.testing.assert_allclose(got, s1 * s2, rtol=0, atol=1e-12)


def test_run_trajectory_rejects_bad_digits():
    real = realization(T=2)
    b = en.branches_for(real)
    with pytest.raises(ArgumentError):
        en.run_trajectory(real, b, [0, 2])
    with pytest.raises(ArgumentError):
        en.run_trajectory(real, b, 4)


@pytest.mark.parametrize("kind", ["cz", "iswap"])
def test_straight_line_trajectories_match_walker(kind):
    real = realization(kind=kind, T=3)
    b = en.branches_for(real)
    walker_recs, _ = en.execute_unit(en.plan_units(real, b.r)[0])
    recs = en.decode_records(walker_recs)
    got = {(int(x["traj"]), int(x["t"])): complex(x["re"], x["im"]) for x in recs}
    expected = {}
    for j in range(b.r**3):
        for t, c in en.run_trajectory(real, b, j):
            expected[(j, t)] = c
    assert got.keys() == expected.keys()
    for key, c in expected.items():
        assert got[key] == pytest.approx(c, abs=1e-13)
    oracle = oracle_run(real)
    for t in range(4):
        total = sum(c for (j, tt), c in expected.items() if tt == t)
        assert total == pytest.approx(oracle.amplitudes[t], abs=1e-12)


@pytest.mark.parametrize("kind, r", [("cz", 2), ("iswap", 4), ("none", 1)])
def test_canonical_prefix_counts(kind, r):
    real = realization(kind=kind, T=4, L1=3, L2=3)
    buf, stats = en.execute_unit(en.plan_units(real, r)[0])
    recs = en.decode_records(buf)
    for t in range(5):
        assert np.count_nonzero(recs["t"] == t) == r**t
    assert stats.trajectories == r**4
    assert stats.nodes == sum(r ** (t - 1) for t in range(1, 5))


def test_reduce_single_trajectory():
    real = realization(kind="none", T=3)
    series = en.run_survival(real)
    contrib = dict(en.run_trajectory(real, en.branches_for(real), 0))
    for t in range(4):
        assert series.amplitudes[t] == pytest.approx(contrib[t], abs=1e-14)
    assert series.values[0] == 1.0


def test_reduce_integrity_errors():
    real = realization(kind="cz", T=2)
    buf, _ = en.execute_unit(en.plan_units(real, 2)[0])
    recs = en.decode_records(buf)
    with pytest.raises(IntegrityError):
        en.reduce_survival(recs[:-1], 2, 2)
    with pytest.raises(IntegrityError):
        en.reduce_survival(np.concatenate([recs, recs[-1:]]), 2, 2)
    bad = recs.copy()
    # index 1 is not a multiple of r**(T - 1) = 2
    last = np.flatnonzero(bad["t"] == 1)[-1]
    bad["traj"][last] = 1
    with pytest.raises(IntegrityError):
        en.reduce_survival(bad, 2, 2)
    other = recs.copy()
    other["rid"][0] = 7
    with pytest.raises(IntegrityError):
        en.reduce_survival(other, 2, 2)


def test_reduce_order_independent(rng):
    real = realization(kind="iswap", T=3)
    buf, _ = en.execute_unit(en.plan_units(real, 4)[0])
    recs = en.decode_records(buf)
    a = en.reduce_survival(recs, 3, 4)
    b = en.reduce_survival(recs[rng.permutation(recs.size)], 3, 4)
    assert a.amplitudes.tobytes() == b.amplitudes.tobytes()


def test_pairwise_sum(rng):
    x = rng.standard_normal(37) + 1j * rng.standard_normal(37)
    assert en.pairwise_sum(x) == pytest.approx(complex(math.fsum(x.real), math.fsum(x.imag)), abs=1e-13)
    assert en.pairwise_sum([]) == 0
    assert en.pairwise_sum([2 + 1j]) == 2 + 1j
    # fixed tree: ((a+b)+(c+d))+e
    v = np.array([1e16, 1.0, -1e16, 1.0, 3.0], dtype=complex)
    assert en.pairwise_sum(v) == ((v[0] + v[1]) + (v[2] + v[3])) + v[4]


def test_record_format():
    assert en.RECORD_SIZE == 34
    rec = np.zeros(2, dtype=en.RECORD_DTYPE)
    rec[0] = (3, 2**63 - 1, 65535, 0.5, -1.25)
    buf = en.encode_records(rec)
    assert len(buf) == 68
    assert buf[:8] == (3).to_bytes(8, "little")
    assert buf[8:16] == (2**63 - 1).to_bytes(8, "little")
    assert buf[16:18] == (65535).to_bytes(2, "little")
    assert np.array_equal(en.decode_records(buf), rec)
    with pytest.raises(IntegrityError):
        en.decode_records(buf[:-1])


@pytest.mark.parametrize("kind", ["cz", "iswap"])
def test_partition_invariance(kind):
    real = realization(kind=kind, T=4, L1=3, L2=4)
    ref = en.run_survival(real)
    for d in range(5):
        s = en.run_survival(real, split_depth=d)
        assert s.amplitudes.tobytes() == ref.amplitudes.tobytes()
    with multiprocessing.get_context("fork").Pool(3) as pool:
        s = en.run_survival(real, split_depth=2, pool=pool)
    assert s.amplitudes.tobytes() == ref.amplitudes.tobytes()


def test_partition_units_ownership():
    real = realization(kind="cz", T=3)
    units = en.plan_units(real, 2, 2)
    assert [u.prefix for u in units] == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert [u.emit_from for u in units] == [0, 2, 1, 2]
    with pytest.raises(ArgumentError):
        en.plan_units(real, 2, 4)


def test_sampled_fraction_one_is_exact():
    real = realization(kind="iswap", T=3)
    a = en.run_survival(real)
    b = en.run_survival(real, mode="sampled", fraction=1.0)
    assert a.amplitudes.tobytes() == b.amplitudes.tobytes()


def test_sampled_subset():
    real = realization(kind="iswap", T=4)
    s = en.run_survival(real, mode="sampled", fraction=0.3)
    assert s.stats.trajectories == math.ceil(0.3 * 256)
    assert not s.exact
    again = en.run_survival(real, mode="sampled", fraction=0.3)
    assert s.amplitudes.tobytes() == again.amplitudes.tobytes()
    split = en.run_survival(real, mode="sampled", fraction=0.3, split_depth=2)
    assert s.amplitudes.tobytes() == split.amplitudes.tobytes()
    assert s.values[0] == 1.0
    scaled = en.run_survival(real, mode="sampled", fraction=0.3, rescale=True)
    assert abs(scaled.amplitudes[-1]) >= abs(s.amplitudes[-1])


def test_sampled_partial_sum_matches_subset():
    real = realization(kind="cz", T=4)
    b = en.branches_for(real)
    rng = np.random.default_rng(5)
    s = en.run_survival(real, mode="sampled", fraction=0.4, rng=rng)
    chosen = np.random.default_rng(5).permutation(16)[:7]
    # full-depth term of each chosen trajectory, from the straight-line reference
    total = sum(dict(en.run_trajectory(real, b, int(j)))[4] for j in chosen)
    assert s.amplitudes[4] == pytest.approx(total, abs=1e-13)


def test_sampled_subsets_are_nested():
    g = np.random.default_rng(3)
    for total, m_small, m_big in ((64, 10, 40), ((1 << 24) + 5, 50, 300)):
        small = en.sample_trajectories(np.random.default_rng(9), total, m_small)
        big = en.sample_trajectories(np.random.default_rng(9), total, m_big)
        assert len(set(big.tolist())) == m_big
        assert set(small.tolist()) <= set(big.tolist())
        assert big.min() >= 0 and big.max() < total
    counts = np.zeros(8)
    for _ in range(4000):
        counts[en.sample_trajectories(g, 8, 3)] += 1
    np.testing.assert_allclose(counts / 4000, 3 / 8, atol=0.03)


def test_budget_and_mode_errors():
    real = realization(kind="iswap", T=4)
    with pytest.raises(ResourceError) as info:
        en.run_survival(real, budget=100)
    assert info.value.required == 256
    with pytest.raises(ResourceError):
        en.run_survival(real, mode="sampled", fraction=0.5, budget=100)
    with pytest.raises(ArgumentError):
        en.run_survival(real, mode="sampled", fraction=0.0)
    with pytest.raises(ArgumentError):
        en.run_survival(real, mode="fast")


def test_memory_bound():
    real = realization(kind="cz", T=6, L1=6, L2=6)
    s = en.run_survival(real)
    assert 0 < s.stats.peak_state_complex <= 2 * (6 + 1) * 2**6


def test_reconstruct_t0():
    real = realization(T=2)
    b = en.branches_for(real)
    assert en.reconstruct_amplitude(real, b, real.k, real.l, 0) == 1
    assert en.reconstruct_amplitude(real, b, (real.k + 1) % 16, real.l, 0) == 0
    with pytest.raises(ArgumentError):
        en.reconstruct_amplitude(real, b, 16, 0, 1)


def test_reconstruct_norm_and_oracle():
    real = realization(kind="cz", T=3)
    b = en.branches_for(real)
    oracle = oracle_run(real, keep_states=True)
    for t in range(4):
        full = en.reconstruct_state(real, b, t)
        assert abs(np.vdot(full, full).real - 1) <= 1e-10
        np.testing.assert_allclose(full, oracle.states[t], rtol=0, atol=1e-12)

    real = realization(kind="iswap", T=2, seed=8)
    b = en.branches_for(real)
    oracle = oracle_run(real, keep_states=True)
    for k2, l2 in [(0, 0), (3, 9), (real.k, real.l), (15, 15)]:
        got = en.reconstruct_amplitude(real, b, k2, l2, 2)
        assert got == pytest.approx(oracle.states[2][k2 + 16 * l2], abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    L1=st.integers(2, 4),
    L2=st.integers(2, 4),
    T=st.integers(0, 3),
)
def test_custom_gate_path_sum_matches_oracle(seed, L1, L2, T):
    g = np.random.default_rng(seed)
    gate = random_matrix(g, 4)
    gate /= np.linalg.norm(gate, 2)
    real = build_realization(ModelParams(L1, L2, 1.0, 3.0, 2, T, "custom", gate), seed)
    sf = en.run_survival(real)
    ref = oracle_run(real)
    assert np.max(np.abs(sf.values - ref.values)) <= 1e-10
    np.testing.assert_allclose(sf.amplitudes, ref.amplitudes, rtol=0, atol=1e-12)


def test_disconnected_is_product():
    real = realization(kind="cz", T=5)
    s = en.run_survival(real.with_gate(GateKind.NONE))
    s1 = subsystem_survival(real.layer1, real.k, real.Np, 5)
    s2 = subsystem_survival(real.layer2, real.l, real.Np, 5)
    np.testing.assert_allclose(s.values, s1 * s2, rtol=0, atol=1e-12)
