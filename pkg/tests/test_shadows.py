import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shadowpf.clifford import collect_shadow, materialize_snapshot
from shadowpf.errors import InputError
from shadowpf.exactsim import StateVector, basis_state, exact_gibbs, overlap_sq
from shadowpf.pauli import Hamiltonian, ham_ising, to_matrix
from shadowpf.shadows import (
    MMConfig,
    SnapshotEvaluator,
    estimate_observable,
    median_of_means,
    overlap_global,
    overlap_local,
    product_mean_bound_check,
    snapshot_pair_trace,
)


def random_state(n, seed):
    rng = np.random.default_rng(seed)
    amps = rng.normal(size=2 ** n) + 1j * rng.normal(size=2 ** n)
    amps /= np.linalg.norm(amps)
    return StateVector(n, amps)


# ---------------------------------------------------------------------------
# median of means


def test_mm_k1_is_mean():
    vals = [1.0, 2.0, 3.5, -1.0]
    assert median_of_means(vals, 1) == pytest.approx(np.mean(vals))


def test_mm_outlier_rejection():
    assert median_of_means([0, 0, 0, 100, 0, 0], 3) == 0.0


def test_mm_truncates_remainder():
    # groups of 2 from the first 6 entries; the trailing 7th is dropped
    vals = [1, 1, 2, 2, 3, 3, 999]
    assert median_of_means(vals, 3) == 2.0


def test_mm_even_k_averages_middle():
    vals = [1.0, 2.0, 3.0, 10.0]
    assert median_of_means(vals, 4) == pytest.approx(2.5)


def test_mm_errors():
    with pytest.raises(InputError):
        median_of_means([], 1)
    with pytest.raises(InputError):
        median_of_means([1.0], 2)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50))
@settings(max_examples=50, deadline=None)
def test_mm_k1_matches_mean_property(vals):
    assert median_of_means(vals, 1) == pytest.approx(np.mean(vals), rel=1e-9, abs=1e-9)


def test_mm_beats_mean_on_heavy_tails():
    rng = np.random.default_rng(123)
    true_mean = 0.0
    wins = 0
    trials = 100
    for _ in range(trials):
        # symmetric heavy-tailed: standard Cauchy-like mixture
        base = rng.normal(size=400)
        spikes = rng.standard_cauchy(size=400) * 5
        mask = rng.random(400) < 0.05
        x = np.where(mask, spikes, base)
        if abs(median_of_means(x, 20) - true_mean) < abs(np.mean(x) - true_mean):
            wins += 1
    assert wins >= 70


# ---------------------------------------------------------------------------
# Theorem-1 style sample sizing


def test_product_bound_arithmetic():
    assert product_mean_bound_check([15.0] * 4, epsilon1=0.5, delta1=0.1) == 4800
    assert product_mean_bound_check([1.0], epsilon1=1.0, delta1=1.0) == 2


def test_product_bound_errors():
    with pytest.raises(InputError):
        product_mean_bound_check([2.0], epsilon1=0.0, delta1=0.1)
    with pytest.raises(InputError):
        product_mean_bound_check([2.0], epsilon1=0.5, delta1=-1)


def test_product_bound_coverage_monte_carlo():
    # three bounded-relative-variance factors; coverage of the (1 +- eps)
    # interval at the returned sample size should beat 1 - delta
    rng = np.random.default_rng(7)
    eps, delta = 0.5, 0.2
    rel_var = 1.0 + 1.0 / 3.0  # uniform on [0, 2]: E=1, E[X^2]=4/3
    m = product_mean_bound_check([rel_var] * 3, eps, delta)
    hits = 0
    trials = 500
    for _ in range(trials):
        est = 1.0
        for _ in range(3):
            est *= rng.uniform(0, 2, size=m).mean()
        if 1 - eps <= est <= 1 + eps:
            hits += 1
    assert hits / trials >= 1 - delta


# ---------------------------------------------------------------------------
# closed-form pairwise traces


def test_pair_trace_matches_dense_materialization():
    psi = random_state(2, 1)
    phi = random_state(2, 2)
    sp = collect_shadow(psi, 100, master_seed=10)
    sf = collect_shadow(phi, 100, master_seed=11)
    for a, b in zip(sp.snapshots, sf.snapshots):
        dense = np.trace(materialize_snapshot(a) @ materialize_snapshot(b)).real
        closed = snapshot_pair_trace(a, b, sp.block_sizes)
        assert closed == pytest.approx(dense, abs=1e-10)


def test_pair_trace_matches_dense_local_blocks():
    psi = random_state(3, 3)
    phi = random_state(3, 4)
    sp = collect_shadow(psi, 60, master_seed=12, block_size=1)
    sf = collect_shadow(phi, 60, master_seed=13, block_size=1)
    for a, b in zip(sp.snapshots, sf.snapshots):
        dense = np.trace(
            materialize_snapshot(a, sp.block_sizes)
            @ materialize_snapshot(b, sf.block_sizes)
        ).real
        closed = snapshot_pair_trace(a, b, sp.block_sizes)
        assert closed == pytest.approx(dense, abs=1e-10)


# ---------------------------------------------------------------------------
# overlap estimators


def _all_single_qubit_cliffords():
    from itertools import product as iproduct

    from shadowpf.clifford import CliffordElement, _symplectic_from_index

    elems = []
    for idx in range(6):
        m = _symplectic_from_index(idx, 1)
        x = m[:, :1].astype(np.uint8)
        z = m[:, 1:].astype(np.uint8)
        for s0, s1 in iproduct((0, 1), (0, 1)):
            r = (((x & z).sum(axis=1) + 2 * np.array([s0, s1])) % 4).astype(np.uint8)
            elems.append(CliffordElement(1, x, z, r))
    return elems


def test_matched_estimator_exactly_unbiased_by_enumeration():
    # Born-weighted sum over the full single-qubit Clifford group on both
    # sides reproduces |<psi|phi>|^2 to machine precision
    from shadowpf.clifford import Snapshot

    elems = _all_single_qubit_cliffords()
    psi = random_state(1, 15)
    phi = random_state(1, 16)
    target = overlap_sq(psi, phi)
    total = 0.0
    for u1 in elems:
        p1 = np.abs(u1.apply_to(psi).amplitudes) ** 2
        for b1 in (0, 1):
            if p1[b1] < 1e-15:
                continue
            s1 = Snapshot(u1, np.array([b1], dtype=np.uint8), 0)
            for u2 in elems:
                p2 = np.abs(u2.apply_to(phi).amplitudes) ** 2
                for b2 in (0, 1):
                    if p2[b2] < 1e-15:
                        continue
                    s2 = Snapshot(u2, np.array([b2], dtype=np.uint8), 0)
                    w = (p1[b1] / len(elems)) * (p2[b2] / len(elems))
                    total += w * snapshot_pair_trace(s1, s2, (1,))
    assert total == pytest.approx(target, abs=1e-10)


def test_local_inversion_exactly_unbiased_by_enumeration():
    from shadowpf.clifford import CliffordElement, Snapshot

    elems = _all_single_qubit_cliffords()
    psi = basis_state(2, 0)
    acc = np.zeros((4, 4), dtype=complex)
    for u1 in elems:
        for u2 in elems:
            u = CliffordElement.direct_sum([u1, u2])
            probs = np.abs(u.apply_to(psi).amplitudes) ** 2
            for b in range(4):
                if probs[b] < 1e-15:
                    continue
                snap = Snapshot(u, np.array([(b >> 1) & 1, b & 1], dtype=np.uint8), 0)
                acc += probs[b] / len(elems) ** 2 * materialize_snapshot(snap, (1, 1))
    rho = np.zeros((4, 4))
    rho[0, 0] = 1
    assert np.abs(acc - rho).max() < 1e-10


def test_overlap_global_same_state():
    # heavy-tailed matched estimator: wide statistical band; the all-pairs
    # variant concentrates much faster on the same budget
    psi = random_state(3, 5)
    sp = collect_shadow(psi, 800, master_seed=20)
    sf = collect_shadow(psi, 800, master_seed=21)
    assert abs(overlap_global(sp, sf) - 1.0) < 1.0
    assert abs(overlap_global(sp, sf, pairing="all_pairs") - 1.0) < 0.2


def test_overlap_global_orthogonal_states():
    psi = basis_state(3, 0)
    phi = basis_state(3, 7)
    vals = []
    for trial in range(10):
        sp = collect_shadow(psi, 300, master_seed=100 + trial)
        sf = collect_shadow(phi, 300, master_seed=200 + trial)
        vals.append(overlap_global(sp, sf, pairing="all_pairs"))
    assert abs(np.mean(vals)) < 0.12


def test_all_pairs_gram_route_matches_pair_loop():
    psi = random_state(2, 17)
    phi = random_state(2, 18)
    sp = collect_shadow(psi, 20, master_seed=33)
    sf = collect_shadow(phi, 20, master_seed=34)
    loop = np.mean(
        [
            snapshot_pair_trace(a, b, sp.block_sizes)
            for a in sp.snapshots
            for b in sf.snapshots
        ]
    )
    assert overlap_global(sp, sf, pairing="all_pairs") == pytest.approx(loop, abs=1e-9)


def test_overlap_vs_state_one_sided():
    from shadowpf.shadows import overlap_symmetrized, overlap_vs_state

    psi = random_state(3, 19)
    phi = random_state(3, 20)
    target = overlap_sq(psi, phi)
    sp = collect_shadow(psi, 1500, master_seed=35)
    sf = collect_shadow(phi, 1500, master_seed=36)
    assert abs(overlap_vs_state(sp, phi) - target) < 0.12
    assert abs(overlap_symmetrized(sp, psi, sf, phi) - target) < 0.1


def test_overlap_global_unbiased_midrange():
    psi = random_state(2, 6)
    phi = random_state(2, 7)
    target = overlap_sq(psi, phi)
    ests = []
    for trial in range(20):
        sp = collect_shadow(psi, 400, master_seed=300 + trial)
        sf = collect_shadow(phi, 400, master_seed=400 + trial)
        ests.append(overlap_global(sp, sf))
    sem = np.std(ests) / np.sqrt(len(ests))
    assert abs(np.mean(ests) - target) < 3 * sem + 0.02


def test_overlap_all_pairs_variant():
    psi = random_state(2, 8)
    phi = random_state(2, 9)
    target = overlap_sq(psi, phi)
    sp = collect_shadow(psi, 150, master_seed=31)
    sf = collect_shadow(phi, 150, master_seed=32)
    assert abs(overlap_global(sp, sf, pairing="all_pairs") - target) < 0.2


def test_overlap_local_equals_global_at_k_n():
    psi = random_state(2, 10)
    phi = random_state(2, 11)
    sp = collect_shadow(psi, 50, master_seed=41)
    sf = collect_shadow(phi, 50, master_seed=42)
    assert overlap_local(sp, sf, k=2) == pytest.approx(overlap_global(sp, sf))


def test_overlap_local_k1_concentrates():
    # per-snapshot one-sided values <00|rho_hat|00>; per-sample variance is
    # 1.25 exactly, so 10^4 snapshots land within 0.05 of the unit overlap
    psi = basis_state(2, 0)
    sp = collect_shadow(psi, 10000, master_seed=51, block_size=1)
    target_vec = psi.amplitudes
    vals = [
        np.real(
            target_vec.conj()
            @ materialize_snapshot(s, sp.block_sizes)
            @ target_vec
        )
        for s in sp.snapshots
    ]
    assert abs(np.mean(vals) - 1.0) < 0.05
    # the two-sided product estimator is unbiased too but heavy-tailed
    sf = collect_shadow(psi, 10000, master_seed=52, block_size=1)
    assert abs(overlap_local(sp, sf, k=1) - 1.0) < 0.4


def _one_sided_values(shadow, other_vec):
    return np.array(
        [
            np.real(
                other_vec.conj()
                @ materialize_snapshot(s, shadow.block_sizes)
                @ other_vec
            )
            for s in shadow.snapshots
        ]
    )


def test_overlap_local_variance_bound_and_ordering():
    # variance of the single-snapshot overlap estimate against a known state:
    # bounded by 2.25^n for k=1 blocks at n=2, and never below the global
    # estimator's variance on the same pairs
    n = 2
    var_local, var_global = [], []
    for trial in range(6):
        psi = random_state(n, 600 + trial)
        phi = random_state(n, 700 + trial)
        sl = collect_shadow(psi, 1700, master_seed=800 + trial, block_size=1)
        sg = collect_shadow(psi, 1700, master_seed=1000 + trial)
        var_local.append(_one_sided_values(sl, phi.amplitudes).var())
        var_global.append(_one_sided_values(sg, phi.amplitudes).var())
    assert np.mean(var_local) <= 2.25 ** 2
    assert np.mean(var_local) >= np.mean(var_global)


def test_overlap_size_mismatch():
    psi = basis_state(2, 0)
    sp = collect_shadow(psi, 4, master_seed=1)
    sf = collect_shadow(psi, 5, master_seed=2)
    with pytest.raises(InputError):
        overlap_global(sp, sf)


# ---------------------------------------------------------------------------
# observable estimation


def test_estimate_identity_is_exactly_one():
    psi = random_state(2, 12)
    shadow = collect_shadow(psi, 50, master_seed=70)
    obs = Hamiltonian.from_terms(2, [(1.0, "II")])
    ev = SnapshotEvaluator(shadow)
    values = ev.observable_values(obs)
    np.testing.assert_allclose(values, 1.0, atol=1e-12)
    assert estimate_observable(shadow, obs, MMConfig(50, 5)) == pytest.approx(1.0)


def test_estimate_z_on_zero_state():
    psi = basis_state(1, 0)
    shadow = collect_shadow(psi, 6000, master_seed=71)
    obs = Hamiltonian.from_terms(1, [(1.0, "Z")])
    est = estimate_observable(shadow, obs, MMConfig(6000, 10))
    assert abs(est - 1.0) < 0.1


def test_estimate_ising_ground_energy():
    h = ham_ising(3)
    vals, vecs = np.linalg.eigh(to_matrix(h))
    ground = StateVector(3, vecs[:, 0].astype(complex))
    shadow = collect_shadow(ground, 8000, master_seed=72)
    est = estimate_observable(shadow, h, MMConfig(8000, 16))
    assert abs(est - vals[0]) < 0.35


def test_estimate_on_doubled_register():
    h = ham_ising(2)
    g = exact_gibbs(h, 0.7)
    from shadowpf.exactsim import expectation

    target = expectation(g.state, h)
    shadow = collect_shadow(g.state, 6000, master_seed=73)
    est = estimate_observable(shadow, h, MMConfig(6000, 12))
    assert abs(est - target) < 0.6


def test_estimator_unbiased_against_dense_snapshots():
    # per-snapshot closed-form values agree with dense Tr(P rho_hat)
    psi = random_state(2, 13)
    shadow = collect_shadow(psi, 40, master_seed=74)
    obs = Hamiltonian.from_terms(2, [(0.7, "XZ"), (-0.3, "YI"), (0.1, "II")])
    values = SnapshotEvaluator(shadow).observable_values(obs)
    from shadowpf.pauli import PAULI_MATRICES

    def dense_string(s):
        out = np.array([[1.0 + 0j]])
        for c in s:
            out = np.kron(out, PAULI_MATRICES[c])
        return out

    obs_mat = sum(t.coefficient * dense_string(t.string) for t in obs.terms)
    for snap, val in zip(shadow.snapshots, values):
        dense = np.trace(obs_mat @ materialize_snapshot(snap)).real
        assert val == pytest.approx(dense, abs=1e-10)


def test_estimate_range_soft_check():
    psi = random_state(2, 14)
    h = Hamiltonian.from_terms(2, [(0.5, "ZI"), (0.5, "IX")])  # norm <= 1
    shadow = collect_shadow(psi, 1200, master_seed=75)
    est = estimate_observable(shadow, h, MMConfig(1200, 8))
    assert -1.1 <= est <= 1.1
