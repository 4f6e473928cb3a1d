import itertools

import numpy as np
import pytest

from shadowpf.clifford import (
    CliffordElement,
    basis_amplitude_sq,
    bits_to_string,
    clifford_group_order,
    collect_shadow,
    derive_seed,
    load_shadow_set,
    materialize_snapshot,
    measure_z,
    random_clifford,
    save_shadow_set,
    string_to_bits,
    symplectic_group_order,
)
from shadowpf.errors import InputError
from shadowpf.exactsim import StateVector, basis_state, bits_to_index
from shadowpf.pauli import PAULI_MATRICES


def dense_string(s):
    out = np.array([[1.0 + 0j]])
    for c in s:
        out = np.kron(out, PAULI_MATRICES[c])
    return out


def all_strings(n):
    return ["".join(p) for p in itertools.product("IXYZ", repeat=n)]


def test_bits_roundtrip():
    for s in all_strings(2):
        x, z, r = string_to_bits(s)
        sign, back = bits_to_string(x, z, r)
        assert sign == 1 and back == s


def test_identity_conjugation():
    ident = CliffordElement.identity(3)
    for s in ["XYZ", "IIZ", "YXI"]:
        assert ident.conjugate_pauli(s) == (1, s)


def test_hadamard_tableau():
    # H: X -> Z, Z -> X
    h = CliffordElement(
        1,
        x=np.array([[0], [1]], dtype=np.uint8),
        z=np.array([[1], [0]], dtype=np.uint8),
        r=np.zeros(2, dtype=np.uint8),
    )
    assert h.conjugate_pauli("X") == (1, "Z")
    assert h.conjugate_pauli("Z") == (1, "X")
    assert h.conjugate_pauli("Y") == (-1, "Y")


@pytest.mark.parametrize("n", [1, 2])
def test_conjugation_matches_dense(n):
    rng = np.random.default_rng(11)
    for _ in range(40):
        u = random_clifford(n, rng)
        mat = u.to_unitary()
        np.testing.assert_allclose(mat @ mat.conj().T, np.eye(2 ** n), atol=1e-10)
        for s in all_strings(n):
            if set(s) == {"I"}:
                continue
            sign, out = u.conjugate_pauli(s)
            np.testing.assert_allclose(
                mat @ dense_string(s) @ mat.conj().T,
                sign * dense_string(out),
                atol=1e-10,
                err_msg=f"string {s}",
            )


def test_conjugation_matches_dense_n3_spot():
    rng = np.random.default_rng(5)
    for _ in range(5):
        u = random_clifford(3, rng)
        mat = u.to_unitary()
        for s in ["XIZ", "YYY", "IZX", "ZZZ", "XXI"]:
            sign, out = u.conjugate_pauli(s)
            np.testing.assert_allclose(
                mat @ dense_string(s) @ mat.conj().T,
                sign * dense_string(out),
                atol=1e-10,
            )


def test_compose_matches_dense():
    rng = np.random.default_rng(2)
    for _ in range(10):
        a = random_clifford(2, rng)
        b = random_clifford(2, rng)
        ab = a.compose(b)
        ua, ub, uab = a.to_unitary(), b.to_unitary(), ab.to_unitary()
        target = ua @ ub
        # equal up to global phase
        k = np.argmax(np.abs(target))
        phase = target.flat[k] / uab.flat[k]
        np.testing.assert_allclose(uab * phase, target, atol=1e-9)


def test_inverse_roundtrip():
    rng = np.random.default_rng(3)
    for n in (1, 2, 3):
        for _ in range(10):
            u = random_clifford(n, rng)
            assert u.compose(u.inverse()) == CliffordElement.identity(n)
            assert u.inverse().compose(u) == CliffordElement.identity(n)


def test_sampled_tableaus_are_symplectic():
    rng = np.random.default_rng(4)
    for n in (1, 2, 4):
        for _ in range(20):
            assert random_clifford(n, rng).is_symplectic()


def test_group_orders():
    assert symplectic_group_order(1) == 6
    assert clifford_group_order(1) == 24
    # product formula 2^(n^2+2n) prod_j (4^j - 1)
    assert clifford_group_order(2) == 2 ** 8 * 3 * 15 == 11520


def test_single_qubit_classes_all_reachable():
    rng = np.random.default_rng(5)
    seen = set()
    for _ in range(2000):
        u = random_clifford(1, rng)
        seen.add((u.conjugate_pauli("X"), u.conjugate_pauli("Z")))
    assert len(seen) == 24


def test_direct_sum_and_block():
    rng = np.random.default_rng(6)
    a = random_clifford(2, rng)
    b = random_clifford(1, rng)
    both = CliffordElement.direct_sum([a, b])
    assert both.n_qubits == 3
    assert both.block(0, 2) == a
    assert both.block(2, 1) == b
    sign, out = both.conjugate_pauli("XIY")
    sa, oa = a.conjugate_pauli("XI")
    sb, ob = b.conjugate_pauli("Y")
    assert sign == sa * sb and out == oa + ob


def test_measure_z_identity_deterministic():
    rng = np.random.default_rng(0)
    ident = CliffordElement.identity(3)
    out = measure_z(ident, basis_state(3, 0), rng)
    assert list(out) == [0, 0, 0]


def test_measure_z_statistics_match_born():
    rng = np.random.default_rng(7)
    u = random_clifford(3, rng)
    amps = rng.normal(size=8) + 1j * rng.normal(size=8)
    amps /= np.linalg.norm(amps)
    psi = StateVector(3, amps)
    probs = np.abs(u.apply_to(psi).amplitudes) ** 2
    counts = np.zeros(8)
    shots = 4000
    for _ in range(shots):
        counts[bits_to_index(measure_z(u, psi, rng))] += 1
    freq = counts / shots
    sigma = np.sqrt(probs * (1 - probs) / shots)
    assert np.all(np.abs(freq - probs) <= 4 * sigma + 1e-3)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_basis_amplitude_matches_dense(n):
    rng = np.random.default_rng(8 + n)
    for _ in range(25):
        w = random_clifford(n, rng)
        mat = w.to_unitary()
        b_in = rng.integers(0, 2, size=n)
        b_out = rng.integers(0, 2, size=n)
        dense = abs(mat[bits_to_index(b_out), bits_to_index(b_in)]) ** 2
        assert basis_amplitude_sq(w, b_in, b_out) == pytest.approx(dense, abs=1e-10)


def test_snapshot_inversion_unbiased_small():
    # E[(2^n+1) U^dag|b><b|U - I] = rho, checked loosely at modest sample size
    rng = np.random.default_rng(9)
    amps = rng.normal(size=2) + 1j * rng.normal(size=2)
    amps /= np.linalg.norm(amps)
    psi = StateVector(1, amps)
    rho = np.outer(amps, amps.conj())
    shadow = collect_shadow(psi, 3000, master_seed=17)
    acc = np.zeros((2, 2), dtype=complex)
    for snap in shadow.snapshots:
        acc += materialize_snapshot(snap)
    acc /= len(shadow)
    assert np.abs(acc - rho).max() < 0.12


def test_collect_shadow_reproducible():
    psi = basis_state(2, 1)
    s1 = collect_shadow(psi, 5, master_seed=42)
    s2 = collect_shadow(psi, 5, master_seed=42)
    for a, b in zip(s1.snapshots, s2.snapshots):
        assert a.unitary == b.unitary
        assert np.array_equal(a.outcome, b.outcome)
        assert a.seed == b.seed
    assert s1.snapshots[0].seed == derive_seed(42, 0)


def test_collect_shadow_block_structure():
    psi = basis_state(5, 7)
    s = collect_shadow(psi, 2, master_seed=1, block_size=2)
    assert s.block_sizes == (2, 2, 1)
    for snap in s.snapshots:
        snap.unitary.block(0, 2)
        snap.unitary.block(4, 1)


def test_shadow_serialization_roundtrip(tmp_path):
    psi = basis_state(2, 2)
    s = collect_shadow(psi, 4, master_seed=3, source_label="test")
    path = tmp_path / "shadow.txt"
    save_shadow_set(s, path)
    s2 = load_shadow_set(path)
    assert s2.source_label == "test"
    assert s2.master_seed == 3
    assert s2.block_sizes == s.block_sizes
    for a, b in zip(s.snapshots, s2.snapshots):
        assert a.unitary == b.unitary
        assert np.array_equal(a.outcome, b.outcome)
        assert a.seed == b.seed


def test_conjugate_size_mismatch():
    u = CliffordElement.identity(2)
    with pytest.raises(InputError):
        u.conjugate_pauli("X")
