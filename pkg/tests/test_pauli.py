import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shadowpf.errors import InputError, ResourceError
from shadowpf.pauli import (
    PAULI_MATRICES,
    Hamiltonian,
    PauliTerm,
    diagonal_values,
    ham_diagonal,
    ham_hubbard_jw,
    ham_ising,
    multiply_hamiltonians,
    pauli_multiply,
    rescale,
    to_matrix,
)


def dense_string(s):
    out = np.array([[1.0 + 0j]])
    for c in s:
        out = np.kron(out, PAULI_MATRICES[c])
    return out


def test_multiply_single_qubit():
    assert pauli_multiply("X", "Y") == (1j, "Z")
    assert pauli_multiply("IZ", "IZ") == (1, "II")


def test_multiply_xz_zx_against_dense_oracle():
    # phase fixed by the 4x4 matrix product, not assumed
    phase, string = pauli_multiply("XZ", "ZX")
    assert string == "YY"
    prod = dense_string("XZ") @ dense_string("ZX")
    np.testing.assert_allclose(prod, phase * dense_string("YY"), atol=1e-12)


def test_multiply_exhaustive_two_qubit():
    strings = ["".join(p) for p in itertools.product("IXYZ", repeat=2)]
    for a in strings:
        for b in strings:
            phase, c = pauli_multiply(a, b)
            np.testing.assert_allclose(
                dense_string(a) @ dense_string(b),
                phase * dense_string(c),
                atol=1e-12,
            )


@given(
    st.lists(st.sampled_from("IXYZ"), min_size=1, max_size=4),
    st.lists(st.sampled_from("IXYZ"), min_size=1, max_size=4),
    st.lists(st.sampled_from("IXYZ"), min_size=1, max_size=4),
)
@settings(max_examples=60, deadline=None)
def test_multiply_associative(a, b, c):
    n = min(len(a), len(b), len(c))
    a, b, c = "".join(a[:n]), "".join(b[:n]), "".join(c[:n])
    p1, ab = pauli_multiply(a, b)
    p2, ab_c = pauli_multiply(ab, c)
    q1, bc = pauli_multiply(b, c)
    q2, a_bc = pauli_multiply(a, bc)
    assert ab_c == a_bc
    assert p1 * p2 == pytest.approx(q1 * q2)


def test_multiply_length_mismatch():
    with pytest.raises(InputError):
        pauli_multiply("XX", "X")


def test_hamiltonian_merges_duplicates():
    h = Hamiltonian.from_terms(2, [(1.0, "ZZ"), (0.5, "ZZ"), (1.0, "XI")])
    assert len(h) == 2
    zz = [t for t in h.terms if t.string == "ZZ"][0]
    assert zz.coefficient == pytest.approx(1.5)


def test_hamiltonian_text_roundtrip(tmp_path):
    h = rescale(ham_ising(3), 0.2)
    text = h.to_text()
    h2 = Hamiltonian.from_text(text)
    assert h2.n_qubits == 3
    assert h2.scale == pytest.approx(h.scale)
    assert {(t.string, t.coefficient) for t in h2.terms} == {
        (t.string, t.coefficient) for t in h.terms
    }


def test_diagonal_small_cases():
    h1 = ham_diagonal(1)
    np.testing.assert_allclose(diagonal_values(h1), [0.0, 1.0], atol=1e-12)
    h2 = ham_diagonal(2)
    # x = 11 -> 1 + 1 singles plus one pair
    assert diagonal_values(h2)[3] == pytest.approx(3.0)


def test_diagonal_matches_bitstring_loop():
    n = 4
    h = ham_diagonal(n)
    vals = diagonal_values(h)
    for idx in range(2 ** n):
        bits = [(idx >> (n - 1 - j)) & 1 for j in range(n)]
        expected = sum(bits) + sum(
            bits[i] * bits[j] for i in range(n) for j in range(i + 1, n)
        )
        assert vals[idx] == pytest.approx(expected)
    # dense matrix agrees and is diagonal
    mat = to_matrix(h)
    np.testing.assert_allclose(np.diag(mat).real, vals, atol=1e-12)
    np.testing.assert_allclose(mat, np.diag(np.diag(mat)), atol=1e-12)


def test_diagonal_pair_multiplier():
    h = ham_diagonal(3, pair_coupling=2.0)
    vals = diagonal_values(h)
    assert vals[-1] == pytest.approx(3 + 2 * 3)


def test_diagonal_rejects_zero():
    with pytest.raises(InputError):
        ham_diagonal(0)


def test_ising_n2_merges_wraparound():
    h = ham_ising(2)
    zz = [t for t in h.terms if t.string == "ZZ"]
    assert len(zz) == 1 and zz[0].coefficient == pytest.approx(2.0)
    assert len(h) == 3
    # dense spectra: periodic merged coefficient vs explicit double bond
    mat = to_matrix(h)
    explicit = (
        2.0 * dense_string("ZZ") + dense_string("XI") + dense_string("IX")
    )
    np.testing.assert_allclose(mat, explicit, atol=1e-12)


def test_ising_term_count_and_open_boundary():
    h = ham_ising(3)
    assert len(h) == 6
    h_open = ham_ising(3, periodic=False)
    assert len(h_open) == 5


def test_ising_ground_energy_matches_dense():
    h = ham_ising(4)
    vals = np.linalg.eigvalsh(to_matrix(h))
    # independent oracle: build the matrix by explicit kron sums
    dim = 16
    mat = np.zeros((dim, dim), dtype=complex)
    for t in h.terms:
        mat += t.coefficient * dense_string(t.string)
    np.testing.assert_allclose(vals, np.linalg.eigvalsh(mat), atol=1e-10)


def test_hubbard_1x2_hopping_only_spectrum():
    h = ham_hubbard_jw(1, 2, t=1.0, u=0.0)
    assert h.n_qubits == 4
    vals = np.linalg.eigvalsh(to_matrix(h))
    # single-particle tight binding on 2 sites: +-t per spin sector; the
    # 16-dim spectrum is all sums over occupations of {-1, +1} per sector
    singles = [-1.0, 1.0]
    expected = sorted(
        a * oa + b * ob
        for a in singles
        for b in singles
        for oa in (0, 1)
        for ob in (0, 1)
    )
    np.testing.assert_allclose(sorted(vals), expected, atol=1e-10)


def test_hubbard_onsite_only_diagonal():
    h = ham_hubbard_jw(1, 2, t=0.0, u=2.0)
    assert h.is_diagonal
    vals = diagonal_values(h)
    # |1 1 0 0> : site 0 doubly occupied (qubits 0,1 set)
    assert vals[0b1100] == pytest.approx(2.0)
    assert vals[0b1111] == pytest.approx(4.0)
    assert vals[0b1010] == pytest.approx(0.0)


def test_hubbard_2x2_ground_energy():
    h = ham_hubbard_jw(2, 2, t=1.0, u=2.0)
    assert h.n_qubits == 8
    mat = to_matrix(h)
    np.testing.assert_allclose(mat, mat.conj().T, atol=1e-12)
    oracle = np.zeros_like(mat)
    for t in h.terms:
        oracle += t.coefficient * dense_string(t.string)
    assert np.linalg.eigvalsh(mat)[0] == pytest.approx(
        np.linalg.eigvalsh(oracle)[0], abs=1e-10
    )


def test_rescale_arithmetic():
    h = Hamiltonian.from_terms(2, [(3.0, "ZZ"), (1.0, "XI")])
    h2 = rescale(h, 0.2)
    assert h2.scale == pytest.approx(5.0)
    assert sorted(abs(t.coefficient) for t in h2.terms) == pytest.approx([0.2, 0.6])


def test_rescale_composes_multiplicatively():
    h = ham_ising(3)
    once = rescale(h, 0.2)
    twice = rescale(once, 0.2)
    assert twice.scale == pytest.approx(once.scale * (once.one_norm / 0.8))


def test_rescale_bounds_spectrum():
    h = rescale(ham_ising(4), 0.2)
    vals = np.linalg.eigvalsh(to_matrix(h))
    assert vals.min() >= -0.8 - 1e-12
    assert vals.max() <= 0.8 + 1e-12


def test_rescale_preserves_eigenvectors():
    h = ham_ising(4)
    h2 = rescale(h, 0.3)
    v1 = np.linalg.eigvalsh(to_matrix(h))
    v2 = np.linalg.eigvalsh(to_matrix(h2))
    np.testing.assert_allclose(v2 * h2.scale, v1, atol=1e-10)


def test_to_matrix_basics():
    z = Hamiltonian.from_terms(1, [(1.0, "Z")])
    np.testing.assert_allclose(to_matrix(z), np.diag([1.0, -1.0]), atol=1e-15)
    h = ham_ising(3)
    mat = to_matrix(h)
    np.testing.assert_allclose(mat, mat.conj().T, atol=1e-12)
    assert abs(np.trace(mat)) < 1e-12


def test_to_matrix_respects_limit():
    with pytest.raises(ResourceError):
        to_matrix(ham_ising(5), dense_limit=4)


def test_constructors_hermitian():
    for h in (ham_diagonal(3), ham_ising(3), ham_hubbard_jw(1, 2, 1.0, 2.0)):
        mat = to_matrix(h)
        np.testing.assert_allclose(mat, mat.conj().T, atol=1e-12)


def test_diagonal_commutes_with_every_z():
    h = ham_diagonal(3)
    mat = to_matrix(h)
    for i in range(3):
        s = ["I"] * 3
        s[i] = "Z"
        z = dense_string("".join(s))
        np.testing.assert_allclose(mat @ z, z @ mat, atol=1e-12)


def test_multiply_hamiltonians_matches_dense():
    h = ham_ising(3)
    h2 = multiply_hamiltonians(h, h)
    np.testing.assert_allclose(
        to_matrix(h2), to_matrix(h) @ to_matrix(h), atol=1e-10
    )


def test_multiply_hamiltonians_term_cap():
    h = ham_ising(4)
    with pytest.raises(ResourceError):
        multiply_hamiltonians(h, h, term_cap=3)
