"""Pauli-string algebra and benchmark Hamiltonian families.

A Hamiltonian is a weighted sum of n-qubit Pauli strings.  Qubit 0 is the
leftmost character of a string and the most significant bit of a
computational-basis index, so ``to_matrix`` is the Kronecker product taken
left to right.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce
from typing import Iterable

import numpy as np

from .errors import InputError, ResourceError

PAULI_CHARS = "IXYZ"

PAULI_MATRICES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# Single-qubit products: _MUL1[(a, b)] = (phase, c) with a.b = phase * c.
_MUL1 = {}
for _a in PAULI_CHARS:
    for _b in PAULI_CHARS:
        _prod = PAULI_MATRICES[_a] @ PAULI_MATRICES[_b]
        for _c in PAULI_CHARS:
            for _ph in (1, -1, 1j, -1j):
                if np.allclose(_prod, _ph * PAULI_MATRICES[_c]):
                    _MUL1[(_a, _b)] = (_ph, _c)
del _a, _b, _c, _ph, _prod

DENSE_LIMIT_SINGLE = 12
DENSE_LIMIT_DOUBLED = 10


def pauli_multiply(a: str, b: str) -> tuple[complex, str]:
    """Multiply two Pauli strings factor-wise.

    Returns ``(phase, string)`` with ``phase`` in {+1, -1, +i, -i} such that
    the operator product a.b equals phase times the returned string.
    """
    if len(a) != len(b):
        raise InputError(f"length mismatch: {len(a)} vs {len(b)}")
    phase = 1 + 0j
    chars = []
    for ca, cb in zip(a, b):
        ph, c = _MUL1[(ca, cb)]
        phase *= ph
        chars.append(c)
    return phase, "".join(chars)


@dataclass(frozen=True)
class PauliTerm:
    """One weighted Pauli string of a Hamiltonian."""

    coefficient: float
    string: str

    def __post_init__(self):
        if not self.string or any(c not in PAULI_CHARS for c in self.string):
            raise InputError(f"invalid Pauli string {self.string!r}")
        if not math.isfinite(self.coefficient):
            raise InputError("coefficient must be finite")


@dataclass(frozen=True)
class Hamiltonian:
    """Weighted Pauli-string sum; duplicate strings are merged on construction.

    ``scale`` records the cumulative rescaling factor: the original operator
    equals ``scale`` times this one, so partition functions obey
    Z_original(beta) = Z_this(beta * scale).
    """

    n_qubits: int
    terms: tuple[PauliTerm, ...]
    scale: float = 1.0

    def __post_init__(self):
        if self.n_qubits < 1:
            raise InputError("n_qubits must be positive")
        if not self.terms:
            raise InputError("a Hamiltonian needs at least one term")
        if self.scale <= 0:
            raise InputError("scale must be positive")
        seen = set()
        for t in self.terms:
            if len(t.string) != self.n_qubits:
                raise InputError(
                    f"term {t.string!r} has length {len(t.string)}, expected {self.n_qubits}"
                )
            if t.string in seen:
                raise InputError(f"duplicate term {t.string!r}")
            seen.add(t.string)

    @classmethod
    def from_terms(cls, n_qubits: int, terms: Iterable[tuple[float, str]],
                   scale: float = 1.0, drop_tol: float = 0.0) -> "Hamiltonian":
        """Merge duplicate strings and drop coefficients below ``drop_tol``."""
        merged: dict[str, float] = {}
        for coeff, string in terms:
            merged[string] = merged.get(string, 0.0) + float(coeff)
        kept = [
            PauliTerm(c, s) for s, c in sorted(merged.items()) if abs(c) > drop_tol
        ]
        if not kept:
            raise InputError("all terms vanished after merging")
        return cls(n_qubits, tuple(kept), scale)

    @property
    def one_norm(self) -> float:
        return float(sum(abs(t.coefficient) for t in self.terms))

    @property
    def is_diagonal(self) -> bool:
        return all(set(t.string) <= {"I", "Z"} for t in self.terms)

    def __len__(self) -> int:
        return len(self.terms)

    def to_text(self) -> str:
        lines = [f"n={self.n_qubits} scale={self.scale!r}"]
        lines += [f"{t.coefficient!r} {t.string}" for t in self.terms]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Hamiltonian":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("n="):
            raise InputError("missing header line 'n=<int> scale=<float>'")
        fields = dict(kv.split("=", 1) for kv in lines[0].split())
        n = int(fields["n"])
        scale = float(fields.get("scale", "1.0"))
        terms = []
        for ln in lines[1:]:
            coeff, string = ln.split()
            terms.append((float(coeff), string))
        return cls.from_terms(n, terms, scale=scale)


def to_matrix(h: Hamiltonian, dense_limit: int = DENSE_LIMIT_SINGLE) -> np.ndarray:
    """Dense Hermitian matrix sum(c_i * kron of factors)."""
    if h.n_qubits > dense_limit:
        raise ResourceError(
            f"n={h.n_qubits} exceeds dense limit {dense_limit}"
        )
    dim = 2 ** h.n_qubits
    mat = np.zeros((dim, dim), dtype=complex)
    for t in h.terms:
        mat += t.coefficient * reduce(np.kron, (PAULI_MATRICES[c] for c in t.string))
    return mat


def _parity(v: np.ndarray) -> np.ndarray:
    """Bit parity of each entry of an integer array."""
    v = v.copy()
    for shift in (32, 16, 8, 4, 2, 1):
        v ^= v >> shift
    return v & 1


def diagonal_values(h: Hamiltonian) -> np.ndarray:
    """Eigenvalues of a diagonal (I/Z-only) Hamiltonian, indexed by basis state."""
    if not h.is_diagonal:
        raise InputError("Hamiltonian has off-diagonal terms")
    n = h.n_qubits
    idx = np.arange(2 ** n, dtype=np.int64)
    vals = np.zeros(2 ** n)
    for t in h.terms:
        zmask = 0
        for j, c in enumerate(t.string):
            if c == "Z":
                zmask |= 1 << (n - 1 - j)
        signs = 1.0 - 2.0 * _parity(idx & zmask)
        vals += t.coefficient * signs
    return vals


def ham_diagonal(n: int, pair_coupling: float = 1.0) -> Hamiltonian:
    """Diagonal model with eigenvalue sum(x_i) + pair_coupling * sum_{i<j} x_i x_j.

    Encodes each bit as x_i = (I - Z_i)/2 and expands into Pauli terms.  The
    pair sum runs over unordered pairs; pass ``pair_coupling=2.0`` for the
    ordered double-counting reading.
    """
    if n < 1:
        raise InputError("n must be >= 1")
    terms: list[tuple[float, str]] = []
    ident = "I" * n
    ident_coeff = n / 2 + pair_coupling * n * (n - 1) / 8
    terms.append((ident_coeff, ident))
    for i in range(n):
        coeff = -0.5 - pair_coupling * (n - 1) / 4
        terms.append((coeff, ident[:i] + "Z" + ident[i + 1:]))
    for i in range(n):
        for j in range(i + 1, n):
            s = list(ident)
            s[i] = "Z"
            s[j] = "Z"
            terms.append((pair_coupling / 4, "".join(s)))
    return Hamiltonian.from_terms(n, terms)


def ham_ising(n: int, periodic: bool = True) -> Hamiltonian:
    """Transverse-field Ising chain: nearest-neighbour ZZ plus X on every site.

    All couplings and fields are +1.  With ``periodic`` the bond sum wraps
    around (for n=2 the two wraparound copies of Z0Z1 merge to coefficient 2).
    """
    if n < 2:
        raise InputError("n must be >= 2")
    ident = "I" * n
    terms: list[tuple[float, str]] = []
    bonds = [(i, i + 1) for i in range(n - 1)]
    if periodic:
        bonds.append((n - 1, 0))
    for i, j in bonds:
        s = list(ident)
        s[i] = "Z"
        s[j] = "Z"
        terms.append((1.0, "".join(s)))
    for i in range(n):
        terms.append((1.0, ident[:i] + "X" + ident[i + 1:]))
    return Hamiltonian.from_terms(n, terms)


def _snake_site_order(n_a: int, n_b: int) -> dict[tuple[int, int], int]:
    """Snake enumeration over grid columns; keeps parity chains short on 2xk grids."""
    order = {}
    idx = 0
    for b in range(n_b):
        rows = range(n_a) if b % 2 == 0 else range(n_a - 1, -1, -1)
        for a in rows:
            order[(a, b)] = idx
            idx += 1
    return order


def ham_hubbard_jw(n_a: int, n_b: int, t: float, u: float) -> Hamiltonian:
    """Fermi-Hubbard model on an n_a x n_b grid, mapped to qubits.

    One qubit per spin-orbital, site-major and spin-minor (qubit 2s is
    site-s-up, qubit 2s+1 is site-s-down), with sites snake-ordered over the
    grid.  Hopping terms become -t/2 (XX + YY) strings with a Z chain between
    the endpoints; on-site repulsion expands u/4 (I - Z_up)(I - Z_down).
    """
    if n_a < 1 or n_b < 1:
        raise InputError("grid dimensions must be positive")
    if n_a * n_b < 2:
        raise InputError("need at least two sites")
    site = _snake_site_order(n_a, n_b)
    n = 2 * n_a * n_b
    ident = "I" * n
    terms: list[tuple[float, str]] = []

    def put(chars: dict[int, str]) -> str:
        s = list(ident)
        for q, c in chars.items():
            s[q] = c
        return "".join(s)

    edges = set()
    for a in range(n_a):
        for b in range(n_b):
            if a + 1 < n_a:
                edges.add(frozenset({(a, b), (a + 1, b)}))
            if b + 1 < n_b:
                edges.add(frozenset({(a, b), (a, b + 1)}))
    if t != 0.0:
        for edge in edges:
            s1, s2 = sorted(site[p] for p in edge)
            for spin in (0, 1):
                p, q = 2 * s1 + spin, 2 * s2 + spin
                chain = {k: "Z" for k in range(p + 1, q)}
                terms.append((-t / 2, put({p: "X", q: "X", **chain})))
                terms.append((-t / 2, put({p: "Y", q: "Y", **chain})))
    if u != 0.0:
        for s in range(n_a * n_b):
            up, dn = 2 * s, 2 * s + 1
            terms.append((u / 4, ident))
            terms.append((-u / 4, put({up: "Z"})))
            terms.append((-u / 4, put({dn: "Z"})))
            terms.append((u / 4, put({up: "Z", dn: "Z"})))
    return Hamiltonian.from_terms(n, terms)


def rescale(h: Hamiltonian, delta: float) -> Hamiltonian:
    """Divide by s = one_norm/(1 - delta) so all eigenvalues land in [-1+delta, 1-delta].

    Uses the one-norm bound |lambda| <= sum |c_i|; partition functions obey
    Z_h(beta) = Z_h'(beta * s).
    """
    if not 0 < delta < 1:
        raise InputError("delta must lie in (0, 1)")
    norm = h.one_norm
    if norm <= 0:
        raise InputError("cannot rescale a zero Hamiltonian")
    s = norm / (1 - delta)
    terms = tuple(PauliTerm(t.coefficient / s, t.string) for t in h.terms)
    return Hamiltonian(h.n_qubits, terms, scale=h.scale * s)


def multiply_hamiltonians(a: Hamiltonian, b: Hamiltonian,
                          term_cap: int = 100_000) -> Hamiltonian:
    """Operator product of two Pauli sums with term merging.

    Both operands must be Hermitian with real coefficients; imaginary phases
    cancel pairwise in the merged result (residues below 1e-12 are dropped).
    """
    if a.n_qubits != b.n_qubits:
        raise InputError("qubit count mismatch")
    merged: dict[str, complex] = {}
    for ta in a.terms:
        for tb in b.terms:
            phase, string = pauli_multiply(ta.string, tb.string)
            merged[string] = merged.get(string, 0.0) + ta.coefficient * tb.coefficient * phase
            if len(merged) > term_cap:
                raise ResourceError(
                    f"Pauli product exceeds the {term_cap}-term cap; use exact mode"
                )
    real_terms = []
    for s, c in merged.items():
        if abs(c) <= 1e-12:
            continue
        if abs(c.imag) > 1e-9 * max(1.0, abs(c.real)):
            raise InputError("product of the given operators is not Hermitian")
        real_terms.append((c.real, s))
    if not real_terms:
        return Hamiltonian(a.n_qubits, (PauliTerm(0.0, "I" * a.n_qubits),))
    return Hamiltonian.from_terms(a.n_qubits, real_terms)
