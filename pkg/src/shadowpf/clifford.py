"""Uniform Clifford sampling, stabilizer tableaus, and measurement snapshots.

A Clifford element is stored by its conjugation action: row j of the tableau
is the signed Pauli image of X_j, row n+j the image of Z_j.  Rows are encoded
as (x bits, z bits, phase r mod 4) meaning i^r * X^x Z^z, with Hermitian rows
satisfying r = (x.z) mod 2.  Sampling is exactly uniform over the group
modulo global phase: a uniformly random binary symplectic matrix (selected by
canonical index, after Koenig and Smolin) plus uniform sign bits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError, ResourceError
from .exactsim import (
    StateVector,
    apply_circuit,
    basis_state,
    bits_to_index,
)

# ---------------------------------------------------------------------------
# bit-level Pauli helpers

_CHAR_TO_XZ = {"I": (0, 0), "X": (1, 0), "Z": (0, 1), "Y": (1, 1)}
_XZ_TO_CHAR = {v: k for k, v in _CHAR_TO_XZ.items()}


def string_to_bits(string: str) -> tuple[np.ndarray, np.ndarray, int]:
    """Pauli string -> (x, z, r) with r the canonical phase of the Hermitian form."""
    x = np.zeros(len(string), dtype=np.uint8)
    z = np.zeros(len(string), dtype=np.uint8)
    for j, c in enumerate(string):
        try:
            x[j], z[j] = _CHAR_TO_XZ[c]
        except KeyError:
            raise InputError(f"invalid Pauli character {c!r}") from None
    return x, z, int((x & z).sum() % 4)


def bits_to_string(x: np.ndarray, z: np.ndarray, r: int) -> tuple[int, str]:
    """(x, z, r) -> (sign, Pauli string); r must describe a Hermitian operator."""
    chars = "".join(_XZ_TO_CHAR[(int(a), int(b))] for a, b in zip(x, z))
    y_count = int((x & z).sum())
    residue = (int(r) - y_count) % 4
    if residue == 0:
        return 1, chars
    if residue == 2:
        return -1, chars
    raise InputError("phase does not describe a Hermitian Pauli")


# ---------------------------------------------------------------------------
# tableau element


class CliffordElement:
    """n-qubit Clifford unitary in stabilizer-tableau (symplectic + sign) form."""

    def __init__(self, n_qubits: int, x: np.ndarray, z: np.ndarray, r: np.ndarray):
        self.n_qubits = int(n_qubits)
        self.x = np.asarray(x, dtype=np.uint8)
        self.z = np.asarray(z, dtype=np.uint8)
        self.r = np.asarray(r, dtype=np.uint8) % 4
        n = self.n_qubits
        if self.x.shape != (2 * n, n) or self.z.shape != (2 * n, n) or self.r.shape != (2 * n,):
            raise InputError("tableau shape mismatch")
        self._circuit: list[tuple[str, tuple[int, ...]]] | None = None

    # -- constructors ------------------------------------------------------

    @classmethod
    def identity(cls, n: int) -> "CliffordElement":
        x = np.zeros((2 * n, n), dtype=np.uint8)
        z = np.zeros((2 * n, n), dtype=np.uint8)
        x[:n] = np.eye(n, dtype=np.uint8)
        z[n:] = np.eye(n, dtype=np.uint8)
        return cls(n, x, z, np.zeros(2 * n, dtype=np.uint8))

    @classmethod
    def direct_sum(cls, blocks: Sequence["CliffordElement"]) -> "CliffordElement":
        """Block-diagonal element acting as each block on consecutive qubits."""
        n = sum(b.n_qubits for b in blocks)
        x = np.zeros((2 * n, n), dtype=np.uint8)
        z = np.zeros((2 * n, n), dtype=np.uint8)
        r = np.zeros(2 * n, dtype=np.uint8)
        off = 0
        for b in blocks:
            k = b.n_qubits
            rows = slice(off, off + k)
            cols = slice(off, off + k)
            x[rows, cols] = b.x[:k]
            z[rows, cols] = b.z[:k]
            r[rows] = b.r[:k]
            rows = slice(n + off, n + off + k)
            x[rows, cols] = b.x[k:]
            z[rows, cols] = b.z[k:]
            r[rows] = b.r[k:]
            off += k
        return cls(n, x, z, r)

    def block(self, offset: int, k: int) -> "CliffordElement":
        """Extract a k-qubit block of a block-diagonal element."""
        n = self.n_qubits
        rows = list(range(offset, offset + k)) + list(range(n + offset, n + offset + k))
        cols = slice(offset, offset + k)
        x = self.x[rows, cols]
        z = self.z[rows, cols]
        outside = np.delete(np.arange(n), np.arange(offset, offset + k))
        if outside.size and (self.x[rows][:, outside].any() or self.z[rows][:, outside].any()):
            raise InputError("element is not block-diagonal at the requested block")
        return CliffordElement(k, x, z, self.r[rows])

    # -- algebra -----------------------------------------------------------

    @property
    def symplectic(self) -> np.ndarray:
        """2n x 2n binary matrix of row bit-vectors [x | z]."""
        return np.concatenate([self.x, self.z], axis=1)

    def is_symplectic(self) -> bool:
        n = self.n_qubits
        lam = np.zeros((2 * n, 2 * n), dtype=np.uint8)
        lam[:n, n:] = np.eye(n, dtype=np.uint8)
        lam[n:, :n] = np.eye(n, dtype=np.uint8)
        m = self.symplectic
        return bool(np.array_equal((m @ lam @ m.T) % 2, lam))

    def conjugate_bits(self, bx: np.ndarray, bz: np.ndarray, br: np.ndarray
                       ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Image of a batch of Paulis (rows of bx/bz, phases br) under U . U^dag."""
        bx = np.atleast_2d(bx).astype(np.uint8)
        bz = np.atleast_2d(bz).astype(np.uint8)
        batch = bx.shape[0]
        n = self.n_qubits
        acc_x = np.zeros((batch, n), dtype=np.uint8)
        acc_z = np.zeros((batch, n), dtype=np.uint8)
        acc_r = np.zeros(batch, dtype=np.int64)
        for j in range(n):
            mask = bx[:, j].astype(np.int64)
            if mask.any():
                cross = acc_z @ self.x[j].astype(np.int64)
                acc_r += mask * (int(self.r[j]) + 2 * cross)
                sel = mask.astype(bool)
                acc_x[sel] ^= self.x[j]
                acc_z[sel] ^= self.z[j]
        for j in range(n):
            mask = bz[:, j].astype(np.int64)
            if mask.any():
                cross = acc_z @ self.x[n + j].astype(np.int64)
                acc_r += mask * (int(self.r[n + j]) + 2 * cross)
                sel = mask.astype(bool)
                acc_x[sel] ^= self.x[n + j]
                acc_z[sel] ^= self.z[n + j]
        acc_r = (acc_r + np.asarray(br, dtype=np.int64)) % 4
        return acc_x, acc_z, acc_r.astype(np.uint8)

    def conjugate_pauli(self, string: str) -> tuple[int, str]:
        """U P U^dag for a Pauli string P, returned as (sign, string)."""
        if len(string) != self.n_qubits:
            raise InputError("string length does not match qubit count")
        x, z, r = string_to_bits(string)
        cx, cz, cr = self.conjugate_bits(x[None, :], z[None, :], np.array([r]))
        return bits_to_string(cx[0], cz[0], int(cr[0]))

    def compose(self, other: "CliffordElement") -> "CliffordElement":
        """Element of self . other (other acts first)."""
        if other.n_qubits != self.n_qubits:
            raise InputError("qubit count mismatch")
        cx, cz, cr = self.conjugate_bits(other.x, other.z, other.r)
        return CliffordElement(self.n_qubits, cx, cz, cr)

    def inverse(self) -> "CliffordElement":
        n = self.n_qubits
        m = self.symplectic.astype(np.uint8)
        lam = np.zeros((2 * n, 2 * n), dtype=np.uint8)
        lam[:n, n:] = np.eye(n, dtype=np.uint8)
        lam[n:, :n] = np.eye(n, dtype=np.uint8)
        minv = (lam @ m.T @ lam) % 2
        x = minv[:, :n]
        z = minv[:, n:]
        y = ((x & z).sum(axis=1) % 4).astype(np.int64)
        cx, cz, cr = self.conjugate_bits(x, z, y.astype(np.uint8))
        # forward-conjugating each candidate row must give back the bare
        # generator; a -1 sign is cancelled by flipping the candidate's sign
        expect = CliffordElement.identity(n)
        if not (np.array_equal(cx, expect.x) and np.array_equal(cz, expect.z)):
            raise InputError("tableau is not symplectic; cannot invert")
        r = ((y + cr.astype(np.int64)) % 4).astype(np.uint8)
        return CliffordElement(n, x, z, r)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, CliffordElement)
            and self.n_qubits == other.n_qubits
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.z, other.z)
            and np.array_equal(self.r, other.r)
        )

    # -- synthesis ---------------------------------------------------------

    def circuit(self) -> list[tuple[str, tuple[int, ...]]]:
        """Gate sequence (temporal order) realizing the element up to global phase."""
        if self._circuit is None:
            self._circuit = _synthesize(self)
        return self._circuit

    def apply_to(self, psi: StateVector) -> StateVector:
        if psi.n_qubits != self.n_qubits:
            raise InputError("state size mismatch")
        return apply_circuit(psi, self.circuit())

    def to_unitary(self, dense_limit: int = 8) -> np.ndarray:
        """Dense matrix (test use), fixed only up to global phase."""
        n = self.n_qubits
        if n > dense_limit:
            raise ResourceError(f"n={n} exceeds dense limit {dense_limit}")
        dim = 2 ** n
        cols = [self.apply_to(basis_state(n, j)).amplitudes for j in range(dim)]
        return np.stack(cols, axis=1)


# ---------------------------------------------------------------------------
# row-wise gate action used by synthesis


def _rows_gate(x: np.ndarray, z: np.ndarray, r: np.ndarray, name: str, qs: tuple[int, ...]):
    if name == "H":
        a = qs[0]
        r += 2 * (x[:, a] & z[:, a])
        x[:, a], z[:, a] = z[:, a].copy(), x[:, a].copy()
    elif name == "S":
        a = qs[0]
        r += x[:, a]
        z[:, a] ^= x[:, a]
    elif name == "CNOT":
        c, t = qs
        x[:, t] ^= x[:, c]
        z[:, c] ^= z[:, t]
    elif name == "CZ":
        a, b = qs
        r += 2 * (x[:, a] & x[:, b])
        z[:, b] ^= x[:, a]
        z[:, a] ^= x[:, b]
    elif name == "X":
        r += 2 * z[:, qs[0]]
    elif name == "Z":
        r += 2 * x[:, qs[0]]
    else:
        raise InputError(f"unknown tableau gate {name}")
    r %= 4


_ADJOINT = {"H": "H", "S": "SDG", "CNOT": "CNOT", "CZ": "CZ", "X": "X", "Z": "Z"}


def _synthesize(elem: CliffordElement) -> list[tuple[str, tuple[int, ...]]]:
    """Reduce the tableau to identity with elementary gates; invert the list.

    Appending gate g to the reduction conjugates every row by g, i.e. replaces
    U by gU; once g_K ... g_1 U = I the circuit for U is the reversed adjoint
    sequence.
    """
    n = elem.n_qubits
    x = elem.x.copy()
    z = elem.z.copy()
    r = elem.r.copy().astype(np.uint8)
    ops: list[tuple[str, tuple[int, ...]]] = []

    def emit(name: str, *qs: int):
        ops.append((name, qs))
        _rows_gate(x, z, r, name, qs)

    for j in range(n):
        s = n + j  # image of Z_j
        # pivot: ensure the Z-row has a z bit at column j
        if not z[s, j:].any():
            c = j + int(np.flatnonzero(x[s, j:])[0])
            emit("H", c)
        if z[s, j] == 0:
            c = j + int(np.flatnonzero(z[s, j:])[0])
            emit("CNOT", j, c)
        for c in range(j + 1, n):
            if z[s, c]:
                emit("CNOT", c, j)
        if x[s, j]:
            emit("S", j)
            emit("H", j)
        for c in range(j + 1, n):
            if x[s, c]:
                if z[s, c]:
                    emit("S", c)
                emit("H", c)
                emit("CNOT", c, j)
        # X-row: anticommutation with the fixed Z_j forces a pivot at (j, j)
        t = j
        assert x[t, j] == 1
        for c in range(j + 1, n):
            if x[t, c]:
                emit("CNOT", j, c)
        for c in range(j + 1, n):
            if z[t, c]:
                emit("CZ", j, c)
        if z[t, j]:
            emit("S", j)
        if r[t] == 2:
            emit("Z", j)
        if r[s] == 2:
            emit("X", j)

    ident = CliffordElement.identity(n)
    if not (np.array_equal(x, ident.x) and np.array_equal(z, ident.z) and not r.any()):
        raise InputError("synthesis failed to reduce tableau to identity")
    return [(_ADJOINT[name], qs) for name, qs in reversed(ops)]


# ---------------------------------------------------------------------------
# uniform sampling (canonical-index symplectic construction + random signs)


def symplectic_group_order(n: int) -> int:
    order = 1
    for j in range(1, n + 1):
        order *= (2 ** (2 * j - 1)) * (4 ** j - 1)
    return order


def clifford_group_order(n: int) -> int:
    """Group order modulo global phase: 2^(n^2+2n) * prod_j (4^j - 1)."""
    return (4 ** n) * symplectic_group_order(n)


def _sympl_inner(v: np.ndarray, w: np.ndarray) -> int:
    return int(v[0::2] @ w[1::2] + w[0::2] @ v[1::2]) % 2


def _transvect(k: np.ndarray, v: np.ndarray) -> np.ndarray:
    return (v + _sympl_inner(k, v) * k) % 2


def _transvect_rows(k: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Apply the transvection T_k to every row of g at once."""
    inner = (g[:, 0::2] @ k[1::2] + g[:, 1::2] @ k[0::2]) % 2
    return (g + np.outer(inner, k)) % 2


def _int_to_bits(i: int, n: int) -> np.ndarray:
    out = np.zeros(n, dtype=np.uint8)
    for j in range(n):
        out[j] = i & 1
        i >>= 1
    return out


def _find_transvection(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Vectors h0, h1 with y = T_h0 T_h1 x (Koenig-Smolin lemma 2)."""
    out = np.zeros((2, x.size), dtype=np.uint8)
    if np.array_equal(x, y):
        return out
    if _sympl_inner(x, y) == 1:
        out[0] = (x + y) % 2
        return out
    z = np.zeros(x.size, dtype=np.uint8)
    for i in range(x.size >> 1):
        ii = 2 * i
        if (x[ii] or x[ii + 1]) and (y[ii] or y[ii + 1]):
            z[ii] = (x[ii] + y[ii]) % 2
            z[ii + 1] = (x[ii + 1] + y[ii + 1]) % 2
            if z[ii] == 0 and z[ii + 1] == 0:
                z[ii + 1] = 1
                if x[ii] != x[ii + 1]:
                    z[ii] = 1
            out[0] = (x + z) % 2
            out[1] = (y + z) % 2
            return out
    for i in range(x.size >> 1):
        ii = 2 * i
        if (x[ii] or x[ii + 1]) and not (y[ii] or y[ii + 1]):
            if x[ii] == x[ii + 1]:
                z[ii + 1] = 1
            else:
                z[ii + 1] = x[ii]
                z[ii] = x[ii + 1]
            break
    for i in range(x.size >> 1):
        ii = 2 * i
        if not (x[ii] or x[ii + 1]) and (y[ii] or y[ii + 1]):
            if y[ii] == y[ii + 1]:
                z[ii + 1] = 1
            else:
                z[ii + 1] = y[ii]
                z[ii] = y[ii + 1]
            break
    out[0] = (x + z) % 2
    out[1] = (y + z) % 2
    return out


def _symplectic_from_index(i: int, n: int) -> np.ndarray:
    """Canonical symplectic matrix for index i in the interleaved convention."""
    nn = 2 * n
    s = (1 << nn) - 1
    k = (i % s) + 1
    i //= s
    f1 = _int_to_bits(k, nn)
    e1 = np.zeros(nn, dtype=np.uint8)
    e1[0] = 1
    tr = _find_transvection(e1, f1)
    bits = _int_to_bits(i % (1 << (nn - 1)), nn - 1)
    eprime = e1.copy()
    for j in range(2, nn):
        eprime[j] = bits[j - 1]
    h0 = _transvect(tr[0], eprime)
    h0 = _transvect(tr[1], h0)
    if bits[0] == 1:
        f1 *= 0
    id2 = np.eye(2, dtype=np.uint8)
    if n == 1:
        g = id2
    else:
        rest = _symplectic_from_index(i >> (nn - 1), n - 1)
        g = np.zeros((nn, nn), dtype=np.uint8)
        g[:2, :2] = id2
        g[2:, 2:] = rest
    for vec in (tr[0], tr[1], h0, f1):
        g = _transvect_rows(vec, g)
    return g.astype(np.uint8)


def _random_big_int(rng: np.random.Generator, upper: int) -> int:
    """Uniform integer in [0, upper) using rejection on random bit blocks."""
    k = upper.bit_length()
    while True:
        bits = rng.integers(0, 2, size=k, dtype=np.uint8)
        value = 0
        for b in bits:
            value = (value << 1) | int(b)
        if value < upper:
            return value


def random_clifford(n: int, rng: np.random.Generator) -> CliffordElement:
    """Exactly uniform element of the n-qubit Clifford group modulo phase."""
    if n < 1:
        raise InputError("n must be >= 1")
    idx = _random_big_int(rng, symplectic_group_order(n))
    inter = _symplectic_from_index(idx, n)
    perm = np.array([2 * k for k in range(n)] + [2 * k + 1 for k in range(n)])
    block = inter[np.ix_(perm, perm)]
    x = block[:, :n].astype(np.uint8)
    z = block[:, n:].astype(np.uint8)
    signs = rng.integers(0, 2, size=2 * n, dtype=np.uint8)
    r = (((x & z).sum(axis=1) + 2 * signs) % 4).astype(np.uint8)
    elem = CliffordElement(n, x, z, r)
    if not elem.is_symplectic():
        raise InputError("sampled tableau violates the symplectic form")
    return elem


# ---------------------------------------------------------------------------
# stabilizer amplitude via forced measurement


def _mult_rows(x1, z1, r1, x2, z2, r2):
    """(x1,z1,r1) . (x2,z2,r2) in the i^r X^x Z^z encoding."""
    r = (int(r1) + int(r2) + 2 * int((z1 & x2).sum())) % 4
    return x1 ^ x2, z1 ^ z2, r


def basis_amplitude_sq(w: CliffordElement, b_in: np.ndarray, b_out: np.ndarray) -> float:
    """|<b_out| W |b_in>|^2 computed on the tableau (polynomial cost)."""
    n = w.n_qubits
    sx = w.x[n:].copy()
    sz = w.z[n:].copy()
    sr = (w.r[n:].astype(np.int64) + 2 * np.asarray(b_in, dtype=np.int64)) % 4
    dx = w.x[:n].copy()
    dz = w.z[:n].copy()
    dr = w.r[:n].astype(np.int64).copy()
    prob = 1.0
    for a in range(n):
        anti = np.flatnonzero(sx[:, a])
        if anti.size:
            p = int(anti[0])
            prob *= 0.5
            for i in anti[1:]:
                sx[i], sz[i], sr[i] = _mult_rows(sx[i], sz[i], sr[i], sx[p], sz[p], sr[p])
            for i in np.flatnonzero(dx[:, a]):
                dx[i], dz[i], dr[i] = _mult_rows(dx[i], dz[i], dr[i], sx[p], sz[p], sr[p])
            dx[p], dz[p], dr[p] = sx[p].copy(), sz[p].copy(), sr[p]
            sx[p] = 0
            sz[p] = 0
            sz[p, a] = 1
            sr[p] = 2 * int(b_out[a])
        else:
            gx = np.zeros(n, dtype=np.uint8)
            gz = np.zeros(n, dtype=np.uint8)
            gr = 0
            for jj in np.flatnonzero(dx[:, a]):
                gx, gz, gr = _mult_rows(gx, gz, gr, sx[jj], sz[jj], sr[jj])
            outcome = (gr % 4) // 2
            if outcome != int(b_out[a]):
                return 0.0
    return prob


# ---------------------------------------------------------------------------
# measurement simulation and shadow collection


def measure_z(u: CliffordElement, psi: StateVector, rng: np.random.Generator) -> np.ndarray:
    """Sample an n-bit outcome with probability |<b|U psi>|^2."""
    if psi.n_qubits != u.n_qubits:
        raise InputError("state size mismatch")
    rotated = u.apply_to(psi)
    probs = np.abs(rotated.amplitudes) ** 2
    probs /= probs.sum()
    idx = int(rng.choice(probs.size, p=probs))
    n = u.n_qubits
    return np.array([(idx >> (n - 1 - j)) & 1 for j in range(n)], dtype=np.uint8)


@dataclass(frozen=True)
class Snapshot:
    """One (U, b) measurement record with the seed that produced it."""

    unitary: CliffordElement
    outcome: np.ndarray
    seed: int


@dataclass(frozen=True)
class ShadowSet:
    """A reproducible collection of snapshots of one state."""

    snapshots: tuple[Snapshot, ...]
    source_label: str
    master_seed: int
    block_sizes: tuple[int, ...]

    @property
    def n_qubits(self) -> int:
        return sum(self.block_sizes)

    def __len__(self) -> int:
        return len(self.snapshots)


def derive_seed(master_seed: int, index: int) -> int:
    """Counter-based per-snapshot seed; any subset is reproducible."""
    ss = np.random.SeedSequence([int(master_seed), int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def collect_shadow(psi: StateVector, m: int, master_seed: int,
                   block_size: int | None = None,
                   measure_first: int | None = None,
                   source_label: str = "") -> ShadowSet:
    """m independent snapshots from fresh uniform Cliffords.

    With ``block_size=k`` each unitary is a tensor product of independent
    k-qubit Cliffords over ceil(n/k) blocks (the last block may be smaller).
    With ``measure_first=k`` only the leading k qubits are rotated and
    measured, producing a shadow of the reduced state on that sub-register
    (the inversion formula holds for mixed states).
    """
    if m < 1:
        raise InputError("m must be >= 1")
    n = psi.n_qubits
    sub = n if measure_first is None else int(measure_first)
    if not 1 <= sub <= n:
        raise InputError("measure_first must select a nonempty leading sub-register")
    if block_size is None or block_size >= sub:
        sizes: tuple[int, ...] = (sub,)
    else:
        if block_size < 1:
            raise InputError("block_size must be >= 1")
        sizes = tuple([block_size] * (sub // block_size) +
                      ([sub % block_size] if sub % block_size else []))
    snapshots = []
    for i in range(m):
        seed = derive_seed(master_seed, i)
        rng = np.random.default_rng(seed)
        if len(sizes) == 1:
            elem = random_clifford(sub, rng)
        else:
            elem = CliffordElement.direct_sum([random_clifford(k, rng) for k in sizes])
        if sub == n:
            outcome = measure_z(elem, psi, rng)
        else:
            outcome = _measure_subregister(elem, psi, sub, rng)
        snapshots.append(Snapshot(elem, outcome, seed))
    return ShadowSet(tuple(snapshots), source_label, int(master_seed), sizes)


def _measure_subregister(u: CliffordElement, psi: StateVector, k: int,
                         rng: np.random.Generator) -> np.ndarray:
    """Rotate the leading k qubits by u and sample their marginal outcome."""
    from .exactsim import apply_circuit

    rotated = apply_circuit(psi, u.circuit())
    probs = np.abs(rotated.amplitudes.reshape(2 ** k, -1)) ** 2
    marginal = probs.sum(axis=1)
    marginal /= marginal.sum()
    idx = int(rng.choice(marginal.size, p=marginal))
    return np.array([(idx >> (k - 1 - j)) & 1 for j in range(k)], dtype=np.uint8)


def materialize_snapshot(snap: Snapshot, block_sizes: Sequence[int] | None = None,
                         dense_limit: int = 8) -> np.ndarray:
    """Dense inverted snapshot (small n only).

    Global snapshots invert to (2^n + 1) U^dag|b><b|U - I; block-local ones
    to the tensor product of the per-block inversions.
    """
    n = snap.unitary.n_qubits
    if n > dense_limit:
        raise ResourceError(f"n={n} exceeds dense limit {dense_limit}")
    sizes = tuple(block_sizes) if block_sizes is not None else (n,)
    out = np.array([[1.0 + 0j]])
    off = 0
    for k in sizes:
        blk = snap.unitary if len(sizes) == 1 else snap.unitary.block(off, k)
        ket = blk.inverse().apply_to(
            basis_state(k, bits_to_index(snap.outcome[off:off + k]))
        )
        v = ket.amplitudes
        out = np.kron(out, (2 ** k + 1) * np.outer(v, v.conj()) - np.eye(2 ** k))
        off += k
    return out


def snapshot_ket(snap: Snapshot) -> np.ndarray:
    """Dense vector U^dag|b> of one snapshot."""
    n = snap.unitary.n_qubits
    return snap.unitary.inverse().apply_to(
        basis_state(n, bits_to_index(snap.outcome))
    ).amplitudes


# ---------------------------------------------------------------------------
# shadow-set serialization


def _bits_line(arr: np.ndarray) -> str:
    return "".join(str(int(v)) for v in arr.reshape(-1))


def save_shadow_set(shadow: ShadowSet, path) -> None:
    """Text record stream: one header line, then one line per snapshot."""
    n = shadow.n_qubits
    with open(path, "w") as fh:
        header = {
            "n_qubits": n,
            "count": len(shadow),
            "block_sizes": list(shadow.block_sizes),
            "master_seed": shadow.master_seed,
            "source_label": shadow.source_label,
        }
        fh.write(json.dumps(header) + "\n")
        for snap in shadow.snapshots:
            u = snap.unitary
            fh.write(
                f"{snap.seed} {_bits_line(snap.outcome)} "
                f"{_bits_line(u.x)} {_bits_line(u.z)} {_bits_line(u.r)}\n"
            )


def load_shadow_set(path) -> ShadowSet:
    with open(path) as fh:
        header = json.loads(fh.readline())
        n = header["n_qubits"]
        snapshots = []
        for _ in range(header["count"]):
            seed_s, outcome_s, x_s, z_s, r_s = fh.readline().split()
            outcome = np.frombuffer(outcome_s.encode(), dtype=np.uint8) - ord("0")
            x = (np.frombuffer(x_s.encode(), dtype=np.uint8) - ord("0")).reshape(2 * n, n)
            z = (np.frombuffer(z_s.encode(), dtype=np.uint8) - ord("0")).reshape(2 * n, n)
            r = np.frombuffer(r_s.encode(), dtype=np.uint8) - ord("0")
            snapshots.append(
                Snapshot(CliffordElement(n, x, z, r), outcome.copy(), int(seed_s))
            )
    return ShadowSet(
        tuple(snapshots),
        header["source_label"],
        header["master_seed"],
        tuple(header["block_sizes"]),
    )
