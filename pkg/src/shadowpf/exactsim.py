"""Dense statevector simulation and the brute-force Gibbs oracle.

Everything stochastic in this package is validated against the routines
here: exact partition functions, exact Gibbs purifications on a doubled
register, and exact expectation values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError, NumericalError, ResourceError
from .pauli import (
    DENSE_LIMIT_DOUBLED,
    DENSE_LIMIT_SINGLE,
    Hamiltonian,
    diagonal_values,
    to_matrix,
)

_SQ2 = 1.0 / np.sqrt(2.0)


@dataclass(frozen=True)
class StateVector:
    """Amplitudes of an n-qubit ket; operations return fresh states.

    Qubit 0 is the most significant bit of the amplitude index.  States
    produced by circuits are normalized; derivative states built by the
    variational module deliberately are not.
    """

    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.amplitudes.shape != (2 ** self.n_qubits,):
            raise InputError("amplitude length must be 2**n_qubits")

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


def basis_state(n: int, index: int) -> StateVector:
    amps = np.zeros(2 ** n, dtype=complex)
    amps[index] = 1.0
    return StateVector(n, amps)


def bits_to_index(bits: Sequence[int]) -> int:
    idx = 0
    for b in bits:
        idx = (idx << 1) | int(b)
    return idx


def index_to_bits(index: int, n: int) -> np.ndarray:
    return np.array([(index >> (n - 1 - j)) & 1 for j in range(n)], dtype=np.uint8)


def overlap_sq(a: StateVector, b: StateVector) -> float:
    """|<a|b>|^2."""
    return float(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)


# ---------------------------------------------------------------------------
# gate application


def _split(amps: np.ndarray, n: int, target: int) -> np.ndarray:
    return amps.reshape(2 ** target, 2, 2 ** (n - target - 1))


def _apply_named(amps: np.ndarray, n: int, name: str, qubits: tuple[int, ...]) -> None:
    """In-place application of one gate from the Clifford + phase library."""
    if name == "H":
        v = _split(amps, n, qubits[0])
        a = v[:, 0, :].copy()
        b = v[:, 1, :]
        v[:, 0, :] = (a + b) * _SQ2
        v[:, 1, :] = (a - b) * _SQ2
    elif name == "S":
        _split(amps, n, qubits[0])[:, 1, :] *= 1j
    elif name == "SDG":
        _split(amps, n, qubits[0])[:, 1, :] *= -1j
    elif name == "X":
        v = _split(amps, n, qubits[0])
        v[:, [0, 1], :] = v[:, [1, 0], :]
    elif name == "Y":
        v = _split(amps, n, qubits[0])
        a = v[:, 0, :].copy()
        v[:, 0, :] = -1j * v[:, 1, :]
        v[:, 1, :] = 1j * a
    elif name == "Z":
        _split(amps, n, qubits[0])[:, 1, :] *= -1
    elif name == "CNOT":
        c, t = qubits
        hi, lo = (c, t) if c < t else (t, c)
        v = amps.reshape(2 ** hi, 2, 2 ** (lo - hi - 1), 2, 2 ** (n - lo - 1))
        if c < t:
            v[:, 1, :, [0, 1], :] = v[:, 1, :, [1, 0], :]
        else:
            v[:, [0, 1], :, 1, :] = v[:, [1, 0], :, 1, :]
    elif name == "CZ":
        a, b = sorted(qubits)
        v = amps.reshape(2 ** a, 2, 2 ** (b - a - 1), 2, 2 ** (n - b - 1))
        v[:, 1, :, 1, :] *= -1
    else:
        raise InputError(f"unknown gate {name!r}")


try:  # jitted kernel for long circuits on larger registers
    from numba import njit as _njit

    @_njit(cache=True)
    def _run_ops(amps, ops, n):  # pragma: no cover - exercised via apply_circuit
        dim = amps.size
        for k in range(ops.shape[0]):
            code = ops[k, 0]
            ma = 1 << (n - 1 - ops[k, 1])
            if code == 6 or code == 7:
                mb = 1 << (n - 1 - ops[k, 2])
                if code == 6:  # CNOT: flip b where a is set
                    for i in range(dim):
                        if (i & ma) and not (i & mb):
                            j = i | mb
                            tmp = amps[i]
                            amps[i] = amps[j]
                            amps[j] = tmp
                else:  # CZ
                    for i in range(dim):
                        if (i & ma) and (i & mb):
                            amps[i] = -amps[i]
            else:
                inv = 0.7071067811865476
                for i in range(dim):
                    if not (i & ma):
                        j = i | ma
                        if code == 0:  # H
                            lo = amps[i]
                            hi = amps[j]
                            amps[i] = (lo + hi) * inv
                            amps[j] = (lo - hi) * inv
                        elif code == 1:  # S
                            amps[j] = amps[j] * 1j
                        elif code == 2:  # SDG
                            amps[j] = amps[j] * -1j
                        elif code == 3:  # X
                            tmp = amps[i]
                            amps[i] = amps[j]
                            amps[j] = tmp
                        elif code == 4:  # Y
                            tmp = amps[i]
                            amps[i] = -1j * amps[j]
                            amps[j] = 1j * tmp
                        else:  # Z
                            amps[j] = -amps[j]

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

_GATE_CODES = {"H": 0, "S": 1, "SDG": 2, "X": 3, "Y": 4, "Z": 5, "CNOT": 6, "CZ": 7}


def encode_circuit(circuit: Iterable[tuple[str, tuple[int, ...]]]) -> np.ndarray:
    """Integer-encode a gate list for the jitted kernel."""
    rows = []
    for name, qubits in circuit:
        code = _GATE_CODES.get(name)
        if code is None:
            raise InputError(f"unknown gate {name!r}")
        a = qubits[0]
        b = qubits[1] if len(qubits) > 1 else 0
        rows.append((code, a, b))
    return np.array(rows, dtype=np.int64).reshape(-1, 3)


_JIT_MIN_DIM = 256


def apply_circuit(state: StateVector, circuit: Iterable[tuple[str, tuple[int, ...]]]) -> StateVector:
    """Apply a sequence of (gate name, qubit tuple) pairs."""
    n = state.n_qubits
    circuit = list(circuit)
    for name, qubits in circuit:
        if any(q < 0 or q >= n for q in qubits):
            raise InputError(f"gate target out of range: {name} {qubits}")
    amps = state.amplitudes.astype(complex, copy=True)
    if _HAVE_NUMBA and amps.size >= _JIT_MIN_DIM and len(circuit) > 8:
        _run_ops(amps, encode_circuit(circuit), n)
        return StateVector(n, amps)
    for name, qubits in circuit:
        _apply_named(amps, n, name, tuple(qubits))
    return StateVector(n, amps)


def _string_masks(string: str) -> tuple[int, int, int]:
    """(x-flip mask, phase mask over Z and Y positions, Y count)."""
    n = len(string)
    xmask = zymask = ycount = 0
    for j, c in enumerate(string):
        bit = 1 << (n - 1 - j)
        if c in ("X", "Y"):
            xmask |= bit
        if c in ("Z", "Y"):
            zymask |= bit
        if c == "Y":
            ycount += 1
    return xmask, zymask, ycount


def apply_pauli_string(amps: np.ndarray, string: str) -> np.ndarray:
    """Return P|psi> for a Pauli string P (fresh array)."""
    n = len(string)
    if amps.shape != (2 ** n,):
        raise InputError("string length does not match state size")
    xmask, zymask, ycount = _string_masks(string)
    idx = np.arange(2 ** n, dtype=np.int64)
    par = idx & zymask
    for shift in (32, 16, 8, 4, 2, 1):
        par ^= par >> shift
    phases = (1j) ** ycount * (1.0 - 2.0 * (par & 1))
    out = (phases * amps)[idx ^ xmask] if xmask else phases * amps
    return out


def apply_pauli_sum(state: StateVector, h: Hamiltonian) -> StateVector:
    """H|psi>, padding H with identities on the second register if needed."""
    strings = _padded_strings(state.n_qubits, h)
    out = np.zeros_like(state.amplitudes)
    for t, s in zip(h.terms, strings):
        out += t.coefficient * apply_pauli_string(state.amplitudes, s)
    return StateVector(state.n_qubits, out)


def _padded_strings(n_state: int, h: Hamiltonian) -> list[str]:
    if n_state == h.n_qubits:
        return [t.string for t in h.terms]
    if n_state == 2 * h.n_qubits:
        pad = "I" * h.n_qubits
        return [t.string + pad for t in h.terms]
    raise InputError(
        f"operator on {h.n_qubits} qubits cannot act on a {n_state}-qubit state"
    )


def expectation(state: StateVector, h: Hamiltonian) -> float:
    """<psi|H|psi> with H acting on the first register of a doubled state."""
    val = np.vdot(state.amplitudes, apply_pauli_sum(state, h).amplitudes)
    if abs(val.imag) > 1e-8 * max(1.0, abs(val.real)):
        raise NumericalError(f"expectation has imaginary residue {val.imag}")
    return float(val.real)


# ---------------------------------------------------------------------------
# exact Gibbs oracle


from functools import lru_cache


@lru_cache(maxsize=32)
def _eig_system(h: Hamiltonian, dense_limit: int) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and eigenvectors; real symmetric input stays real so the
    doubled purification matches imaginary-time evolution of the pair state."""
    mat = to_matrix(h, dense_limit)
    if np.abs(mat.imag).max() < 1e-13:
        vals, vecs = np.linalg.eigh(mat.real)
    else:
        vals, vecs = np.linalg.eigh(mat)
    return vals, vecs


@lru_cache(maxsize=32)
def spectrum(h: Hamiltonian, dense_limit: int = DENSE_LIMIT_SINGLE) -> np.ndarray:
    """All 2^n eigenvalues; bitstring loop for diagonal Hamiltonians, dense
    eigendecomposition otherwise.  Cached per Hamiltonian."""
    if h.n_qubits > dense_limit:
        raise ResourceError(f"n={h.n_qubits} exceeds dense limit {dense_limit}")
    if h.is_diagonal:
        return diagonal_values(h)
    return np.linalg.eigvalsh(to_matrix(h, dense_limit))


def exact_partition(h: Hamiltonian, beta: float,
                    dense_limit: int = DENSE_LIMIT_SINGLE) -> float:
    """Z(beta) = sum over the spectrum of exp(-beta * lambda)."""
    if beta < 0:
        raise InputError("beta must be nonnegative")
    return float(np.exp(-beta * spectrum(h, dense_limit)).sum())


def log_partition(h: Hamiltonian, beta: float,
                  dense_limit: int = DENSE_LIMIT_SINGLE) -> float:
    """ln Z(beta), overflow-safe for any spectral range."""
    if beta < 0:
        raise InputError("beta must be nonnegative")
    from scipy.special import logsumexp

    return float(logsumexp(-beta * spectrum(h, dense_limit)))


@dataclass(frozen=True)
class GibbsPurification:
    """Doubled-register purification of a thermal state.

    The state is sum_x w_x |v_x>|v_x> with w_x = exp(-beta lambda_x / 2)/sqrt(Z),
    where x runs over eigenvectors; z_value stores Z(beta).
    """

    beta: float
    state: StateVector
    z_value: float


def exact_gibbs(h: Hamiltonian, beta: float,
                dense_limit_per_register: int = DENSE_LIMIT_DOUBLED) -> GibbsPurification:
    """Exact Gibbs purification on 2n qubits by dense eigendecomposition."""
    if beta < 0:
        raise InputError("beta must be nonnegative")
    n = h.n_qubits
    if n > dense_limit_per_register:
        raise ResourceError(
            f"n={n} exceeds the per-register dense limit {dense_limit_per_register}"
        )
    vals, vecs = _eig_system(h, dense_limit_per_register)
    shifted = -beta * (vals - vals.min())
    weights = np.exp(0.5 * shifted)
    z_shifted = np.exp(shifted).sum()
    weights /= np.sqrt(z_shifted)
    # sum_x w_x (v_x kron v_x) written as row-major flattening of V diag(w) V^T
    mat = (vecs * weights) @ vecs.T
    amps = mat.reshape(-1).astype(complex)
    z_value = float(np.exp(-beta * vals).sum())
    return GibbsPurification(beta, StateVector(2 * n, amps), z_value)


def gibbs_overlap_exact(h: Hamiltonian, beta_1: float, beta_2: float) -> float:
    """|<mu_b1|mu_b2>|^2 = Z((b1+b2)/2)^2 / (Z(b1) Z(b2)) from the dense oracle."""
    log_val = (
        2.0 * log_partition(h, (beta_1 + beta_2) / 2)
        - log_partition(h, beta_1)
        - log_partition(h, beta_2)
    )
    return float(np.exp(log_val))
