"""Shadow estimators: overlaps, observable means, and the median-of-means core.

Pairwise snapshot traces are evaluated in closed form on the tableaus; no
2^n x 2^n snapshot matrix is ever materialized.  For global snapshots of an
N-dimensional register,

    Tr(rho_psi rho_phi) = (N+1)^2 |<b_psi| U_psi U_phi^dag |b_phi>|^2
                          - 2(N+1) + N,

and block-local snapshots factorize into the same expression per block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .clifford import ShadowSet, Snapshot, basis_amplitude_sq, snapshot_ket
from .errors import InputError
from .exactsim import StateVector
from .pauli import Hamiltonian

__all__ = [
    "MMConfig",
    "median_of_means",
    "overlap_global",
    "overlap_local",
    "overlap_vs_state",
    "overlap_symmetrized",
    "estimate_observable",
    "product_mean_bound_check",
    "snapshot_pair_trace",
    "SnapshotEvaluator",
]


@dataclass(frozen=True)
class MMConfig:
    """Median-of-means shape: N samples split into K contiguous groups."""

    total_samples: int
    group_count: int

    def __post_init__(self):
        if self.group_count < 1:
            raise InputError("group_count must be >= 1")
        if self.total_samples < self.group_count:
            raise InputError("need at least one sample per group")


def median_of_means(values: Sequence[float], k: int) -> float:
    """Median of K contiguous group means; the remainder is truncated."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise InputError("empty input")
    if k < 1 or k > values.size:
        raise InputError("need 1 <= K <= len(values)")
    group = values.size // k
    means = values[: group * k].reshape(k, group).mean(axis=1)
    return float(np.median(means))


def product_mean_bound_check(relative_variances: Sequence[float],
                             epsilon1: float, delta1: float) -> int:
    """Samples per factor for a relative-error product estimate: ceil(2Bl/(d e^2)).

    B is the common bound on the relative variances E[X^2]/E[X]^2 and l the
    number of independent factors.
    """
    if epsilon1 <= 0 or delta1 <= 0:
        raise InputError("epsilon1 and delta1 must be positive")
    rv = list(relative_variances)
    if not rv:
        raise InputError("need at least one relative variance")
    if any(v < 1.0 for v in rv):
        raise InputError("relative variances are bounded below by 1")
    bound = max(rv)
    return math.ceil(2.0 * bound * len(rv) / (delta1 * epsilon1 ** 2))


# ---------------------------------------------------------------------------
# overlap estimators


def _block_offsets(block_sizes: Sequence[int]) -> list[tuple[int, int]]:
    out = []
    off = 0
    for k in block_sizes:
        out.append((off, k))
        off += k
    return out


def snapshot_pair_trace(a: Snapshot, b: Snapshot,
                        block_sizes: Sequence[int]) -> float:
    """Closed-form Tr(rho_a rho_b) for one snapshot pair."""
    value = 1.0
    for off, k in _block_offsets(block_sizes):
        dim = 2 ** k
        if len(block_sizes) == 1:
            w = a.unitary.compose(b.unitary.inverse())
        else:
            w = a.unitary.block(off, k).compose(b.unitary.block(off, k).inverse())
        amp_sq = basis_amplitude_sq(w, b.outcome[off:off + k], a.outcome[off:off + k])
        value *= (dim + 1) ** 2 * amp_sq - 2 * (dim + 1) + dim
    return value


def _check_compatible(shadow_psi: ShadowSet, shadow_phi: ShadowSet) -> None:
    if shadow_psi.n_qubits != shadow_phi.n_qubits:
        raise InputError("qubit count mismatch between shadow sets")
    if len(shadow_psi) != len(shadow_phi):
        raise InputError("shadow sets must have equal size")
    if shadow_psi.block_sizes != shadow_phi.block_sizes:
        raise InputError("shadow sets have different block structure")


def overlap_global(shadow_psi: ShadowSet, shadow_phi: ShadowSet,
                   pairing: str = "matched") -> float:
    """Unbiased estimate of |<psi|phi>|^2 from two global-shadow sets.

    ``pairing='matched'`` averages Tr(rho_j(psi) rho_j(phi)) over aligned
    snapshot indices; ``'all_pairs'`` averages over the full product grid
    (a lower-variance U-statistic, off by default).
    """
    _check_compatible(shadow_psi, shadow_phi)
    if shadow_psi.block_sizes != (shadow_psi.n_qubits,):
        raise InputError("overlap_global requires full-register snapshots")
    return _overlap(shadow_psi, shadow_phi, pairing)


def overlap_local(shadow_psi: ShadowSet, shadow_phi: ShadowSet, k: int,
                  pairing: str = "matched") -> float:
    """Overlap estimate from block-local shadows with blocks of size k.

    The final block may be smaller when k does not divide n; with k = n this
    reduces exactly to the global estimator.
    """
    _check_compatible(shadow_psi, shadow_phi)
    blocks = shadow_psi.block_sizes
    if blocks[0] != min(k, shadow_psi.n_qubits):
        raise InputError(
            f"shadow sets were collected with blocks {blocks}, not k={k}"
        )
    return _overlap(shadow_psi, shadow_phi, pairing)


_ALL_PAIRS_DENSE_LIMIT = 13


def _overlap(shadow_psi: ShadowSet, shadow_phi: ShadowSet, pairing: str) -> float:
    blocks = shadow_psi.block_sizes
    if pairing == "matched":
        vals = [
            snapshot_pair_trace(a, b, blocks)
            for a, b in zip(shadow_psi.snapshots, shadow_phi.snapshots)
        ]
        return float(np.mean(vals))
    if pairing != "all_pairs":
        raise InputError("pairing must be 'matched' or 'all_pairs'")
    n = shadow_psi.n_qubits
    if len(blocks) == 1 and n <= _ALL_PAIRS_DENSE_LIMIT:
        # average over all M^2 pairs via the cross-Gram matrix of snapshot kets
        dim = 2 ** n
        vp = np.stack([snapshot_ket(s) for s in shadow_psi.snapshots])
        vf = np.stack([snapshot_ket(s) for s in shadow_phi.snapshots])
        gram = vp.conj() @ vf.T
        mean_amp_sq = float(np.mean(np.abs(gram) ** 2))
        return (dim + 1) ** 2 * mean_amp_sq - 2 * (dim + 1) + dim
    vals = [
        snapshot_pair_trace(a, b, blocks)
        for a in shadow_psi.snapshots
        for b in shadow_phi.snapshots
    ]
    return float(np.mean(vals))


def overlap_vs_state(shadow: ShadowSet, other: StateVector) -> float:
    """One-sided overlap estimate of |<psi|other>|^2 from a shadow of psi.

    The per-snapshot value is (2^n + 1)|<other|U^dag|b>|^2 - 1, the quantity
    whose variance is bounded by an n-independent constant; this is the
    high-precision mode the overlap experiments use when one state of the
    pair is available classically.
    """
    if other.n_qubits != shadow.n_qubits:
        raise InputError("state size does not match the shadow register")
    dim = 2 ** shadow.n_qubits
    vals = [
        (dim + 1) * abs(np.vdot(other.amplitudes, snapshot_ket(s))) ** 2 - 1
        for s in shadow.snapshots
    ]
    return float(np.mean(vals))


def overlap_symmetrized(shadow_psi: ShadowSet, psi: StateVector,
                        shadow_phi: ShadowSet, phi: StateVector) -> float:
    """Average of the two one-sided estimates; uses both shadow sets."""
    return 0.5 * (overlap_vs_state(shadow_psi, phi) + overlap_vs_state(shadow_phi, psi))


# ---------------------------------------------------------------------------
# observable estimation


class SnapshotEvaluator:
    """Caches per-snapshot diagonal values <b|U P U^dag|b> for Pauli strings.

    The conjugated string contributes 0 unless it is I/Z-only, in which case
    its value is the tracked sign times (-1)^(z bits . b).  Columns are cached
    so several observables (e.g. all powers of H) can share one shadow pass.
    The channel-inversion multiplier is assembled per block, so global and
    block-local shadow sets evaluate through the same code path.
    """

    def __init__(self, shadow: ShadowSet):
        self.shadow = shadow
        self.n = shadow.n_qubits
        self._cache: dict[str, np.ndarray] = {}
        self._mult_cache: dict[str, float] = {}

    def diag_values(self, strings: Sequence[str]) -> np.ndarray:
        """(n_snapshots x n_strings) matrix of diagonal snapshot values."""
        missing = [s for s in strings if s not in self._cache]
        if missing:
            from .clifford import string_to_bits

            bx = np.zeros((len(missing), self.n), dtype=np.uint8)
            bz = np.zeros((len(missing), self.n), dtype=np.uint8)
            br = np.zeros(len(missing), dtype=np.uint8)
            for i, s in enumerate(missing):
                bx[i], bz[i], br[i] = string_to_bits(s)
            cols = np.zeros((len(self.shadow), len(missing)))
            for row, snap in enumerate(self.shadow.snapshots):
                cx, cz, cr = snap.unitary.conjugate_bits(bx, bz, br)
                diagonal = ~cx.any(axis=1)
                y = (cx & cz).sum(axis=1) % 4
                sign = 1.0 - ((cr.astype(np.int64) - y) % 4)  # 0 -> +1, 2 -> -1
                zdotb = (cz @ snap.outcome.astype(np.int64)) % 2
                cols[row] = diagonal * sign * (1.0 - 2.0 * zdotb)
            for i, s in enumerate(missing):
                self._cache[s] = cols[:, i]
        return np.stack([self._cache[s] for s in strings], axis=1)

    def _inversion_multiplier(self, string: str) -> float:
        """Product of (2^k + 1) over the blocks the string touches."""
        if string not in self._mult_cache:
            mult = 1.0
            off = 0
            for k in self.shadow.block_sizes:
                if any(c != "I" for c in string[off:off + k]):
                    mult *= 2 ** k + 1
                off += k
            self._mult_cache[string] = mult
        return self._mult_cache[string]

    def observable_values(self, obs: Hamiltonian) -> np.ndarray:
        """Per-snapshot unbiased values of Tr(obs rho).

        Tr(P rho_hat) factorizes over snapshot blocks: blocks the string
        touches contribute (2^k + 1) times the diagonal evaluation, identity
        blocks contribute 1, and the all-identity string evaluates to 1
        exactly (trace normalization).
        """
        strings = [self._padded(t.string) for t in obs.terms]
        coeffs = np.array(
            [t.coefficient * self._inversion_multiplier(s)
             for t, s in zip(obs.terms, strings)]
        )
        # the all-identity string has multiplier 1 and diagonal value 1, so
        # trace normalization (value exactly coefficient) needs no special case
        return self.diag_values(strings) @ coeffs

    def _padded(self, string: str) -> str:
        """Pad with identities so the observable acts on the leading qubits."""
        if len(string) > self.n:
            raise InputError("observable does not fit the snapshot register")
        return string + "I" * (self.n - len(string))


def estimate_observable(shadow: ShadowSet, obs: Hamiltonian, mm: MMConfig,
                        evaluator: SnapshotEvaluator | None = None) -> float:
    """Median-of-means estimate of Tr(obs rho) from a shadow set.

    The observable may act on the full register, on the first half of a
    doubled register, or on a leading sub-register; missing qubits are padded
    with identities.
    """
    if mm.total_samples > len(shadow):
        raise InputError("median-of-means config exceeds the shadow size")
    ev = evaluator if evaluator is not None else SnapshotEvaluator(shadow)
    values = ev.observable_values(obs)[: mm.total_samples]
    return median_of_means(values, mm.group_count)
