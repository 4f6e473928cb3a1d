"""Variational imaginary-time preparation of Gibbs purifications.

The trial state lives on the doubled 2n-qubit register and is produced by
alternating Hamiltonian-variational layers exp(-i theta_d G_d), where each
layer generator G_d is a sum of commuting Pauli strings sharing the layer
angle.  Stepping in inverse temperature minimizes the distance between the
linearized imaginary-time update and the tangent move of the ansatz, which
reduces to the normal equations A(theta) dtheta = C(theta).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .clifford import collect_shadow
from .errors import InputError, NumericalError, ResourceError, StepSizeError
from .exactsim import (
    StateVector,
    apply_pauli_string,
    apply_pauli_sum,
    exact_gibbs,
    expectation,
    overlap_sq,
)
from .pauli import DENSE_LIMIT_DOUBLED, Hamiltonian
from .shadows import MMConfig, SnapshotEvaluator, estimate_observable


def prepare_mu0(n: int) -> StateVector:
    """Maximally entangled pair state 2^(-n/2) sum_i |i>|i> on 2n qubits."""
    if n > DENSE_LIMIT_DOUBLED:
        raise ResourceError(f"n={n} exceeds the per-register dense limit")
    dim = 2 ** n
    amps = np.zeros(dim * dim, dtype=complex)
    amps[np.arange(dim) * dim + np.arange(dim)] = dim ** -0.5
    return StateVector(2 * n, amps)


@dataclass(frozen=True)
class AnsatzLayout:
    """Alternating layer structure: one generator (tuple of Pauli strings,
    all mutually commuting) per variational parameter."""

    n_qubits: int
    layers: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        for layer in self.layers:
            for s in layer:
                if len(s) != self.n_qubits:
                    raise InputError("layer string length mismatch")

    @property
    def depth(self) -> int:
        return len(self.layers)


def _strings_commute(a: str, b: str) -> bool:
    anti = 0
    for ca, cb in zip(a, b):
        if ca != "I" and cb != "I" and ca != cb:
            anti += 1
    return anti % 2 == 0


def _commuting_partition(strings: Iterable[str]) -> list[tuple[str, ...]]:
    """Greedy first-fit grouping into mutually commuting layers."""
    groups: list[list[str]] = []
    for s in strings:
        for g in groups:
            if all(_strings_commute(s, t) for t in g):
                g.append(s)
                break
        else:
            groups.append([s])
    return [tuple(g) for g in groups]


# single-site twist: replace one factor of a Hamiltonian string so the
# tangent -iG|pair state> points along the imaginary-time direction, and the
# mirrored single-site partner that closes the phase on the second register
_TWIST = {"Z": ("Y", "X"), "X": ("Y", "Z"), "Y": ("X", "Z")}


def gibbs_flow_layout(h: Hamiltonian, depth: int) -> AnsatzLayout:
    """Default ansatz for tracking the Gibbs flow of ``h`` on 2n qubits.

    Cycles through three kinds of commuting layers, all identity at angle
    zero so theta = 0 reproduces the infinite-temperature pair state:

    * twisted copies of each Hamiltonian term (one support site swapped per
      the twist table, with the mirrored single-site partner on the second
      register) -- these give nonzero flow projections at the maximally
      entangled start;
    * weight movers: X_i (x) Y_i' register pairs and bond flips
      X_i X_j (x) X_i Y_j', which redistribute Schmidt weights;
    * frame movers: the Hamiltonian's own terms applied to both registers
      under a shared angle.
    """
    if depth < 1:
        raise InputError("depth must be >= 1")
    n = h.n_qubits
    m = 2 * n
    ident = "I" * m

    def put(chars: dict[int, str]) -> str:
        s = list(ident)
        for q, c in chars.items():
            s[q] = c
        return "".join(s)

    twists = []
    for term in h.terms:
        support = [j for j, c in enumerate(term.string) if c != "I"]
        for j in support:
            twist_char, partner = _TWIST[term.string[j]]
            chars = {k: term.string[k] for k in support}
            chars[j] = twist_char
            chars[n + j] = partner
            twists.append(put(chars))
    twist_groups = _commuting_partition(dict.fromkeys(twists))

    weight_single = tuple(put({i: "X", n + i: "Y"}) for i in range(n))
    bond_flips = []
    if n >= 2:
        bonds = [(i, (i + 1) % n) for i in range(n if n > 2 else 1)]
        for i, j in bonds:
            bond_flips.append(put({i: "X", j: "X", n + i: "X", n + j: "Y"}))
            bond_flips.append(put({i: "X", j: "X", n + i: "Y", n + j: "X"}))
    weight_groups = [weight_single] + _commuting_partition(dict.fromkeys(bond_flips))

    frame_strings = [t.string + "I" * n for t in h.terms] + [
        "I" * n + t.string for t in h.terms
    ]
    frame_groups = _commuting_partition(dict.fromkeys(frame_strings))

    cycle = twist_groups + weight_groups + frame_groups
    layers = tuple(cycle[d % len(cycle)] for d in range(depth))
    return AnsatzLayout(m, layers)


@dataclass(frozen=True)
class AnsatzState:
    """Parameter vector plus layer structure of the trial state."""

    layout: AnsatzLayout
    theta: np.ndarray

    def __post_init__(self):
        if len(self.theta) != self.layout.depth:
            raise InputError("theta length must match the layout depth")

    @property
    def n_qubits(self) -> int:
        return self.layout.n_qubits

    def with_theta(self, theta: np.ndarray) -> "AnsatzState":
        return AnsatzState(self.layout, np.asarray(theta, dtype=float))


def _apply_rotation(amps: np.ndarray, string: str, angle: float) -> np.ndarray:
    """exp(-i angle P) |psi> = cos(angle) |psi> - i sin(angle) P|psi>."""
    if angle == 0.0:
        return amps
    return math.cos(angle) * amps - 1j * math.sin(angle) * apply_pauli_string(amps, string)


def ansatz_state(ansatz: AnsatzState,
                 shift: tuple[int, int, float] | None = None) -> StateVector:
    """|phi(theta)>, optionally with one rotation factor's angle shifted.

    ``shift = (layer, factor, delta)`` adds delta to that factor's angle only;
    factors within a layer commute, so their application order is free.
    """
    n_single = ansatz.n_qubits // 2
    amps = prepare_mu0(n_single).amplitudes.copy()
    for d, layer in enumerate(ansatz.layout.layers):
        for r, string in enumerate(layer):
            angle = float(ansatz.theta[d])
            if shift is not None and shift[0] == d and shift[1] == r:
                angle += shift[2]
            amps = _apply_rotation(amps, string, angle)
    return StateVector(ansatz.n_qubits, amps)


def derivative_state(ansatz: AnsatzState, m: int) -> StateVector:
    """Exact d|phi>/d theta_m via the product rule over the layer's factors.

    Each factor exp(-i theta P) differentiates to its +pi/2-shifted copy, so
    the derivative is the sum of per-factor shifted states.  The result is
    not normalized.
    """
    if not 0 <= m < ansatz.layout.depth:
        raise InputError("layer index out of range")
    total = np.zeros(2 ** ansatz.n_qubits, dtype=complex)
    for r in range(len(ansatz.layout.layers[m])):
        total += ansatz_state(ansatz, shift=(m, r, math.pi / 2)).amplitudes
    return StateVector(ansatz.n_qubits, total)


# ---------------------------------------------------------------------------
# A matrix and C vector


def build_a_matrix(ansatz: AnsatzState, mode: str = "exact", shots: int = 0,
                   rng: np.random.Generator | None = None) -> np.ndarray:
    """Gram matrix A_{n,m} = Re <d_n phi | d_m phi>.

    Exact mode takes dense inner products.  Shot mode simulates the one-
    ancilla interference circuit per factor pair: the ancilla bias 2 Pr(0) - 1
    equals the real part of the inner product of the two shifted states, and
    Pr(0) is replaced by a binomial frequency at the given shot count.
    """
    depth = ansatz.layout.depth
    if mode == "exact":
        derivs = [derivative_state(ansatz, m).amplitudes for m in range(depth)]
        a = np.empty((depth, depth))
        for i in range(depth):
            for j in range(i, depth):
                a[i, j] = a[j, i] = np.vdot(derivs[i], derivs[j]).real
        return a
    if mode != "shots":
        raise InputError("mode must be 'exact' or 'shots'")
    if shots < 1 or rng is None:
        raise InputError("shot mode needs a positive shot count and an rng")
    shifted = [
        [ansatz_state(ansatz, shift=(m, r, math.pi / 2)).amplitudes
         for r in range(len(ansatz.layout.layers[m]))]
        for m in range(depth)
    ]
    a = np.zeros((depth, depth))
    for i in range(depth):
        for j in range(i, depth):
            acc = 0.0
            for u in shifted[i]:
                for v in shifted[j]:
                    pr0 = 0.5 * (1.0 + np.vdot(u, v).real)
                    freq = rng.binomial(shots, min(max(pr0, 0.0), 1.0)) / shots
                    acc += 2.0 * freq - 1.0
            a[i, j] = a[j, i] = acc
    return a


def trial_energy(ansatz: AnsatzState, h: Hamiltonian,
                 phi: StateVector | None = None) -> float:
    state = phi if phi is not None else ansatz_state(ansatz)
    return expectation(state, h)


def build_c_vector(ansatz: AnsatzState, h: Hamiltonian, delta_beta: float,
                   mode: str = "exact",
                   mm: MMConfig | None = None,
                   master_seed: int | None = None,
                   shots: int = 0,
                   rng: np.random.Generator | None = None) -> np.ndarray:
    """Projection of the linearized imaginary-time move onto the tangent basis:

        C_m = (1/sqrt(E) - 1) Re<phi|d_m phi> - (tau/sqrt(E)) Re<d_m phi|H|phi>

    with tau = dbeta/2 and E = 1 - 2 tau <phi|H|phi>.  Purification amplitudes
    carry exp(-beta lambda / 2), so advancing the inverse temperature by dbeta
    applies exp(-(dbeta/2) H) to the state; tau is that half-step exponent.

    Exact mode evaluates dense inner products; shadow mode estimates the
    energy cross-term from Clifford snapshots of the ancilla superposition of
    |phi> and |d_m phi>, summing per-term median-of-means estimates of the
    X (x) h_i observables.
    """
    if delta_beta < 0:
        raise InputError("delta_beta must be nonnegative")
    tau = 0.5 * delta_beta
    phi = ansatz_state(ansatz)
    energy = expectation(phi, h)
    e_beta = 1.0 - 2.0 * tau * energy
    if e_beta <= 0:
        raise StepSizeError(
            f"E_beta = {e_beta:.3g} <= 0 at dbeta = {delta_beta}; shrink the step"
        )
    inv_sqrt = 1.0 / math.sqrt(e_beta)
    depth = ansatz.layout.depth
    c = np.zeros(depth)
    h_phi = apply_pauli_sum(phi, h).amplitudes
    for m in range(depth):
        dm = derivative_state(ansatz, m).amplitudes
        first_inner = np.vdot(phi.amplitudes, dm).real
        if mode == "shots" and shots > 0 and rng is not None:
            pr0 = 0.5 * (1.0 + first_inner)
            first_inner = 2.0 * rng.binomial(shots, min(max(pr0, 0.0), 1.0)) / shots - 1.0
        if mode == "exact" or mode == "shots":
            cross = np.vdot(dm, h_phi).real
        elif mode == "shadow":
            if mm is None or master_seed is None:
                raise InputError("shadow mode needs an MMConfig and a master seed")
            cross = _cross_term_from_shadow(phi, dm, h, mm, master_seed + m)
        else:
            raise InputError("mode must be 'exact', 'shots', or 'shadow'")
        c[m] = (inv_sqrt - 1.0) * first_inner - tau * inv_sqrt * cross
    return c


def _cross_term_from_shadow(phi: StateVector, deriv_amps: np.ndarray,
                            h: Hamiltonian, mm: MMConfig, seed: int) -> float:
    """Re <d_m phi|H|phi> from snapshots of (|0>|phi> + |1>|d_m phi>)/sqrt(2).

    The ancilla-crossed observables X (x) h_i pick out exactly the wanted real
    part; the physical state is normalized, so the raw estimate is scaled
    back by the superposition norm.
    """
    joint = np.concatenate([phi.amplitudes, deriv_amps])
    norm_sq = 0.5 * (1.0 + float(np.vdot(deriv_amps, deriv_amps).real))
    joint = joint / math.sqrt(2.0 * norm_sq)
    state = StateVector(phi.n_qubits + 1, joint)
    shadow = collect_shadow(state, mm.total_samples, master_seed=seed,
                            source_label="c-vector")
    ev = SnapshotEvaluator(shadow)
    total = 0.0
    for term in h.terms:
        obs = Hamiltonian.from_terms(
            phi.n_qubits + 1,
            [(term.coefficient, "X" + term.string + "I" * len(term.string))],
        )
        total += estimate_observable(shadow, obs, mm, evaluator=ev)
    return total * norm_sq


def solve_step(a: np.ndarray, c: np.ndarray, lambda_reg: float = 1e-6) -> np.ndarray:
    """Solve (A + lambda I) dtheta = C; Tikhonov keeps rank-deficient Gram
    matrices of overparameterized layouts solvable."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InputError("A must be square")
    if np.abs(a - a.T).max() > 1e-8:
        raise InputError("A must be symmetric")
    try:
        delta = np.linalg.solve(a + lambda_reg * np.eye(a.shape[0]), c)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"linear solve failed: {exc}") from exc
    if not np.all(np.isfinite(delta)):
        raise NumericalError("linear solve produced non-finite values")
    return delta


# ---------------------------------------------------------------------------
# imaginary-time stepping


@dataclass(frozen=True)
class StepRecord:
    """One accepted inverse-temperature step."""

    beta: float
    theta: np.ndarray
    a_matrix: np.ndarray
    c_vector: np.ndarray
    residual_loss: float
    energy: float
    fidelity: float | None = None


@dataclass(frozen=True)
class EvolveConfig:
    depth: int = 8
    delta_beta: float = 0.01
    lambda_reg: float = 1e-6
    a_mode: str = "exact"
    c_mode: str = "exact"
    shots: int = 0
    shadow_samples: int = 0
    shadow_groups: int = 1
    seed: int = 0
    max_retries: int = 8
    compute_fidelity: bool = True
    trajectory_path: str | None = None
    layout: AnsatzLayout | None = None


def _residual_loss(phi_amps: np.ndarray, h: Hamiltonian, state: StateVector,
                   delta_beta: float, derivs: list[np.ndarray],
                   delta_theta: np.ndarray) -> float:
    """||d|mu> - sum_d dtheta_d d_d|phi>||^2 with the exact linearized target.

    The half-step exponent matches the purification convention (amplitudes
    scale as exp(-beta lambda / 2))."""
    moved = phi_amps - 0.5 * delta_beta * apply_pauli_sum(state, h).amplitudes
    moved /= np.linalg.norm(moved)
    target = moved - phi_amps
    tangent = sum(dt * dv for dt, dv in zip(delta_theta, derivs))
    return float(np.linalg.norm(target - tangent) ** 2)


def evolve(h: Hamiltonian, beta_targets: Sequence[float], config: EvolveConfig,
           gibbs_oracle: bool = True) -> list[tuple[float, AnsatzState, StateVector, StepRecord]]:
    """Step the trial state from beta = 0 to each requested target.

    Returns one entry per target: (beta, ansatz, state, last step record).
    Fidelity against the dense Gibbs oracle is attached when affordable.
    Steps that drive E_beta nonpositive are retried with a halved dbeta up to
    ``max_retries`` times.
    """
    targets = sorted(float(b) for b in beta_targets)
    if any(b < 0 for b in targets):
        raise InputError("beta targets must be nonnegative")
    layout = config.layout if config.layout is not None else gibbs_flow_layout(h, config.depth)
    if layout.depth != config.depth:
        raise InputError("layout depth disagrees with config.depth")
    ansatz = AnsatzState(layout, np.zeros(config.depth))
    rng = np.random.default_rng(config.seed)
    mm = (
        MMConfig(config.shadow_samples, config.shadow_groups)
        if config.c_mode == "shadow"
        else None
    )
    writer = None
    fh = None
    if config.trajectory_path:
        fh = open(config.trajectory_path, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(
            ["beta", "residual_loss", "fidelity", "energy"]
            + [f"theta_{i}" for i in range(config.depth)]
        )

    out = []
    beta = 0.0
    step_count = 0
    record = None
    try:
        for target in targets:
            while beta < target - 1e-12:
                dbeta = min(config.delta_beta, target - beta)
                for attempt in range(config.max_retries + 1):
                    try:
                        record, ansatz = _one_step(
                            h, ansatz, dbeta, config, rng, mm, beta, step_count
                        )
                        break
                    except StepSizeError:
                        if attempt == config.max_retries:
                            raise
                        dbeta /= 2.0
                beta += dbeta
                step_count += 1
                if writer is not None:
                    writer.writerow(
                        [beta, record.residual_loss, record.fidelity, record.energy]
                        + list(ansatz.theta)
                    )
            state = ansatz_state(ansatz)
            fidelity = None
            if config.compute_fidelity and gibbs_oracle and h.n_qubits <= DENSE_LIMIT_DOUBLED:
                fidelity = overlap_sq(state, exact_gibbs(h, beta).state)
            final = StepRecord(
                beta=beta,
                theta=ansatz.theta.copy(),
                a_matrix=record.a_matrix if record is not None else np.zeros((config.depth,) * 2),
                c_vector=record.c_vector if record is not None else np.zeros(config.depth),
                residual_loss=record.residual_loss if record is not None else 0.0,
                energy=trial_energy(ansatz, h, state),
                fidelity=fidelity,
            )
            out.append((beta, ansatz, state, final))
    finally:
        if fh is not None:
            fh.close()
    return out


def _one_step(h, ansatz, dbeta, config, rng, mm, beta, step_count):
    phi = ansatz_state(ansatz)
    a = build_a_matrix(ansatz, mode=config.a_mode, shots=config.shots, rng=rng)
    c = build_c_vector(
        ansatz, h, dbeta,
        mode=config.c_mode, mm=mm,
        master_seed=(config.seed * 1_000_003 + step_count * 1009) if mm else None,
        shots=config.shots, rng=rng,
    )
    delta_theta = solve_step(a, c, config.lambda_reg)
    derivs = [derivative_state(ansatz, m).amplitudes for m in range(ansatz.layout.depth)]
    loss = _residual_loss(phi.amplitudes, h, phi, dbeta, derivs, delta_theta)
    new = ansatz.with_theta(ansatz.theta + delta_theta)
    record = StepRecord(
        beta=beta + dbeta,
        theta=new.theta.copy(),
        a_matrix=a,
        c_vector=c,
        residual_loss=loss,
        energy=trial_energy(new, h),
    )
    return record, new
