"""End-to-end partition-function estimation pipeline.

Rescale the Hamiltonian into the spectral window, build a cooling schedule,
prepare the Gibbs state at every rung (dense oracle or variational circuit),
estimate the shrink/grow ratio pair at each rung from one shared shadow set,
and telescope Z(beta) = 2^n * prod E[V_i]/E[W_i].  All randomness flows from
the configured master seed.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .clifford import collect_shadow
from .errors import ConfigError, InputError
from .exactsim import (
    DENSE_LIMIT_SINGLE,
    StateVector,
    exact_gibbs,
    exact_partition,
    log_partition,
)
from .expansion import build_expansion, estimate_exp_mean, exact_exp_mean
from .pauli import Hamiltonian, ham_diagonal, ham_hubbard_jw, ham_ising, rescale
from .schedule import CoolingSchedule, ScheduleConfig, csbs
from .shadows import MMConfig, SnapshotEvaluator, product_mean_bound_check
from .variational import EvolveConfig, evolve


@dataclass(frozen=True)
class RunConfig:
    """Configuration of one pipeline run; the seed is mandatory."""

    family: str = "ising"
    n: int = 3
    beta: float = 2.0
    seed: int | None = None
    # hubbard parameters
    n_a: int = 1
    n_b: int = 2
    t: float = 1.0
    u: float = 2.0
    hamiltonian_text: str | None = None
    periodic: bool = True
    # accuracy targets
    c2: float = 15.0
    window_delta: float = 0.2
    eps2: float = 0.1
    eps3: float = 0.1
    eps4: float = 1e-3
    delta2: float = 0.05
    delta3: float = 0.05
    # budgets and stage modes
    m_samples: int | None = 1000
    mm_groups: int = 10
    schedule_mode: str = "exact"
    schedule_estimator: str = "one_sided"
    gibbs_mode: str = "oracle"
    mean_mode: str = "exact"
    # register the mean-value snapshots act on: the purification's first
    # register carries every <H^s> and keeps the inversion constants at the
    # 2^n scale; "doubled" rotates the full purification instead
    mean_register: str = "first"
    # block size for the mean-value Cliffords (None: full-register sampling;
    # small blocks sharply reduce the variance of low-weight Pauli moments)
    mean_block_size: int | None = None
    guard_epsilon: float = 0.0
    # variational stage
    depth: int = 8
    delta_beta: float = 0.01
    term_cap: int = 100_000
    # estimation-ladder refinement: schedule rungs are subdivided so each
    # ratio's exponent half-gap stays within the expansion's comfort zone
    max_step_d: float = 1.0

    def __post_init__(self):
        if self.seed is None:
            raise ConfigError("a master seed is mandatory (no wall-clock seeding)")
        for name in ("eps2", "eps3", "eps4", "delta2", "delta3"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ConfigError(f"{name} must lie in (0, 1)")
        if not 0 < self.window_delta < 1:
            raise ConfigError("window_delta must lie in (0, 1)")
        if self.m_samples is not None and self.m_samples < 1:
            raise ConfigError("m_samples must be >= 1 (or null for auto sizing)")
        if self.schedule_mode not in ("exact", "shadow"):
            raise ConfigError("schedule_mode must be 'exact' or 'shadow'")
        if self.gibbs_mode not in ("oracle", "variational"):
            raise ConfigError("gibbs_mode must be 'oracle' or 'variational'")
        if self.mean_mode not in ("exact", "shadow"):
            raise ConfigError("mean_mode must be 'exact' or 'shadow'")
        if self.mean_register not in ("first", "doubled"):
            raise ConfigError("mean_register must be 'first' or 'doubled'")

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in cls.__dataclass_fields__.values()}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


def build_hamiltonian(config: RunConfig) -> Hamiltonian:
    if config.family == "ising":
        return ham_ising(config.n, periodic=config.periodic)
    if config.family == "diagonal":
        return ham_diagonal(config.n)
    if config.family == "hubbard":
        return ham_hubbard_jw(config.n_a, config.n_b, config.t, config.u)
    if config.family == "file":
        if not config.hamiltonian_text:
            raise ConfigError("family 'file' needs hamiltonian_text")
        return Hamiltonian.from_text(config.hamiltonian_text)
    raise ConfigError(f"unknown family {config.family!r}")


@dataclass(frozen=True)
class StepSummary:
    beta_index: int
    beta: float
    ev: float
    ew: float
    ev_exact: float
    ew_exact: float


@dataclass
class RunReport:
    """Everything one pipeline run produced, serializable and deterministic
    for a fixed config and seed (modulo the timestamp field)."""

    config: dict
    n_qubits: int
    scale: float
    schedule: CoolingSchedule
    steps: list[StepSummary]
    z_hat: float
    z_exact: float | None
    rel_error: float | None
    ledger: dict
    timestamp: float = field(default_factory=time.time)

    def to_json(self) -> str:
        payload = {
            "config": self.config,
            "n_qubits": self.n_qubits,
            "scale": self.scale,
            "schedule": json.loads(self.schedule.to_json()),
            "steps": [asdict(s) for s in self.steps],
            "z_hat": self.z_hat,
            "z_exact": self.z_exact,
            "rel_error": self.rel_error,
            "ledger": self.ledger,
            "timestamp": self.timestamp,
        }
        return json.dumps(payload, sort_keys=True, indent=2)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["beta_index", "beta", "EV", "EW", "EV_exact", "EW_exact"])
            for s in self.steps:
                writer.writerow(
                    [s.beta_index, s.beta, s.ev, s.ew, s.ev_exact, s.ew_exact]
                )


def estimate_partition(config: RunConfig) -> RunReport:
    """Run the three-stage pipeline and report the partition estimate.

    The pipeline operates on the rescaled Hamiltonian h' = h/s over the
    stretched axis beta' = beta * s; since Z_h(beta) = Z_h'(beta * s), the
    telescoped product directly estimates the requested Z_h(beta) with
    Z(0) = 2^n.
    """
    h_raw = build_hamiltonian(config)
    n = h_raw.n_qubits
    h = rescale(h_raw, config.window_delta)
    scale = h.scale / h_raw.scale
    beta_scaled = config.beta * scale
    ledger: dict = {"schedule_snapshots": 0, "gibbs_snapshots": 0, "mean_snapshots": 0}

    z_exact = None
    if n <= DENSE_LIMIT_SINGLE:
        z_exact = exact_partition(h_raw, config.beta)

    if config.beta == 0.0:
        schedule = CoolingSchedule(0.0, config.c2, (0.0,), ())
        report = RunReport(
            config=config.to_dict(),
            n_qubits=n,
            scale=scale,
            schedule=schedule,
            steps=[],
            z_hat=float(2 ** n),
            z_exact=z_exact,
            rel_error=abs(2 ** n - z_exact) / z_exact if z_exact else None,
            ledger=ledger,
        )
        return report

    # stage 1: cooling schedule
    sched_cfg = ScheduleConfig(
        mode=config.schedule_mode,
        m_samples=_budget(config),
        seed=config.seed,
        estimator=config.schedule_estimator,
        guard_epsilon=config.guard_epsilon if config.guard_epsilon else config.eps2 / 2,
    )
    sched_stats: dict = {}
    schedule = csbs(h, beta_scaled, c2=config.c2, config=sched_cfg, stats=sched_stats)
    ledger["schedule_snapshots"] = sched_stats["snapshots"]
    ledger["schedule_shadow_sets"] = (
        sched_stats["anchor_shadows"] + sched_stats["probe_shadows"]
    )
    ledger["schedule_predicate_calls"] = sched_stats["predicate_calls"]

    # estimation ladder: subdivide long rungs so every half-gap d stays
    # within the certified-expansion comfort zone (telescoping and the
    # variance certificates both survive refinement)
    ladder = _refine_ladder(schedule.betas, config.max_step_d)

    # stage 2: Gibbs states at every ladder point
    states = _gibbs_states(h, ladder, config, ledger)

    # stage 3: ratio estimates with one shadow set per ladder point, reused
    # for the shrink estimate and the grow estimate at the same point
    steps: list[StepSummary] = []
    log_product = 0.0
    budget = _budget(config)
    mm = MMConfig(budget, min(config.mm_groups, budget))
    shadows = [None] * len(ladder)
    evaluators: list[SnapshotEvaluator | None] = [None] * len(ladder)
    if config.mean_mode == "shadow":
        sub = h.n_qubits if config.mean_register == "first" else None
        for i, state in enumerate(states):
            shadows[i] = collect_shadow(
                state, budget, master_seed=config.seed + 104729 * (i + 1),
                block_size=config.mean_block_size,
                measure_first=sub, source_label=f"gibbs rung {i}",
            )
            evaluators[i] = SnapshotEvaluator(shadows[i])
            ledger["mean_snapshots"] += budget

    expansion_cache: dict[float, object] = {}

    def get_expansion(d: float):
        if d not in expansion_cache:
            expansion_cache[d] = build_expansion(d, config.window_delta, config.eps4)
        return expansion_cache[d]

    for i in range(len(ladder) - 1):
        b_i, b_next = ladder[i], ladder[i + 1]
        d = (b_next - b_i) / 2.0
        ev_exact = exact_exp_mean(h, b_i, d)
        ew_exact = exact_exp_mean(h, b_next, -d)
        if config.mean_mode == "exact":
            ev, ew = ev_exact, ew_exact
        else:
            ev = estimate_exp_mean(
                shadows[i], h, get_expansion(d), mm,
                evaluator=evaluators[i], term_cap=config.term_cap,
            )
            ew = estimate_exp_mean(
                shadows[i + 1], h, get_expansion(-d), mm,
                evaluator=evaluators[i + 1], term_cap=config.term_cap,
            )
        if ev <= 0 or ew <= 0:
            raise InputError(
                f"nonpositive ratio estimate at rung {i} (EV={ev:.4g}, EW={ew:.4g}); "
                "increase the shadow budget"
            )
        log_product += math.log(ev) - math.log(ew)
        steps.append(StepSummary(i, b_i, ev, ew, ev_exact, ew_exact))

    z_hat = float(np.exp(n * math.log(2.0) + log_product))
    rel_error = None
    if z_exact is not None:
        rel_error = abs(z_hat - z_exact) / z_exact
    return RunReport(
        config=config.to_dict(),
        n_qubits=n,
        scale=scale,
        schedule=schedule,
        steps=steps,
        z_hat=z_hat,
        z_exact=z_exact,
        rel_error=rel_error,
        ledger=ledger,
    )


def _budget(config: RunConfig) -> int:
    """Shadow-set size: explicit M_s, or the product-mean bound."""
    if config.m_samples is not None:
        return config.m_samples
    # relative variances of the ratio estimators are bounded by c2
    return product_mean_bound_check(
        [config.c2], epsilon1=config.eps2, delta1=config.delta2
    )


def _refine_ladder(betas: Sequence[float], max_step_d: float) -> tuple[float, ...]:
    """Insert equally spaced points so each half-gap stays below max_step_d."""
    if max_step_d <= 0:
        raise ConfigError("max_step_d must be positive")
    out = [betas[0]]
    for b1, b2 in zip(betas, betas[1:]):
        pieces = max(1, math.ceil((b2 - b1) / (2.0 * max_step_d)))
        for k in range(1, pieces + 1):
            out.append(b1 + (b2 - b1) * k / pieces)
    return tuple(out)


def _gibbs_states(h: Hamiltonian, betas: Sequence[float], config: RunConfig,
                  ledger: dict) -> list[StateVector]:
    if config.gibbs_mode == "oracle":
        return [exact_gibbs(h, b).state for b in betas]
    evolve_cfg = EvolveConfig(
        depth=config.depth,
        delta_beta=config.delta_beta,
        seed=config.seed,
        compute_fidelity=False,
    )
    results = evolve(h, list(betas), evolve_cfg)
    return [state for _, _, state, _ in results]
