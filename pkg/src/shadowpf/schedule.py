"""Cooling-schedule construction by monotone-predicate binary search.

A schedule is an ascending ladder of inverse temperatures whose adjacent
Gibbs-state overlaps stay above 1/c2, which bounds the relative variance of
the telescoping ratio estimators.  Overlaps come from the dense partition
oracle in exact mode, or from Clifford shadows of the Gibbs states otherwise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .clifford import collect_shadow
from .errors import InputError, ScheduleStallError
from .exactsim import StateVector, exact_gibbs, exact_partition, gibbs_overlap_exact
from .pauli import Hamiltonian
from .shadows import overlap_global, overlap_symmetrized, overlap_vs_state


@dataclass(frozen=True)
class CoolingSchedule:
    """Ascending inverse temperatures with per-pair overlap certificates."""

    target_beta: float
    c2: float
    betas: tuple[float, ...]
    certificates: tuple[float, ...]

    def __post_init__(self):
        if self.c2 <= 1:
            raise InputError("c2 must exceed 1")
        if not self.betas or self.betas[0] != 0.0:
            raise InputError("schedules start at beta = 0")
        if any(b2 <= b1 for b1, b2 in zip(self.betas, self.betas[1:])):
            raise InputError("betas must be strictly ascending")
        if len(self.certificates) != len(self.betas) - 1:
            raise InputError("one certificate per adjacent pair")

    @property
    def length(self) -> int:
        return len(self.betas) - 1

    def to_json(self) -> str:
        return json.dumps(
            {
                "target_beta": self.target_beta,
                "c2": self.c2,
                "betas": list(self.betas),
                "certificates": list(self.certificates),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "CoolingSchedule":
        data = json.loads(text)
        return cls(
            data["target_beta"],
            data["c2"],
            tuple(data["betas"]),
            tuple(data["certificates"]),
        )


def binary_search(predicate: Callable[[float], bool], lo: float, hi: float,
                  alpha: float) -> float:
    """Largest point (to precision alpha) where a monotone predicate holds.

    Returns hi immediately when the predicate holds there; otherwise bisects
    [lo, hi] maintaining predicate(lo) true and predicate(hi) false, and
    returns the surviving lo.  The number of predicate calls stays within
    ceil(log2((hi - lo)/alpha)) + 1 except on the degenerate all-false path,
    where the lower endpoint is validated lazily (contract violation if the
    predicate fails there).
    """
    if alpha <= 0:
        raise InputError("alpha must be positive")
    if hi < lo:
        raise InputError("need hi >= lo")
    if predicate(hi):
        return hi
    original_lo = lo
    accepted_any = False
    while hi - lo > alpha:
        mid = 0.5 * (lo + hi)
        if predicate(mid):
            lo = mid
            accepted_any = True
        else:
            hi = mid
    if not accepted_any and lo == original_lo and not predicate(lo):
        raise InputError("predicate must hold at the lower endpoint")
    return lo


@dataclass(frozen=True)
class ScheduleConfig:
    """Overlap-evaluation settings for the schedule search.

    mode 'exact' evaluates overlaps from dense partition functions; mode
    'shadow' collects Clifford snapshots of oracle Gibbs states (the anchor's
    set once per ladder rung, reused across all probes against that anchor).
    estimator: 'one_sided' evaluates the anchor shadow against the known
    probe state (variance bounded by an n-independent constant),
    'symmetrized' averages the two one-sided reads, 'two_sided' pairs two
    snapshot sets per the literal sample-set product.
    """

    mode: str = "exact"
    m_samples: int = 1000
    seed: int = 0
    estimator: str = "one_sided"
    guard_epsilon: float = 0.0
    alpha: float | None = None


def overlap_f(h: Hamiltonian, beta_k: float, beta: float,
              config: ScheduleConfig) -> float:
    """Overlap |<mu_beta_k|mu_beta>|^2, exact or shadow-estimated."""
    if beta < beta_k or beta_k < 0:
        raise InputError("need 0 <= beta_k <= beta")
    if config.mode == "exact":
        return gibbs_overlap_exact(h, beta_k, beta)
    if config.mode != "shadow":
        raise InputError("mode must be 'exact' or 'shadow'")
    anchor = exact_gibbs(h, beta_k).state
    probe = exact_gibbs(h, beta).state
    shadow_anchor = collect_shadow(anchor, config.m_samples,
                                   master_seed=config.seed,
                                   source_label=f"anchor b={beta_k}")
    if config.estimator == "one_sided":
        return overlap_vs_state(shadow_anchor, probe)
    shadow_probe = collect_shadow(probe, config.m_samples,
                                  master_seed=config.seed + 1,
                                  source_label=f"probe b={beta}")
    if config.estimator == "symmetrized":
        return overlap_symmetrized(shadow_anchor, anchor, shadow_probe, probe)
    if config.estimator == "two_sided":
        return overlap_global(shadow_anchor, shadow_probe)
    raise InputError("estimator must be 'one_sided', 'symmetrized', or 'two_sided'")


def csbs(h: Hamiltonian, beta: float, c2: float = 15.0,
         config: ScheduleConfig | None = None,
         stats: dict | None = None) -> CoolingSchedule:
    """Build the cooling schedule for target inverse temperature beta.

    From each anchor beta_k, binary-search the largest beta* in [beta_k,
    beta] whose estimated overlap with the anchor stays above 1/c2 (plus the
    guard band in shadow mode), at precision alpha = 1/(2n); append and
    repeat.  Raises ScheduleStallError when even the minimal step fails the
    predicate.

    When a ``stats`` dict is supplied it receives the actual sampling
    effort: anchor/probe shadow-set counts, snapshots consumed, and predicate
    evaluations.
    """
    if beta <= 0:
        raise InputError("target beta must be positive")
    if c2 <= 1:
        raise InputError("c2 must exceed 1")
    cfg = config if config is not None else ScheduleConfig()
    alpha = cfg.alpha if cfg.alpha is not None else 1.0 / (2.0 * h.n_qubits)
    threshold = 1.0 / c2 + (cfg.guard_epsilon if cfg.mode == "shadow" else 0.0)
    if stats is None:
        stats = {}
    stats.update(anchor_shadows=0, probe_shadows=0, snapshots=0, predicate_calls=0)

    betas = [0.0]
    certificates = []
    rung = 0
    while betas[-1] < beta:
        anchor = betas[-1]
        cache: dict[float, float] = {}
        anchor_state = anchor_shadow = None
        if cfg.mode == "shadow":
            # one anchor shadow per ladder rung, reused across every probe
            anchor_state = exact_gibbs(h, anchor).state
            anchor_shadow = collect_shadow(
                anchor_state, cfg.m_samples,
                master_seed=cfg.seed + 7919 * rung,
                source_label=f"anchor b={anchor}",
            )
            stats["anchor_shadows"] += 1
            stats["snapshots"] += cfg.m_samples

        def f_hat(b: float) -> float:
            if b not in cache:
                stats["predicate_calls"] += 1
                if cfg.mode == "exact":
                    cache[b] = gibbs_overlap_exact(h, anchor, b)
                else:
                    probe = exact_gibbs(h, b).state
                    if cfg.estimator == "one_sided":
                        cache[b] = overlap_vs_state(anchor_shadow, probe)
                    else:
                        probe_shadow = collect_shadow(
                            probe, cfg.m_samples,
                            master_seed=cfg.seed + 7919 * rung + 101 * (len(cache) + 1),
                            source_label=f"probe b={b}",
                        )
                        stats["probe_shadows"] += 1
                        stats["snapshots"] += cfg.m_samples
                        if cfg.estimator == "symmetrized":
                            cache[b] = overlap_symmetrized(
                                anchor_shadow, anchor_state, probe_shadow, probe
                            )
                        elif cfg.estimator == "two_sided":
                            cache[b] = overlap_global(anchor_shadow, probe_shadow)
                        else:
                            raise InputError(
                                "estimator must be 'one_sided', 'symmetrized', or 'two_sided'"
                            )
            return cache[b]

        step = binary_search(lambda b: f_hat(b) >= threshold, anchor, beta, alpha)
        if step <= anchor:
            raise ScheduleStallError(
                f"overlap already below 1/c2 = {1/c2:.4f} one precision step "
                f"above anchor beta = {anchor:.4f} (estimate "
                f"{f_hat(min(anchor + alpha, beta)):.4f}); the schedule cannot advance"
            )
        betas.append(step)
        certificates.append(f_hat(step))
        rung += 1
    return CoolingSchedule(beta, c2, tuple(betas), tuple(certificates))
