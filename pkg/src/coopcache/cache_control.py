"""Convex cost surrogate over cache vectors and the projected subgradient optimizer."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .cache import CacheVector, Urp, cache_cost_bits, occupancy_bits, sample_urp
from .config import SystemConfig
from .power import LN2
from .queue import q_circ, stage_cost
from .special import exp_integral_e1

__all__ = [
    "SurrogateConstants",
    "surrogate_constants",
    "c_hat",
    "objective_sample",
    "expected_objective",
    "min_user",
    "noisy_subgradient",
    "TraceRow",
    "OptimizerState",
    "DEFAULT_SIGMA0",
    "first_step_sigma0",
    "subgradient_step",
    "run_cache_optimization",
]


@dataclass(frozen=True)
class SurrogateConstants:
    a1: float
    a2: float
    xi: float
    c: float

    @property
    def boost(self) -> float:
        """``exp(-a1 + c / xi)``."""
        return math.exp(-self.a1 + self.c / self.xi)


def surrogate_constants(q_min: float, cfg: SystemConfig) -> SurrogateConstants:
    if not 0.0 <= q_min <= 1.0:
        raise ValueError("q_min must lie in [0, 1]")
    c = cfg.mu0 * LN2 / cfg.bw
    a2 = exp_integral_e1(math.exp(-c))
    a1 = -c * math.exp(-math.exp(-c)) + a2
    return SurrogateConstants(a1=a1, a2=a2, xi=0.5 * (1.0 + q_min), c=c)


def _per_user_power_term(sc: SurrogateConstants) -> float:
    return sc.xi * sc.boost - (sc.a2 + math.e) * sc.xi + math.e


def c_hat(q: CacheVector, pi: Urp, cfg: SystemConfig) -> float:
    """Closed-form surrogate of the optimal inner average cost for profile ``pi``."""
    req = q.as_array()[list(pi.pi)]
    sc = surrogate_constants(float(req.min()), cfg)
    term = _per_user_power_term(sc)
    return float(sum(term + stage_cost(q_circ(cfg, k), cfg, k) for k in range(cfg.n_users)))


def objective_sample(q: CacheVector, pi: Urp, cfg: SystemConfig) -> float:
    """One-profile sample of the outer objective ``C^ + eta sum F_l q_l``."""
    return c_hat(q, pi, cfg) + cfg.eta * cache_cost_bits(q, cfg.file_sizes)


def expected_objective(q: CacheVector, cfg: SystemConfig, rho=None) -> float:
    """Exact ``U(q) = E[C^(q, pi)] + eta sum F_l q_l`` for i.i.d. requests.

    ``C^`` depends on the profile only through ``q_min``, so the expectation
    runs over the distinct cache probabilities:
    ``Pr[q_min >= v] = (sum of rho_l over q_l >= v)^K``.
    """
    rho = np.asarray(cfg.rho if rho is None else rho, dtype=float)
    qa = q.as_array()
    levels = np.unique(qa)
    tail = np.array([rho[qa >= v].sum() for v in levels]) ** cfg.n_users
    probs = tail - np.append(tail[1:], 0.0)
    total = 0.0
    for v, pr in zip(levels, probs):
        if pr > 0:
            sc = surrogate_constants(float(v), cfg)
            total += pr * cfg.n_users * _per_user_power_term(sc)
    total += sum(stage_cost(q_circ(cfg, k), cfg, k) for k in range(cfg.n_users))
    return float(total + cfg.eta * cache_cost_bits(q, cfg.file_sizes))


def min_user(q: CacheVector, pi: Urp) -> int:
    """Lowest user index whose requested file attains ``q_min``."""
    req = q.as_array()[list(pi.pi)]
    return int(np.argmin(req))


def noisy_subgradient(q: CacheVector, pi: Urp, cfg: SystemConfig) -> np.ndarray:
    """Unbiased subgradient sample of the outer objective at ``q``."""
    k_star = min_user(q, pi)
    l_star = pi.pi[k_star]
    sc = surrogate_constants(q.q[l_star], cfg)
    grad = cfg.eta * np.asarray(cfg.file_sizes, dtype=float)
    grad[l_star] += cfg.m * ((1.0 - sc.c / sc.xi) * sc.boost - sc.a2 - math.e)
    return grad


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    u_sample: float
    u_window_avg: float
    occupancy_bits: float
    q: tuple[float, ...]


@dataclass
class OptimizerState:
    q: CacheVector
    sigma0: float
    iteration: int = 1
    window: int = 100
    trace: list[TraceRow] = field(default_factory=list)
    _recent: deque = field(default=None, repr=False)

    def __post_init__(self):
        if self.iteration < 1:
            raise ValueError("iterations are counted from 1")
        if not self.sigma0 > 0:
            raise ValueError("sigma0 must be positive")
        if self._recent is None:
            self._recent = deque(maxlen=self.window)


DEFAULT_SIGMA0 = 0.05


def first_step_sigma0(q: CacheVector, cfg: SystemConfig, max_first_step: float = 0.05) -> float:
    """Largest ``sigma0`` whose first step moves no coordinate more than ``max_first_step``.

    The bound is taken over every profile, i.e. over the worst case of the
    CoMP-term magnitude on ``q`` and the storage term.
    """
    storage = cfg.eta * max(cfg.file_sizes)
    worst = storage
    for value in set(q.q):
        sc = surrogate_constants(value, cfg)
        comp = cfg.m * ((1.0 - sc.c / sc.xi) * sc.boost - sc.a2 - math.e)
        worst = max(worst, abs(comp + cfg.eta * max(cfg.file_sizes)), abs(comp + cfg.eta * min(cfg.file_sizes)))
    return max_first_step / worst if worst > 0 else max_first_step


def subgradient_step(state: OptimizerState, pi: Urp, cfg: SystemConfig) -> OptimizerState:
    """One projected step with size ``sigma0 / i``; appends a trace row."""
    q = state.q
    u = objective_sample(q, pi, cfg)
    state._recent.append(u)
    grad = noisy_subgradient(q, pi, cfg)
    sigma = state.sigma0 / state.iteration
    new_q = np.clip(q.as_array() - sigma * grad, 0.0, 1.0)
    state.trace.append(
        TraceRow(
            iteration=state.iteration,
            u_sample=u,
            u_window_avg=float(np.mean(state._recent)),
            occupancy_bits=occupancy_bits(q, cfg.file_sizes),
            q=q.q,
        )
    )
    state.q = CacheVector(tuple(new_q))
    state.iteration += 1
    return state


def run_cache_optimization(
    cfg: SystemConfig,
    n_urp: int,
    rng: np.random.Generator,
    sigma0: float | None = None,
    q_init: float | CacheVector = 0.5,
    window: int = 100,
) -> OptimizerState:
    """Run ``n_urp`` projected subgradient steps, one per sampled request profile.

    The popularity vector only drives the profile sampler.  ``sigma0``
    defaults to :data:`DEFAULT_SIGMA0`; :func:`first_step_sigma0` gives the
    more conservative choice that caps the first move.
    """
    q = q_init if isinstance(q_init, CacheVector) else CacheVector.uniform(q_init, cfg.n_files)
    if sigma0 is None:
        sigma0 = DEFAULT_SIGMA0
    state = OptimizerState(q=q, sigma0=sigma0, window=window)
    for _ in range(n_urp):
        subgradient_step(state, sample_urp(rng, cfg.rho, cfg.n_users), cfg)
    return state
