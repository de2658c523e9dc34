"""Queue-aware water-filling from the closed-form approximate Bellman solution.

Throughout, a negative multiplier ``f`` is handled through its water level
``w = -f * bw / ln 2 > 0``.  In these coordinates the per-user equation
``G(x, w) = theta`` reads

    G(x, w) = c(x) + xi (w e^{-1/w} - E1(1/w)) - xi w E1(1/w) + mu(x) w ln2 / bw

with ``xi = (1 + q_min) / 2``.  ``dG/dw = (ln2/bw)(mu(x) - xi (bw/ln2) E1(1/w))``
vanishes at the drain-matching level ``lambda_w(x)``, so ``G(x, .)`` peaks
there: the root lies above it for ``x <= Q°`` and below it for ``x > Q°``.
When ``c(x)`` alone already exceeds ``theta`` the multiplier is nonnegative
and the user is not served, giving ``f = (c(x) - theta) / mu(x)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate

from .config import SystemConfig
from .queue import playback_rate, q_circ, solve_e1_inverse, stage_cost
from .special import BracketedProblem, RootConvergenceError, exp_integral_e1, find_root

__all__ = [
    "LN2",
    "xi_of",
    "water_level",
    "lambda_tilde",
    "average_power",
    "average_rate",
    "theta_tilde",
    "theta_tilde_literal",
    "bellman_lhs",
    "bellman_lhs_literal",
    "UserPolicy",
    "PolicyTables",
    "build_policy_tables",
    "solve_f_tilde",
    "f_tilde_to_level",
    "allocate_power",
    "policy_step",
    "relative_value",
]

LN2 = math.log(2.0)
MEMO_NODES = 2048
MEMO_TOL = 1e-3
MEMO_REFINE_PASSES = 12


def xi_of(q_min: float) -> float:
    if not 0.0 <= q_min <= 1.0:
        raise ValueError("q_min must lie in [0, 1]")
    return 0.5 * (1.0 + q_min)


def _check_level(w: float) -> None:
    if not w > 0:
        raise ValueError("water level must be positive")


def average_power(w: float, q_min: float) -> float:
    """Mean water-filling power ``E[(w - 1/g)^+]`` under the effective-gain law."""
    _check_level(w)
    return xi_of(q_min) * (w * math.exp(-1.0 / w) - exp_integral_e1(1.0 / w))


def average_rate(w: float, q_min: float, cfg: SystemConfig) -> float:
    """Mean rate (bit/s) of water-filling at level ``w``."""
    _check_level(w)
    return xi_of(q_min) * cfg.bw / LN2 * exp_integral_e1(1.0 / w)


def water_level(x: float, q_min: float, cfg: SystemConfig) -> float:
    """Level whose mean water-filling rate equals the playback rate at ``x``.

    Returns 0.0 at ``x = 0`` (nothing drains, nothing needs to be sent).
    """
    if x < 0:
        raise ValueError("queue length must be nonnegative")
    mu = playback_rate(x, cfg)
    if mu == 0.0:
        return 0.0
    return 1.0 / solve_e1_inverse(mu * LN2 / (xi_of(q_min) * cfg.bw))


def lambda_tilde(x: float, q_min: float, cfg: SystemConfig) -> float:
    """Negative multiplier matching the drain at ``x``; ``-0.0`` at ``x = 0``."""
    return -water_level(x, q_min, cfg) * LN2 / cfg.bw


def theta_tilde(q_min: float, cfg: SystemConfig, k: int = 0) -> float:
    """Approximate per-user average cost: stage cost at ``Q°`` plus mean power."""
    qc = q_circ(cfg, k)
    return stage_cost(qc, cfg, k) + average_power(water_level(qc, q_min, cfg), q_min)


def theta_tilde_literal(q_min: float, cfg: SystemConfig, k: int = 0) -> float:
    """:func:`theta_tilde` written in the multiplier ``lambda`` directly."""
    qc = q_circ(cfg, k)
    lam = lambda_tilde(qc, q_min, cfg)
    arg = -LN2 / (lam * cfg.bw)
    return stage_cost(qc, cfg, k) - xi_of(q_min) * (
        lam * cfg.bw / LN2 * math.exp(LN2 / (lam * cfg.bw)) + exp_integral_e1(arg)
    )


def bellman_lhs(x: float, w: float, q_min: float, cfg: SystemConfig, k: int = 0) -> float:
    """``G(x, w)`` for water level ``w >= 0`` (``w = 0`` is the no-service limit)."""
    c = stage_cost(x, cfg, k)
    if w == 0.0:
        return c
    _check_level(w)
    xi = xi_of(q_min)
    e1 = exp_integral_e1(1.0 / w)
    return c + xi * (w * math.exp(-1.0 / w) - e1) - xi * w * e1 + playback_rate(x, cfg) * w * LN2 / cfg.bw


def bellman_lhs_literal(x: float, f: float, q_min: float, cfg: SystemConfig, k: int = 0) -> float:
    """Left side of the per-user equation in the multiplier ``f < 0``."""
    if not f < 0:
        raise ValueError("the literal form is evaluated for f < 0")
    xi = xi_of(q_min)
    arg = -LN2 / (f * cfg.bw)
    e1 = exp_integral_e1(arg)
    mu = playback_rate(x, cfg)
    return (
        stage_cost(x, cfg, k)
        + (cfg.bw * xi / LN2 * e1 - mu) * f
        - xi * (f * cfg.bw / LN2 * math.exp(LN2 / (f * cfg.bw)) + e1)
    )


@dataclass(frozen=True)
class UserPolicy:
    """Closed-form controller data for one user at one ``q_min``."""

    k: int
    q_min: float
    q_circ: float
    theta_tilde: float
    level_at_qcirc: float
    memo_x: np.ndarray = field(repr=False)
    memo_level: np.ndarray = field(repr=False)

    def level_interp(self, x):
        """Memoized signed water level ``-f bw / ln2`` clipped at 0."""
        return np.interp(x, self.memo_x, self.memo_level)


@dataclass(frozen=True)
class PolicyTables:
    q_min: float
    cfg: SystemConfig = field(repr=False)
    users: tuple[UserPolicy, ...] = field(repr=False)

    @property
    def q_circ(self) -> tuple[float, ...]:
        return tuple(u.q_circ for u in self.users)

    @property
    def theta_tilde(self) -> tuple[float, ...]:
        return tuple(u.theta_tilde for u in self.users)

    @property
    def lambda_tilde_at_qcirc(self) -> tuple[float, ...]:
        return tuple(-u.level_at_qcirc * LN2 / self.cfg.bw for u in self.users)

    def f_solver(self, x: float, k: int = 0) -> float:
        return solve_f_tilde(x, self, self.cfg, k)

    def levels(self, queues) -> np.ndarray:
        """Memoized water levels for a vector of per-user queues."""
        return np.array([u.level_interp(q) for u, q in zip(self.users, queues)])


def _solve_level(x: float, q_min: float, theta: float, qc: float, cfg: SystemConfig, k: int) -> tuple[float, float]:
    """Return ``(f, w)`` solving ``G(x, .) = theta`` on the branch fixed by ``x``."""
    lam_w = water_level(x, q_min, cfg)
    tol = 1e-10 * max(1.0, abs(theta))

    def obj(w: float) -> float:
        return bellman_lhs(x, w, q_min, cfg, k) - theta

    if x <= qc:
        lo = lam_w
        top = obj(lo) if lo > 0 else stage_cost(x, cfg, k) - theta
        if abs(top) <= tol:
            return -lo * LN2 / cfg.bw, lo
        step = 0.5 * lo + 1e-6
        hi = lo + step
        n = 0
        while obj(hi) > 0:
            lo, step = hi, 2.0 * step
            hi = lo + step
            n += 1
            if n > 200:
                raise RootConvergenceError(f"x={x:g}: branch 1 bracket did not close below [{lo:g}, {hi:g}]", best=hi)
        if lo == 0.0:
            lo = min(1e-300, hi / 2)
        w = find_root(BracketedProblem(obj, lo, hi, tol_abs=tol))
        return -w * LN2 / cfg.bw, w

    c = stage_cost(x, cfg, k)
    if c >= theta:
        # nonnegative multiplier: no service, f solves c - mu f = theta
        return (c - theta) / playback_rate(x, cfg), 0.0
    peak = obj(lam_w)
    if abs(peak) <= tol:
        return -lam_w * LN2 / cfg.bw, lam_w
    if peak < 0:
        raise RootConvergenceError(f"x={x:g}: branch 2 has no root (peak residual {peak:g})", best=lam_w)
    # G(x, w) -> c(x) < theta as w -> 0; the essential singularity sits at w = 0
    lo = lam_w / 2
    while obj(lo) > 0:
        lo /= 2
        if lo < 1e-300:
            raise RootConvergenceError(f"x={x:g}: branch 2 bracket reached w=0", best=lo)
    w = find_root(BracketedProblem(obj, lo, lam_w, tol_abs=tol))
    return -w * LN2 / cfg.bw, w


def f_tilde_to_level(f: float, cfg: SystemConfig) -> float:
    """Water level ``(-f bw / ln 2)^+``."""
    return max(-f * cfg.bw / LN2, 0.0)


def solve_f_tilde(x: float, tables: PolicyTables, cfg: SystemConfig, k: int = 0) -> float:
    """Multiplier ``f~_k(x)`` from the root solver (never the memo)."""
    if x < 0:
        raise ValueError("queue length must be nonnegative")
    u = tables.users[k]
    f, _ = _solve_level(float(x), tables.q_min, u.theta_tilde, u.q_circ, cfg, k)
    return f


def _memo_grid(cfg: SystemConfig, n: int = MEMO_NODES) -> np.ndarray:
    return np.concatenate(([0.0], np.geomspace(1.0, 4.0 * cfg.w_high, n)))


@lru_cache(maxsize=64)
def _user_policy(q_min: float, cfg: SystemConfig, k: int) -> UserPolicy:
    qc = q_circ(cfg, k)
    level = water_level(qc, q_min, cfg)
    theta = stage_cost(qc, cfg, k) + average_power(level, q_min)
    solve = lambda x: _solve_level(x, q_min, theta, qc, cfg, k)[1]
    xs = _memo_grid(cfg)
    levels = np.array([solve(x) for x in xs])
    # bisect intervals whose midpoint is badly interpolated (steep drop to zero)
    suspects = np.arange(xs.size - 1)
    for _ in range(MEMO_REFINE_PASSES):
        mids = 0.5 * (xs[suspects] + xs[suspects + 1])
        exact = np.array([solve(x) for x in mids])
        bad = np.abs(exact - np.interp(mids, xs, levels)) > MEMO_TOL * np.maximum(1.0, exact)
        if not bad.any():
            break
        xs_new, lv_new = mids[bad], exact[bad]
        order = np.argsort(np.concatenate((xs, xs_new)), kind="stable")
        xs = np.concatenate((xs, xs_new))[order]
        levels = np.concatenate((levels, lv_new))[order]
        # the two halves of every refined interval are the next suspects
        pos = np.searchsorted(xs, xs_new)
        suspects = np.unique(np.concatenate((pos - 1, pos)))
    return UserPolicy(k, q_min, qc, theta, level, xs, levels)


def _price_key(cfg: SystemConfig, k: int) -> SystemConfig:
    # users with equal prices share one table; normalize to a canonical user 0
    return cfg.replace(beta=cfg.beta[k], gamma=cfg.gamma[k])


def build_policy_tables(q_min: float, cfg: SystemConfig) -> PolicyTables:
    """Per-user ``Q°`` and ``theta~`` with memoized water levels for this ``q_min``.

    Raises
    ------
    AssumptionError
        If a user's price ratio puts ``Q°`` outside the buffer window.
    """
    xi_of(q_min)
    users = []
    for k in range(cfg.n_users):
        base = _user_policy(float(q_min), _price_key(cfg, k), 0)
        users.append(
            UserPolicy(k, base.q_min, base.q_circ, base.theta_tilde, base.level_at_qcirc, base.memo_x, base.memo_level)
        )
    return PolicyTables(float(q_min), cfg, tuple(users))


def allocate_power(f_tilde: float, g, cfg: SystemConfig):
    """Water-filling ``(-f bw / ln2 - 1/g)^+``; zero for ``g = 0`` or ``f >= 0``."""
    w = f_tilde_to_level(f_tilde, cfg)
    g = np.asarray(g, dtype=float)
    with np.errstate(divide="ignore"):
        p = np.where(g > 0, np.maximum(w - 1.0 / np.where(g > 0, g, 1.0), 0.0), 0.0)
    return float(p) if p.ndim == 0 else p


def policy_step(queues, outcome, tables: PolicyTables, cfg: SystemConfig, use_memo: bool = False) -> np.ndarray:
    """Per-user powers for this slot's queues and beamforming outcome."""
    gains = np.asarray(outcome.gains if hasattr(outcome, "gains") else outcome, dtype=float)
    powers = np.zeros(cfg.n_users)
    for k, qk in enumerate(queues):
        if gains[k] <= 0:
            continue
        if use_memo:
            w = float(tables.users[k].level_interp(qk))
            powers[k] = max(w - 1.0 / gains[k], 0.0)
        else:
            powers[k] = allocate_power(solve_f_tilde(qk, tables, cfg, k), gains[k], cfg)
    return powers


def relative_value(x: float, tables: PolicyTables, cfg: SystemConfig, k: int = 0) -> float:
    """``V~_k(x) = integral of f~_k from Q° to x`` by adaptive quadrature."""
    u = tables.users[k]
    breaks = [b for b in (cfg.w_low,) if min(x, u.q_circ) < b < max(x, u.q_circ)]
    val, _ = integrate.quad(
        lambda t: solve_f_tilde(t, tables, cfg, k), u.q_circ, x, points=breaks or None, limit=200
    )
    return val
