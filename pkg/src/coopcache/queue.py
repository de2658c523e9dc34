"""Playback-buffer dynamics with per-stage costs and price checks."""

from __future__ import annotations

import math

import numpy as np

from .config import SystemConfig
from .special import BracketedProblem, RootBracketError, exp_integral_e1, find_root

__all__ = [
    "AssumptionError",
    "playback_rate",
    "step_queue",
    "stage_cost",
    "q_circ",
    "validate_assumptions",
    "smooth_interruption",
    "smooth_overflow",
    "solve_e1_inverse",
]


class AssumptionError(ValueError):
    """Price parameters violate the interior-optimum conditions."""


def playback_rate(qk, cfg: SystemConfig):
    """Departure rate (bit/s): linear ramp below ``w_low``, ``mu0`` above."""
    qk = np.asarray(qk, dtype=float)
    rate = np.where(qk < cfg.w_low, qk * cfg.mu0 / cfg.w_low, cfg.mu0)
    return float(rate) if rate.ndim == 0 else rate


def step_queue(qk, rate, cfg: SystemConfig):
    """One-slot buffer update ``Q + (r - mu(Q)) * tau``."""
    out = np.asarray(qk, dtype=float) + (np.asarray(rate, dtype=float) - playback_rate(qk, cfg)) * cfg.tau
    return float(out) if out.ndim == 0 else out


def smooth_interruption(qk, cfg: SystemConfig):
    return np.exp(-cfg.alpha * np.maximum(np.asarray(qk, dtype=float) - cfg.w_low, 0.0))


def smooth_overflow(qk, cfg: SystemConfig):
    return np.exp(-cfg.alpha * np.maximum(cfg.w_high - np.asarray(qk, dtype=float), 0.0))


def stage_cost(qk, cfg: SystemConfig, k: int = 0):
    """Smoothed interruption plus buffer cost of user ``k`` at occupancy ``qk``."""
    out = cfg.beta[k] * smooth_interruption(qk, cfg) + cfg.gamma[k] * smooth_overflow(qk, cfg)
    return float(out) if np.ndim(out) == 0 else out


def _price_ratio_ok(cfg: SystemConfig, k: int) -> bool:
    span = (cfg.w_high - cfg.w_low) * cfg.alpha
    log_ratio = math.log(cfg.beta[k]) - math.log(cfg.gamma[k])
    return -span < log_ratio < span


def q_circ(cfg: SystemConfig, k: int = 0) -> float:
    """Minimizer of :func:`stage_cost`, inside ``(w_low, w_high)``.

    Raises
    ------
    AssumptionError
        If ``beta/gamma`` lies outside ``(e^{-a(WH-WL)}, e^{a(WH-WL)})``.
    """
    if not _price_ratio_ok(cfg, k):
        raise AssumptionError(f"user {k}: beta/gamma outside the interior-optimum range")
    return (math.log(cfg.beta[k]) - math.log(cfg.gamma[k])) / (2 * cfg.alpha) + 0.5 * (cfg.w_low + cfg.w_high)


def solve_e1_inverse(y: float) -> float:
    """Return ``s > 0`` with ``E1(s) = y`` for ``y > 0``."""
    if not y > 0:
        raise ValueError("E1 is positive; need y > 0")
    # E1(s) ~ -gamma - ln s for small s, ~ exp(-s)/s for large s
    lo = min(math.exp(-y - 1.0), 0.5)
    while exp_integral_e1(lo) < y:
        lo *= 1e-3
    hi = 1.0
    while exp_integral_e1(hi) > y:
        hi *= 2.0
    # the log-variable keeps the bracket well scaled over many decades
    t = find_root(
        BracketedProblem(
            lambda t: exp_integral_e1(math.exp(t)) - y,
            math.log(lo),
            math.log(hi),
            tol_abs=1e-15 * max(1.0, y),
        )
    )
    return math.exp(t)


def _water_level_q0(cfg: SystemConfig) -> float:
    # lambda_0 solves (B/(2 ln2)) E1(1/lambda) = mu0
    return 1.0 / solve_e1_inverse(2.0 * math.log(2.0) * cfg.mu0 / cfg.bw)


def validate_assumptions(cfg: SystemConfig) -> list[str]:
    """List every violated price/slot condition; empty means valid."""
    problems: list[str] = []
    if not cfg.w_low > cfg.mu0 * cfg.tau:
        problems.append(
            f"slot size: need w_low > mu0*tau, got w_low={cfg.w_low:g} <= {cfg.mu0 * cfg.tau:g}"
        )
    try:
        lam0 = _water_level_q0(cfg)
    except (RootBracketError, ValueError) as exc:
        problems.append(f"lambda_0: no solution for mu0/bw={cfg.mu0 / cfg.bw:g} ({exc})")
        lam0 = None
    span = (cfg.w_high - cfg.w_low) * cfg.alpha
    half = math.exp(-span / 2)
    for k in range(cfg.n_users):
        if not _price_ratio_ok(cfg, k):
            problems.append(
                f"user {k}: beta/gamma={cfg.beta[k] / cfg.gamma[k]:g} outside "
                f"({math.exp(-span):g}, {math.exp(span):g})"
            )
        if lam0 is not None:
            power = 0.5 * (lam0 * math.exp(-1 / lam0) - exp_integral_e1(1 / lam0))
            bound = (power + cfg.gamma[k] * half) / (1 - half)
            if not cfg.beta[k] > bound:
                problems.append(f"user {k}: beta={cfg.beta[k]:g} must exceed {bound:.6g}")
    return problems
