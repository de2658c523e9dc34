"""Comparison policies without relay caching.

Baseline 1 water-fills on CSI only.  Baseline 2 weights each user's rate
by ``(W_H - Q)^+``; baseline 3 keeps that weight but sends through a
half-duplex decode-and-forward relay with equal phases and equal per-user
power in both phases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelState, random_subsets, sample_channel_batch, zf_gains_batch
from .config import BaselineConfig, SystemConfig
from .special import BracketedProblem, exp_integral_e1, find_root

__all__ = [
    "DfOutcome",
    "baseline1_power",
    "baseline2_power",
    "baseline3_power",
    "baseline3_power_search",
    "baseline_level",
    "relay_channel",
    "baseline3_gains",
    "baseline3_gains_batch",
    "baseline3_df_step",
    "kappa_for_power_bl1",
]

LN2 = math.log(2.0)


def _water(level, g):
    g = np.asarray(g, dtype=float)
    level = np.asarray(level, dtype=float)
    safe = np.where(g > 0, g, 1.0)
    p = np.where(g > 0, np.maximum(level - 1.0 / safe, 0.0), 0.0)
    return float(p) if p.ndim == 0 else p


def baseline_level(policy: str, qk, cfg: SystemConfig, bl: BaselineConfig):
    """Water level of a baseline for queue ``qk`` (ignored by baseline 1)."""
    base = cfg.bw / (bl.kappa * LN2)
    if policy == "baseline1":
        return np.full(np.shape(qk), base) if np.ndim(qk) else base
    weight = np.maximum(cfg.w_high - np.asarray(qk, dtype=float), 0.0)
    if policy == "baseline2":
        out = weight * base
    elif policy == "baseline3":
        out = 0.5 * weight * base
    else:
        raise ValueError(f"unknown baseline {policy!r}")
    return float(out) if np.ndim(out) == 0 else out


def baseline1_power(g, cfg: SystemConfig, bl: BaselineConfig):
    """Maximizer of ``bw log2(1 + g p) - kappa p``."""
    return _water(baseline_level("baseline1", 0.0, cfg, bl), g)


def baseline2_power(g, qk, cfg: SystemConfig, bl: BaselineConfig):
    """Maximizer of ``(W_H - Q)^+ bw log2(1 + g p) - kappa p``."""
    return _water(baseline_level("baseline2", qk, cfg, bl), g)


def baseline3_power(g_eff, qk, cfg: SystemConfig, bl: BaselineConfig):
    """Maximizer of ``(W_H - Q)^+ (bw/2) log2(1 + g_eff p) - kappa p``."""
    return _water(baseline_level("baseline3", qk, cfg, bl), g_eff)


def baseline3_power_search(g_eff: float, qk: float, cfg: SystemConfig, bl: BaselineConfig, rtol: float = 1e-3) -> float:
    """Golden-section search for the baseline-3 power (closed-form check)."""
    weight = max(cfg.w_high - qk, 0.0)
    if weight == 0.0 or g_eff <= 0:
        return 0.0

    def objective(p: float) -> float:
        return weight * 0.5 * cfg.bw * math.log2(1.0 + g_eff * p) - bl.kappa * p

    hi = weight * cfg.bw / (bl.kappa * LN2) + 1.0
    lo = 0.0
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo + (1 - inv_phi) * (hi - lo), lo + inv_phi * (hi - lo)
    fa, fb = objective(a), objective(b)
    while hi - lo > rtol * max(abs(lo + hi) / 2, 1e-12):
        if fa > fb:
            hi, b, fb = b, a, fa
            a = lo + (1 - inv_phi) * (hi - lo)
            fa = objective(a)
        else:
            lo, a, fa = a, b, fb
            b = lo + inv_phi * (hi - lo)
            fb = objective(b)
    p = 0.5 * (lo + hi)
    return p if objective(p) > objective(0.0) else 0.0


def relay_channel(rng: np.random.Generator, m: int, bl: BaselineConfig, n: int | None = None) -> np.ndarray:
    """BS-to-relay channel ``10^(gain_db/20) H_W`` (``m x m``, or a stack of ``n``)."""
    amp = 10.0 ** (bl.relay_gain_db / 20.0)
    stack = sample_channel_batch(rng, 1 if n is None else n, m, m) * amp
    return stack[0] if n is None else stack


def baseline3_gains(h: ChannelState, h_br: np.ndarray, selected) -> tuple[np.ndarray, np.ndarray]:
    """Per-user (relay-hop, cooperative-hop) ZF gains for the selected users.

    Stream ``j`` of the relay hop carries the ``j``-th selected user's data.
    """
    n_users = h.full_matrix.shape[0]
    sel = np.sort(np.asarray(selected))
    g1 = np.zeros(n_users)
    g2 = np.zeros(n_users)
    g1[sel] = zf_gains_batch(h_br[None])[0]
    g2[sel] = zf_gains_batch(h.full_matrix[sel][None])[0]
    return g1, g2


def baseline3_gains_batch(rng_channel, rng_select, rng_relay, n: int, m: int, bl: BaselineConfig) -> np.ndarray:
    """End-to-end DF gains ``min(g1, g2)`` for ``n`` slots, shape ``(n, 2m)``."""
    n_users = 2 * m
    h = sample_channel_batch(rng_channel, n, n_users, n_users)
    sel = random_subsets(rng_select, n, n_users, m)
    h_br = relay_channel(rng_relay, m, bl, n)
    g1 = zf_gains_batch(h_br)
    g2 = zf_gains_batch(h[np.arange(n)[:, None], sel, :])
    out = np.zeros((n, n_users))
    out[np.arange(n)[:, None], sel] = np.minimum(g1, g2)
    return out


@dataclass(frozen=True)
class DfOutcome:
    selected: tuple[int, ...]
    g_relay: np.ndarray
    g_coop: np.ndarray
    powers: np.ndarray
    rates: np.ndarray


def baseline3_df_step(h: ChannelState, h_br: np.ndarray, queues, cfg: SystemConfig, bl: BaselineConfig, rng) -> DfOutcome:
    """One decode-and-forward slot: select M users, set powers, return end-to-end rates."""
    n_users = h.full_matrix.shape[0]
    selected = tuple(int(k) for k in np.sort(rng.choice(n_users, size=h.m, replace=False)))
    g1, g2 = baseline3_gains(h, h_br, selected)
    g_eff = np.minimum(g1, g2)
    powers = baseline3_power(g_eff, np.asarray(queues, dtype=float), cfg, bl)
    rates = 0.5 * cfg.bw * np.log2(1.0 + g_eff * powers)
    return DfOutcome(selected, g1, g2, np.asarray(powers), rates)


def kappa_for_power_bl1(target: float, cfg: SystemConfig) -> float:
    """``kappa`` giving mean per-user baseline-1 power ``target``.

    Users are scheduled half the time and then see Exp(1) gains, so the mean
    power at level ``w`` is ``(w e^{-1/w} - E1(1/w)) / 2``.
    """
    if not target > 0:
        raise ValueError("target power must be positive")

    def excess(log_w: float) -> float:
        w = math.exp(log_w)
        return 0.5 * (w * math.exp(-1.0 / w) - exp_integral_e1(1.0 / w)) - target

    hi = max(math.log(4 * target + 1.0), 0.0)
    while excess(hi) < 0:
        hi += 1.0
    lo = -3.0
    while excess(lo) > 0:
        lo -= 3.0
    w = math.exp(find_root(BracketedProblem(excess, lo, hi)))
    return cfg.bw / (w * LN2)
