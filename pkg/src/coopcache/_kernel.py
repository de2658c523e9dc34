"""Compiled per-slot queue recursion shared by every policy."""

from __future__ import annotations

import numpy as np
from numba import njit

LEVEL_MEMO = 0
LEVEL_CONSTANT = 1
LEVEL_WEIGHTED = 2
LEVEL_ZERO = 3


@njit(cache=True)
def run_block(
    queues,
    gains,
    s,
    level_mode,
    memo_x,
    memo_w,
    base_level,
    rate_factor,
    bw,
    tau,
    mu0,
    w_low,
    w_high,
    track_ledger,
    budgets,
    cached_sent,
    total_sent,
    segments_done,
    segment_bits,
    out_q,
    out_p,
    out_r,
    out_under,
):
    """Advance ``queues`` through ``gains.shape[0]`` slots in place.

    Returns the index of the first slot producing a non-finite state, or -1.
    """
    n, k_users = gains.shape
    for t in range(n):
        for k in range(k_users):
            q = queues[k]
            out_q[t, k] = q
            if level_mode == LEVEL_MEMO:
                level = np.interp(q, memo_x[k], memo_w[k])
            elif level_mode == LEVEL_CONSTANT:
                level = base_level
            elif level_mode == LEVEL_WEIGHTED:
                level = max(w_high - q, 0.0) * base_level
            else:
                level = 0.0
            g = gains[t, k]
            p = 0.0
            if g > 0.0:
                p = level - 1.0 / g
                if p < 0.0:
                    p = 0.0
            r = rate_factor * bw * np.log2(1.0 + g * p)
            out_p[t, k] = p
            out_r[t, k] = r
            out_under[t, k] = 0
            if track_ledger:
                bits = r * tau
                if s[t] == 1:
                    if cached_sent[k] + bits > budgets[k]:
                        out_under[t, k] = 1
                        cached_sent[k] = budgets[k]
                    else:
                        cached_sent[k] += bits
                total_sent[k] += bits
                if total_sent[k] >= segment_bits:
                    rolls = np.floor(total_sent[k] / segment_bits)
                    segments_done[k] += int(rolls)
                    total_sent[k] -= rolls * segment_bits
                    if s[t] == 1:
                        cached_sent[k] = min(total_sent[k], budgets[k])
                    else:
                        cached_sent[k] = 0.0
            mu = mu0 if q >= w_low else q * mu0 / w_low
            q_next = q + (r - mu) * tau
            if not np.isfinite(q_next):
                return t
            queues[k] = q_next
    return -1
