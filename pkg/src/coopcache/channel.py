"""Rayleigh channel sampling with per-mode user selection and ZF beamforming."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DegenerateChannelError",
    "ChannelState",
    "BeamformOutcome",
    "sample_channel",
    "sample_channel_batch",
    "random_subsets",
    "zf_beamformers",
    "select_and_beamform",
    "zf_gains_batch",
    "effective_gains_batch",
    "instantaneous_rate",
]


class DegenerateChannelError(np.linalg.LinAlgError):
    """Co-scheduled channels are (numerically) linearly dependent."""


@dataclass(frozen=True)
class ChannelState:
    """Row ``k`` of ``full_matrix`` is user ``k``'s channel to all 2M antennas
    (BS antennas first)."""

    full_matrix: np.ndarray

    @property
    def m(self) -> int:
        return self.full_matrix.shape[1] // 2

    @property
    def bs_submatrix(self) -> np.ndarray:
        return self.full_matrix[:, : self.m]


@dataclass(frozen=True)
class BeamformOutcome:
    mode: int
    selected: tuple[int, ...]
    beamformers: dict[int, np.ndarray]
    gains: np.ndarray


def sample_channel(rng: np.random.Generator, m: int) -> ChannelState:
    """i.i.d. CN(0, 1) channel for 2m users and 2m transmit antennas."""
    if m < 1:
        raise ValueError("need m >= 1")
    n = 2 * m
    h = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2.0)
    return ChannelState(h)


def sample_channel_batch(rng: np.random.Generator, n_slots: int, rows: int, cols: int) -> np.ndarray:
    shape = (n_slots, rows, cols)
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def random_subsets(rng: np.random.Generator, n_slots: int, n_users: int, size: int) -> np.ndarray:
    """Uniform size-``size`` subsets of ``range(n_users)``, one sorted row per slot."""
    order = np.argsort(rng.random((n_slots, n_users)), axis=1)
    return np.sort(order[:, :size], axis=1)


def zf_beamformers(rows: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Unit-norm ZF beamformers (as columns) for the channel ``rows``.

    Column ``k`` is ``h_k`` projected onto the orthogonal complement of the
    other rows' span, ``(I - A (A^H A)^{-1} A^H) h_k`` with ``A`` stacking
    the co-scheduled channels as columns.
    """
    n, dim = rows.shape
    out = np.empty((dim, n), dtype=complex)
    for k in range(n):
        h = rows[k]
        others = np.delete(rows, k, axis=0).T  # dim x (n-1)
        if others.shape[1]:
            gram = others.conj().T @ others
            if np.linalg.cond(gram) > 1.0 / tol:
                raise DegenerateChannelError("co-user channel matrix is rank deficient")
            coef = np.linalg.solve(gram, others.conj().T @ h)
            proj = h - others @ coef
        else:
            proj = h
        norm = np.linalg.norm(proj)
        if norm <= tol * max(1.0, np.linalg.norm(h)):
            raise DegenerateChannelError("user channel lies in the co-user span")
        out[:, k] = proj / norm
    return out


def select_and_beamform(h: ChannelState, s: int, rng: np.random.Generator) -> BeamformOutcome:
    """Schedule users for cache state ``s`` and compute ZF beamformers.

    ``s = 1``: all 2M users served jointly from the 2M BS+RS antennas.
    ``s = 0``: M users drawn uniformly at random, served from the M BS
    antennas.  Gains are ``|h_k^H v_k|^2`` (0 for unscheduled users).
    """
    if s not in (0, 1):
        raise ValueError("cache state must be 0 or 1")
    n_users = h.full_matrix.shape[0]
    if s == 1:
        selected = tuple(range(n_users))
        rows = h.full_matrix
    else:
        selected = tuple(int(k) for k in np.sort(rng.choice(n_users, size=h.m, replace=False)))
        rows = h.bs_submatrix[list(selected)]
    v = zf_beamformers(rows)
    gains = np.zeros(n_users)
    beams = {}
    for j, k in enumerate(selected):
        beams[k] = v[:, j]
        gains[k] = abs(np.vdot(rows[j], v[:, j])) ** 2
    return BeamformOutcome(mode=s, selected=selected, beamformers=beams, gains=gains)


def zf_gains_batch(rows: np.ndarray) -> np.ndarray:
    """ZF gains for a stack of channel matrices ``(n, users, antennas)``.

    Uses ``||P_perp h_k||^2 = 1 / [(H H^H)^{-1}]_kk``, which equals the
    projection-based gain of :func:`zf_beamformers`.
    """
    gram = rows @ np.conj(np.swapaxes(rows, 1, 2))
    try:
        inv = np.linalg.inv(gram)
    except np.linalg.LinAlgError:
        raise DegenerateChannelError("singular co-user Gram matrix in batch") from None
    diag = np.real(np.diagonal(inv, axis1=1, axis2=2))
    if np.any(~np.isfinite(diag)) or np.any(diag <= 0):
        raise DegenerateChannelError("rank-deficient channel in batch")
    return 1.0 / diag


def effective_gains_batch(
    rng_channel: np.random.Generator,
    rng_select: np.random.Generator,
    s: np.ndarray,
    m: int,
) -> np.ndarray:
    """Per-slot effective gains ``(n_slots, 2m)`` for cache states ``s``.

    Draws one full channel per slot from ``rng_channel`` and one random
    M-subset per slot from ``rng_select`` (drawn for every slot so that the
    streams do not depend on ``s``).
    """
    n = s.shape[0]
    n_users = 2 * m
    h = sample_channel_batch(rng_channel, n, n_users, n_users)
    subsets = random_subsets(rng_select, n, n_users, m)
    gains = np.zeros((n, n_users))
    comp = np.flatnonzero(s == 1)
    if comp.size:
        gains[comp] = zf_gains_batch(h[comp])
    solo = np.flatnonzero(s == 0)
    if solo.size:
        sel = subsets[solo]
        rows = h[solo[:, None], sel, :m]
        gains[solo[:, None], sel] = zf_gains_batch(rows)
    return gains


def instantaneous_rate(g, p, bw: float):
    """Shannon rate ``bw * log2(1 + g p)`` in bit/s."""
    out = bw * np.log2(1.0 + np.asarray(g, dtype=float) * np.asarray(p, dtype=float))
    return float(out) if np.ndim(out) == 0 else out
