"""MDS random cache: cache vectors with their cache-state draws and parity ledgers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import ConfigError

__all__ = [
    "CacheVector",
    "Urp",
    "SegmentLedger",
    "q_min",
    "sample_cache_state",
    "comp_probability",
    "account_slot",
    "occupancy_bits",
    "cache_cost_bits",
    "update_load_bps",
    "sample_urp",
    "WEEK_SECONDS",
]

WEEK_SECONDS = 7 * 24 * 3600.0


@dataclass(frozen=True)
class CacheVector:
    """Fraction of each file's parity stream kept at the relay."""

    q: tuple[float, ...]

    def __post_init__(self):
        q = tuple(float(v) for v in self.q)
        if any(not 0.0 <= v <= 1.0 for v in q):
            raise ValueError("cache control variables must lie in [0, 1]")
        object.__setattr__(self, "q", q)

    @classmethod
    def uniform(cls, value: float, n_files: int) -> "CacheVector":
        return cls((value,) * n_files)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.q)


@dataclass(frozen=True)
class Urp:
    """Request profile: ``pi[k]`` is the 0-based file index wanted by user ``k``."""

    pi: tuple[int, ...]

    def __post_init__(self):
        pi = tuple(int(v) for v in self.pi)
        if any(v < 0 for v in pi):
            raise ValueError("file indices must be nonnegative")
        object.__setattr__(self, "pi", pi)

    def check(self, n_files: int) -> None:
        if any(v >= n_files for v in self.pi):
            raise ValueError(f"file index out of range for {n_files} files")


def _requested(q: CacheVector, pi: Urp) -> np.ndarray:
    pi.check(len(q.q))
    return q.as_array()[list(pi.pi)]


def q_min(q: CacheVector, pi: Urp) -> float:
    return float(_requested(q, pi).min())


def sample_cache_state(rng: np.random.Generator, q: CacheVector, pi: Urp) -> int:
    """Bernoulli draw with ``Pr[S=1] = q_min``."""
    return int(rng.random() < q_min(q, pi))


def comp_probability(q: CacheVector, pi: Urp, scheme: str = "mds_random") -> float:
    """Probability that every requested payload is at the relay.

    ``mds_random`` aligns the cached parity bits across files (minimum);
    ``naive_independent`` caches each file independently (product).
    """
    req = _requested(q, pi)
    if scheme == "mds_random":
        return float(req.min())
    if scheme == "naive_independent":
        return float(np.prod(req))
    raise ValueError(f"unknown caching scheme {scheme!r}")


@dataclass
class SegmentLedger:
    """Per-user parity-bit accounting for the segment in flight.

    ``budgets[k]`` is the number of cached parity bits of user ``k``'s
    current segment, ``2 q L_S / (1 + q)``.
    """

    segment_bits: float
    budgets: np.ndarray
    cached_sent: np.ndarray = field(default=None)
    total_sent: np.ndarray = field(default=None)
    underflow_events: np.ndarray = field(default=None)
    underflow_bits: np.ndarray = field(default=None)
    segments_done: np.ndarray = field(default=None)

    def __post_init__(self):
        self.budgets = np.asarray(self.budgets, dtype=float)
        n = self.budgets.shape[0]
        for name, dtype in (
            ("cached_sent", float),
            ("total_sent", float),
            ("underflow_events", np.int64),
            ("underflow_bits", float),
            ("segments_done", np.int64),
        ):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(n, dtype=dtype))

    @classmethod
    def for_profile(cls, q: CacheVector, pi: Urp, segment_bits: float) -> "SegmentLedger":
        req = _requested(q, pi)
        return cls(segment_bits, 2.0 * req * segment_bits / (1.0 + req))


def account_slot(ledger: SegmentLedger, bits_sent, s: int) -> SegmentLedger:
    """Credit one slot's transmissions (in place) and return the ledger.

    In a CoMP slot the relay sends from its cache; bits beyond the cached
    budget count as an underflow (one event per user-slot) but are still
    delivered.  Crossing ``L_S`` starts a new segment; any surplus carries
    into it.
    """
    bits = np.broadcast_to(np.asarray(bits_sent, dtype=float), ledger.budgets.shape)
    if np.any(bits < 0):
        raise ValueError("bits_sent must be nonnegative")
    if s == 1:
        room = ledger.budgets - ledger.cached_sent
        over = bits > room
        ledger.underflow_events += over
        ledger.underflow_bits += np.where(over, bits - room, 0.0)
        ledger.cached_sent = np.minimum(ledger.cached_sent + bits, ledger.budgets)
    ledger.total_sent = ledger.total_sent + bits
    done = ledger.total_sent >= ledger.segment_bits
    if np.any(done):
        n_roll = np.floor(ledger.total_sent / ledger.segment_bits).astype(np.int64)
        ledger.segments_done += np.where(done, n_roll, 0)
        ledger.total_sent = np.where(done, ledger.total_sent - n_roll * ledger.segment_bits, ledger.total_sent)
        # surplus bits of a CoMP slot already came out of the next segment's cache
        carry = np.where(s == 1, np.minimum(ledger.total_sent, ledger.budgets), 0.0)
        ledger.cached_sent = np.where(done, carry, ledger.cached_sent)
    return ledger


def occupancy_bits(q, file_sizes) -> float:
    """Physical relay storage ``sum F_l 2 q_l / (1 + q_l)``."""
    q = np.asarray(q.q if isinstance(q, CacheVector) else q, dtype=float)
    sizes = np.asarray(file_sizes, dtype=float)
    if np.any(sizes <= 0):
        raise ValueError("file sizes must be positive")
    return float(np.sum(sizes * 2.0 * q / (1.0 + q)))


def cache_cost_bits(q, file_sizes) -> float:
    """``sum F_l q_l``, the storage term priced by ``eta`` in the objective."""
    q = np.asarray(q.q if isinstance(q, CacheVector) else q, dtype=float)
    return float(np.dot(np.asarray(file_sizes, dtype=float), q))


def update_load_bps(bits: float, period: float = WEEK_SECONDS) -> float:
    """Average backhaul load needed to refresh ``bits`` once per ``period`` seconds."""
    if not period > 0:
        raise ValueError("period must be positive")
    return float(bits) / period


def sample_urp(rng: np.random.Generator, rho, n_users: int) -> Urp:
    """Independent file requests with popularity ``rho``."""
    rho = np.asarray(rho, dtype=float)
    if rho.ndim != 1 or np.any(rho < 0) or abs(rho.sum() - 1.0) > 1e-9:
        raise ConfigError("[cache].rho", "popularities must be nonnegative and sum to 1")
    return Urp(tuple(int(v) for v in rng.choice(rho.size, size=n_users, p=rho)))
