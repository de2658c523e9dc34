"""Closed-loop slot simulation with metric accumulation and parameter sweeps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
import numpy as np

from . import _kernel
from .baselines import baseline3_gains_batch, baseline_level
from .cache import CacheVector, Urp, occupancy_bits, sample_urp
from .cache_control import run_cache_optimization
from .channel import effective_gains_batch
from .config import BaselineConfig, SweepGrid, SystemConfig
from .power import build_policy_tables
from .queue import AssumptionError, validate_assumptions

__all__ = [
    "POLICIES",
    "SimulationError",
    "MetricsRecord",
    "Trace",
    "seed_streams",
    "sample_urp",
    "run_episode",
    "SweepRow",
    "SweepResult",
    "sweep",
    "calibrate_kappa",
    "proposed_cache_vector",
]

POLICIES = ("proposed", "baseline1", "baseline2", "baseline3", "zero")
MAX_CHUNK = 100_000


class SimulationError(RuntimeError):
    """Non-finite state or other numeric breakdown during a run."""


@dataclass(frozen=True)
class MetricsRecord:
    """Averages over the measurement window (after burn-in).

    Per-user arrays have one entry per user.  ``rate_bits_comp`` and
    ``rate_bits_selected`` are mean bits delivered per slot conditioned on
    a CoMP slot and on the user being scheduled.
    """

    policy: str
    n_slots: int
    n_measured: int
    interruption: np.ndarray
    overflow: np.ndarray
    smooth_interruption: np.ndarray
    smooth_overflow: np.ndarray
    avg_power: np.ndarray
    rate_bits_comp: np.ndarray
    rate_bits_selected: np.ndarray
    underflow_events: np.ndarray
    comp_user_slots: np.ndarray
    segments_done: np.ndarray
    pr_comp: float
    mean_q_min: float
    beta: tuple[float, ...]
    gamma: tuple[float, ...]
    median_queue: np.ndarray

    @property
    def avg_total_power(self) -> float:
        return float(self.avg_power.sum())

    @property
    def avg_power_per_user(self) -> float:
        return float(self.avg_power.mean())

    @property
    def combined_cost(self) -> float:
        """Indicator-based ``sum(beta I + gamma B) + total power``."""
        return float(np.dot(self.beta, self.interruption) + np.dot(self.gamma, self.overflow) + self.avg_total_power)

    @property
    def smooth_combined_cost(self) -> float:
        return float(
            np.dot(self.beta, self.smooth_interruption)
            + np.dot(self.gamma, self.smooth_overflow)
            + self.avg_total_power
        )

    @property
    def underflow_frequency(self) -> float:
        """Underflow events per user per CoMP slot."""
        slots = self.comp_user_slots.sum()
        return float(self.underflow_events.sum() / slots) if slots else 0.0

    @property
    def underflow_per_segment(self) -> float:
        segs = self.segments_done.sum()
        return float(self.underflow_events.sum() / segs) if segs else 0.0


@dataclass
class Trace:
    slot: np.ndarray
    s: np.ndarray
    q_min: np.ndarray
    queue: np.ndarray
    gain: np.ndarray
    power: np.ndarray
    rate: np.ndarray


def seed_streams(seed, n: int = 5) -> list[np.random.Generator]:
    """Independent generators for URP, cache state, channel, selection, relay."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.default_rng(child) for child in ss.spawn(n)]


class _Accumulator:
    def __init__(self, k: int):
        z = lambda: np.zeros(k)
        self.n = 0
        self.ind_i, self.ind_b, self.sm_i, self.sm_b, self.power = z(), z(), z(), z(), z()
        self.bits_comp, self.bits_sel, self.n_sel, self.under = z(), z(), z(), z()
        self.n_comp = 0
        self.qmin_sum = 0.0
        self.comp_user = z()
        self.q_hist: list[np.ndarray] = []

    def add(self, q, p, r, s, g, under, q_min, cfg: SystemConfig):
        self.n += q.shape[0]
        self.ind_i += (q < cfg.w_low).sum(axis=0)
        self.ind_b += (q > cfg.w_high).sum(axis=0)
        self.sm_i += np.exp(-cfg.alpha * np.maximum(q - cfg.w_low, 0.0)).sum(axis=0)
        self.sm_b += np.exp(-cfg.alpha * np.maximum(cfg.w_high - q, 0.0)).sum(axis=0)
        self.power += p.sum(axis=0)
        bits = r * cfg.tau
        comp = s == 1
        self.n_comp += int(comp.sum())
        self.bits_comp += bits[comp].sum(axis=0)
        sel = g > 0
        self.n_sel += sel.sum(axis=0)
        self.bits_sel += np.where(sel, bits, 0.0).sum(axis=0)
        self.under += under.sum(axis=0)
        self.comp_user += comp.sum()
        self.qmin_sum += q_min * q.shape[0]
        self.q_hist.append(q[:: max(1, q.shape[0] // 1000)])


def _stack_memos(tables) -> tuple[np.ndarray, np.ndarray]:
    # memos of users with different prices may differ in length; pad flat
    size = max(u.memo_x.size for u in tables.users)
    xs, ws = [], []
    for u in tables.users:
        extra = size - u.memo_x.size
        xs.append(np.concatenate((u.memo_x, u.memo_x[-1] + 1.0 + np.arange(extra))))
        ws.append(np.concatenate((u.memo_level, np.full(extra, u.memo_level[-1]))))
    return np.stack(xs), np.stack(ws)


def proposed_cache_vector(cfg: SystemConfig, n_urp: int = 2000, seed: int = 1, sigma0: float | None = None) -> CacheVector:
    """Cache vector from the subgradient optimizer at these prices."""
    return run_cache_optimization(cfg, n_urp, np.random.default_rng(seed), sigma0=sigma0).q


def run_episode(
    cfg: SystemConfig,
    policy: str,
    q: CacheVector | None,
    n_slots: int,
    seed=1,
    *,
    bl: BaselineConfig | None = None,
    burn_in_frac: float = 0.1,
    trace: bool = False,
    q0: float | None = None,
    urp: Urp | None = None,
    check_assumptions: bool = True,
) -> tuple[MetricsRecord, Trace | None]:
    """Simulate ``n_slots`` slots of one policy and return window averages.

    The request profile is redrawn every ``cfg.urp_hold_slots`` slots; the
    controller tables follow its ``q_min``.  Baselines never use the relay
    cache, so their cache state is always 0.  Queues start at ``q0``
    (default ``W_L``).  A fixed ``urp`` replaces the sampled profiles.

    Raises
    ------
    AssumptionError
        Proposed policy with prices violating the interior-optimum conditions.
    SimulationError
        A queue became non-finite.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}")
    if n_slots < 1 or not 0 <= burn_in_frac < 1:
        raise ValueError("need n_slots >= 1 and burn_in_frac in [0, 1)")
    if policy == "proposed":
        problems = validate_assumptions(cfg) if check_assumptions else []
        if problems:
            raise AssumptionError("; ".join(problems))
        if q is None:
            raise ValueError("the proposed policy needs a cache vector")
    if policy.startswith("baseline"):
        bl = bl or BaselineConfig()
    q = q if q is not None else CacheVector.uniform(0.0, cfg.n_files)
    if len(q.q) != cfg.n_files:
        raise ValueError("cache vector length must equal n_files")

    rng_urp, rng_state, rng_chan, rng_sel, rng_relay = seed_streams(seed)
    k_users = cfg.n_users
    queues = np.full(k_users, cfg.w_low if q0 is None else float(q0))
    burn = int(burn_in_frac * n_slots)
    acc = _Accumulator(k_users)
    seg_start = np.zeros(k_users, dtype=np.int64)
    segments = np.zeros(k_users, dtype=np.int64)
    trace_parts: list[tuple] = []

    uses_cache = policy == "proposed"
    empty = np.zeros((k_users, 1))
    t = 0
    while t < n_slots:
        pi = urp if urp is not None else sample_urp(rng_urp, cfg.rho, k_users)
        req = q.as_array()[list(pi.pi)]
        qm = float(req.min()) if uses_cache else 0.0
        budgets = 2.0 * req * cfg.segment_bits / (1.0 + req)
        cached = np.zeros(k_users)
        total = np.zeros(k_users)
        seg = np.zeros(k_users, dtype=np.int64)
        if policy == "proposed":
            tables = build_policy_tables(qm, cfg)
            memo_x, memo_w = _stack_memos(tables)
            mode, base, factor = _kernel.LEVEL_MEMO, 0.0, 1.0
        else:
            memo_x = memo_w = empty
            factor = 0.5 if policy == "baseline3" else 1.0
            if policy == "zero":
                mode, base = _kernel.LEVEL_ZERO, 0.0
            elif policy == "baseline1":
                mode, base = _kernel.LEVEL_CONSTANT, baseline_level("baseline1", 0.0, cfg, bl)
            else:
                mode = _kernel.LEVEL_WEIGHTED
                base = baseline_level(policy, 0.0, cfg, bl) / cfg.w_high
        hold_end = min(n_slots, t + cfg.urp_hold_slots)
        while t < hold_end:
            n = min(MAX_CHUNK, hold_end - t)
            s = (rng_state.random(n) < qm).astype(np.int8)
            if policy == "baseline3":
                gains = baseline3_gains_batch(rng_chan, rng_sel, rng_relay, n, cfg.m, bl)
            else:
                gains = effective_gains_batch(rng_chan, rng_sel, s, cfg.m)
            out_q = np.empty((n, k_users))
            out_p = np.empty((n, k_users))
            out_r = np.empty((n, k_users))
            out_u = np.empty((n, k_users), dtype=np.int8)
            bad = _kernel.run_block(
                queues, gains, s, mode, memo_x, memo_w, base, factor,
                cfg.bw, cfg.tau, cfg.mu0, cfg.w_low, cfg.w_high,
                uses_cache, budgets, cached, total, seg, cfg.segment_bits,
                out_q, out_p, out_r, out_u,
            )
            if bad >= 0:
                raise SimulationError(
                    f"non-finite queue at slot {t + bad} (policy={policy}, q_min={qm:g}, queues={queues.tolist()})"
                )
            lo = max(0, burn - t)
            if lo < n:
                acc.add(out_q[lo:], out_p[lo:], out_r[lo:], s[lo:], gains[lo:], out_u[lo:], qm, cfg)
            if trace:
                trace_parts.append((np.arange(t, t + n), s, np.full(n, qm), out_q, gains, out_p, out_r))
            t += n
            if t <= burn:
                seg_start = segments + seg
        segments += seg
    segments_measured = segments - np.minimum(seg_start, segments)

    m = max(acc.n, 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        bits_comp = np.where(acc.n_comp > 0, acc.bits_comp / max(acc.n_comp, 1), np.nan)
        bits_sel = np.where(acc.n_sel > 0, acc.bits_sel / np.maximum(acc.n_sel, 1), np.nan)
    q_all = np.concatenate(acc.q_hist) if acc.q_hist else np.zeros((1, k_users))
    record = MetricsRecord(
        policy=policy,
        n_slots=n_slots,
        n_measured=acc.n,
        interruption=acc.ind_i / m,
        overflow=acc.ind_b / m,
        smooth_interruption=acc.sm_i / m,
        smooth_overflow=acc.sm_b / m,
        avg_power=acc.power / m,
        rate_bits_comp=bits_comp,
        rate_bits_selected=bits_sel,
        underflow_events=acc.under.astype(np.int64),
        comp_user_slots=acc.comp_user.astype(np.int64),
        segments_done=segments_measured,
        pr_comp=acc.n_comp / m,
        mean_q_min=acc.qmin_sum / m,
        beta=cfg.beta,
        gamma=cfg.gamma,
        median_queue=np.median(q_all, axis=0),
    )
    tr = None
    if trace:
        cols = list(zip(*trace_parts))
        tr = Trace(*(np.concatenate(c) for c in cols))
    return record, tr


@dataclass
class SweepRow:
    policy: str
    beta: float
    gamma: float
    eta_or_kappa: float
    seed: int | str
    n_slots: int
    metrics: MetricsRecord | None = None
    occupancy_bits: float = 0.0
    values: dict = field(default_factory=dict)
    error: str | None = None


@dataclass
class SweepResult:
    rows: list[SweepRow]
    aggregates: list[SweepRow]

    @property
    def failures(self) -> list[SweepRow]:
        return [r for r in self.rows if r.error]


METRIC_COLUMNS = ("avg_power_per_user", "interruption_prob", "overflow_prob", "combined_cost", "pr_comp")


def _row_values(rec: MetricsRecord) -> dict:
    # figures report user 1; users are exchangeable under equal prices
    return {
        "avg_power_per_user": rec.avg_power_per_user,
        "interruption_prob": float(rec.interruption[0]),
        "overflow_prob": float(rec.overflow[0]),
        "combined_cost": rec.combined_cost,
        "pr_comp": rec.pr_comp,
    }


def _point_setup(grid: SweepGrid, point, cfg: SystemConfig, bl: BaselineConfig, n_urp: int, sigma0):
    if grid.policy == "proposed":
        beta, eta = point
        pcfg = cfg.replace(beta=beta, gamma=beta, eta=eta)
        q = proposed_cache_vector(pcfg, n_urp=n_urp, sigma0=sigma0)
        return pcfg, q, None, (beta, beta, eta)
    (kappa,) = point
    pbl = replace(bl, kappa=kappa, baseline_id=int(grid.policy[-1]))
    return cfg, None, pbl, (cfg.beta[0], cfg.gamma[0], kappa)


def sweep(
    grid: SweepGrid,
    cfg: SystemConfig,
    bl: BaselineConfig | None = None,
    *,
    n_urp: int = 2000,
    sigma0: float | None = None,
) -> SweepResult:
    """Run every (point, seed) episode in grid order, then aggregate over seeds.

    A failing episode is recorded with its error message and the sweep
    moves on.
    """
    bl = bl or BaselineConfig()
    rows: list[SweepRow] = []
    aggregates: list[SweepRow] = []
    for point in grid.points:
        try:
            pcfg, q, pbl, knobs = _point_setup(grid, point, cfg, bl, n_urp, sigma0)
        except (ValueError, ArithmeticError, RuntimeError) as exc:
            for seed in grid.seeds:
                rows.append(SweepRow(grid.policy, math.nan, math.nan, point[-1], seed, grid.n_slots, error=str(exc)))
            continue
        occ = occupancy_bits(q, pcfg.file_sizes) if q is not None else 0.0
        point_rows = []
        for seed in grid.seeds:
            row = SweepRow(grid.policy, knobs[0], knobs[1], knobs[2], seed, grid.n_slots, occupancy_bits=occ)
            try:
                rec, _ = run_episode(pcfg, grid.policy, q, grid.n_slots, seed, bl=pbl, burn_in_frac=grid.burn_in_frac)
                row.metrics = rec
                row.values = _row_values(rec)
            except (ValueError, ArithmeticError, RuntimeError) as exc:
                row.error = f"{type(exc).__name__}: {exc}"
            rows.append(row)
            point_rows.append(row)
        good = [r for r in point_rows if r.error is None]
        if good:
            table = np.array([[r.values[c] for c in METRIC_COLUMNS] for r in good])
            mean = table.mean(axis=0)
            sem = table.std(axis=0, ddof=1) / math.sqrt(len(good)) if len(good) > 1 else np.zeros_like(mean)
            for label, vec in (("mean", mean), ("sem", sem)):
                aggregates.append(
                    SweepRow(grid.policy, knobs[0], knobs[1], knobs[2], label, grid.n_slots,
                             occupancy_bits=occ, values=dict(zip(METRIC_COLUMNS, vec.tolist())))
                )
    return SweepResult(rows, aggregates)


def calibrate_kappa(
    policy: str,
    target_power: float,
    cfg: SystemConfig,
    bl: BaselineConfig | None = None,
    *,
    n_slots: int = 50_000,
    seed=12345,
    rtol: float = 0.01,
    max_iter: int = 40,
) -> float:
    """``kappa`` whose mean per-user power is ``target_power`` (log bisection).

    Each probe reruns the same seed so the power is a deterministic,
    monotone function of ``kappa`` up to closed-loop effects.
    """
    bl = bl or BaselineConfig()
    if not policy.startswith("baseline"):
        raise ValueError("only baselines have a kappa")

    def power(log_k: float) -> float:
        rec, _ = run_episode(cfg, policy, None, n_slots, seed, bl=replace(bl, kappa=math.exp(log_k)))
        return rec.avg_power_per_user

    lo, hi = math.log(1e2), math.log(1e14)
    if not power(lo) > target_power > power(hi):
        raise ValueError(f"target power {target_power:g} outside the reachable range")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        pm = power(mid)
        if abs(pm - target_power) <= rtol * target_power:
            return math.exp(mid)
        if pm > target_power:
            lo = mid
        else:
            hi = mid
    return math.exp(0.5 * (lo + hi))
