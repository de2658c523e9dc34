"""Independent checks of the closed forms by Monte Carlo and value iteration.

The effective-gain check uses only linear algebra, and the value iteration
uses only the queue model with its gain law, so neither
touches the closed forms it is compared against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse, stats
from scipy.sparse.linalg import spsolve

from .cache import CacheVector, Urp
from .cache_control import c_hat
from .config import SystemConfig
from .power import theta_tilde
from .queue import playback_rate, stage_cost
from .sim import run_episode

__all__ = [
    "GainReport",
    "zf_projection_gains",
    "mc_effective_gain_check",
    "MdpGrid",
    "MdpResult",
    "MdpConvergenceError",
    "tiny_mdp_average_cost",
    "surrogate_error_scan",
    "ServiceRateReport",
    "service_rate_identity_check",
    "underflow_trend",
    "format_report",
]


@dataclass(frozen=True)
class GainReport:
    q_min: float
    n_samples: int
    zero_mass: float
    tail_mean: float
    ks_stat: float
    ks_critical: float
    selection_freq: float
    max_orth_residual: float
    max_norm_error: float

    @property
    def ks_pass(self) -> bool:
        return self.ks_stat < self.ks_critical


def zf_projection_gains(rows: np.ndarray) -> tuple[np.ndarray, float, float]:
    """ZF gains of stacked channels ``(n, users, dim)`` via explicit projections.

    Returns the gains plus the worst co-user leakage ``|h_j^H v_k|/||h_j||``
    and worst ``| ||v_k|| - 1 |`` over the batch.
    """
    n, users, dim = rows.shape
    gains = np.empty((n, users))
    beams = np.empty((n, dim, users), dtype=complex)
    for k in range(users):
        h = rows[:, k, :]
        others = np.delete(rows, k, axis=1).transpose(0, 2, 1)  # n x dim x (users-1)
        if users > 1:
            oh = np.conj(others.transpose(0, 2, 1))
            coef = np.linalg.solve(oh @ others, (oh @ h[:, :, None]))
            proj = h - (others @ coef)[:, :, 0]
        else:
            proj = h
        norm = np.linalg.norm(proj, axis=1)
        v = proj / norm[:, None]
        beams[:, :, k] = v
        gains[:, k] = np.abs(np.einsum("nd,nd->n", np.conj(h), v)) ** 2
    leak = np.abs(np.conj(rows) @ beams)  # n x users x users, [j, k] = h_j^H v_k
    leak /= np.linalg.norm(rows, axis=2)[:, :, None]
    leak[:, np.arange(users), np.arange(users)] = 0.0
    norm_err = np.abs(np.linalg.norm(beams, axis=1) - 1.0)
    return gains, float(leak.max()), float(norm_err.max())


def mc_effective_gain_check(q_min: float, n_samples: int, rng: np.random.Generator, m: int = 2, user: int = 0) -> GainReport:
    """Simulate cache states and ZF beamforming end to end, then test the gain law of ``user``.

    Expected: an atom at 0 of mass ``(1 - q_min)/2`` and a unit-mean
    exponential otherwise.
    """
    if n_samples < 10_000:
        raise ValueError("need at least 1e4 samples")
    n_users = 2 * m
    s = rng.random(n_samples) < q_min
    h = (rng.standard_normal((n_samples, n_users, n_users)) + 1j * rng.standard_normal((n_samples, n_users, n_users))) / math.sqrt(2)
    gains = np.zeros((n_samples, n_users))
    leak = norm_err = 0.0
    comp = np.flatnonzero(s)
    if comp.size:
        g, lk, ne = zf_projection_gains(h[comp])
        gains[comp] = g
        leak, norm_err = max(leak, lk), max(norm_err, ne)
    solo = np.flatnonzero(~s)
    if solo.size:
        sel = np.sort(np.argsort(rng.random((solo.size, n_users)), axis=1)[:, :m], axis=1)
        rows = h[solo[:, None], sel, :m]
        g, lk, ne = zf_projection_gains(rows)
        gains[solo[:, None], sel] = g
        leak, norm_err = max(leak, lk), max(norm_err, ne)
    gk = gains[:, user]
    pos = gk[gk > 0]
    ks = stats.kstest(pos, "expon").statistic
    return GainReport(
        q_min=q_min,
        n_samples=n_samples,
        zero_mass=float(np.mean(gk == 0)),
        tail_mean=float(pos.mean()),
        ks_stat=float(ks),
        ks_critical=float(stats.kstwo.ppf(0.99, pos.size)),
        selection_freq=float(np.mean(gk > 0)),
        max_orth_residual=leak,
        max_norm_error=norm_err,
    )


class MdpConvergenceError(RuntimeError):
    def __init__(self, message: str, span: float):
        super().__init__(f"{message} (span={span:.3g})")
        self.span = span


@dataclass(frozen=True)
class MdpGrid:
    """Discretization of the single-user chain."""

    q_points: int = 400
    g_points: int = 64
    p_points: int = 64
    q_max: float | None = None
    p_max: float = 200.0
    p_min: float = 1e-3


@dataclass(frozen=True)
class MdpResult:
    theta: float
    lower: float
    upper: float
    iterations: int
    policy_evaluations: int


def _gain_atoms(q_min: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    xi = 0.5 * (1.0 + q_min)
    u = (np.arange(n) + 0.5) / n
    g = -np.log1p(-u)  # Exp(1) midpoint quantiles
    atoms = np.concatenate(([0.0], g))
    probs = np.concatenate(([1.0 - xi], np.full(n, xi / n)))
    return atoms, probs


def tiny_mdp_average_cost(
    grid: MdpGrid,
    q_min: float,
    cfg: SystemConfig,
    k: int = 0,
    *,
    tol: float = 1e-6,
    max_iter: int = 20_000,
    evaluate_every: int = 20,
    allowed_powers: np.ndarray | None = None,
) -> MdpResult:
    """Optimal average cost of one user's buffer by relative value iteration.

    The action (power) is chosen after the gain is observed.  Successor
    queues are split linearly between neighbouring grid points and clamped
    to ``[0, q_max]``.  Every ``evaluate_every`` sweeps the current greedy
    policy is evaluated exactly (sparse solve) to speed up convergence.
    Iteration stops when the bounds on the average cost are within
    ``tol * theta``.
    """
    q_max = grid.q_max if grid.q_max is not None else 4.0 * cfg.w_high
    xs = np.linspace(0.0, q_max, grid.q_points)
    atoms, probs = _gain_atoms(q_min, grid.g_points)
    if allowed_powers is None:
        powers = np.concatenate(([0.0], np.geomspace(grid.p_min, grid.p_max, grid.p_points - 1)))
    else:
        powers = np.asarray(allowed_powers, dtype=float)
    nq, ng, npw = xs.size, atoms.size, powers.size

    rate = cfg.bw * np.log2(1.0 + atoms[:, None] * powers[None, :])  # g x p
    drain = np.asarray(playback_rate(xs, cfg))
    nxt = xs[:, None, None] + (rate[None] - drain[:, None, None]) * cfg.tau
    nxt = np.clip(nxt, 0.0, q_max)
    pos = nxt / (xs[1] - xs[0])
    lo = np.minimum(np.floor(pos).astype(np.int64), nq - 2)
    frac = pos - lo
    cost = np.asarray(stage_cost(xs, cfg, k))
    pay = powers[None, None, :]

    def backup(v):
        cont = (1.0 - frac) * v[lo] + frac * v[lo + 1] + pay
        best = cont.argmin(axis=2)
        val = np.take_along_axis(cont, best[:, :, None], axis=2)[:, :, 0]
        return cost + val @ probs, best

    def evaluate(best):
        rows = np.repeat(np.arange(nq), ng)
        gi = np.tile(np.arange(ng), nq)
        bi = best.ravel()
        l = lo[rows, gi, bi]
        f = frac[rows, gi, bi]
        w = probs[gi]
        mat = sparse.coo_matrix(
            (np.concatenate((w * (1 - f), w * f)), (np.concatenate((rows, rows)), np.concatenate((l, l + 1)))),
            shape=(nq, nq),
        ).tocsr()
        c_pi = cost + (powers[best] * probs[None, :]).sum(axis=1)
        # unknowns: h (with h[0] = 0) and theta
        a = sparse.eye(nq, format="csr") - mat
        a = sparse.hstack([a[:, 1:], sparse.csr_matrix(np.ones((nq, 1)))]).tocsc()
        sol = spsolve(a, c_pi)
        return np.concatenate(([0.0], sol[:-1]))

    v = np.zeros(nq)
    span = math.inf
    n_eval = 0
    for it in range(1, max_iter + 1):
        tv, best = backup(v)
        diff = tv - v
        lower, upper = diff.min(), diff.max()
        span = upper - lower
        theta = 0.5 * (lower + upper)
        if span <= tol * abs(theta):
            return MdpResult(theta, lower, upper, it, n_eval)
        if evaluate_every and it % evaluate_every == 0:
            v = evaluate(best)
            n_eval += 1
        else:
            v = tv - tv[0]
    raise MdpConvergenceError(f"value iteration did not converge in {max_iter} sweeps", span)


def surrogate_error_scan(ratios, q_min: float, cfg: SystemConfig) -> list[float]:
    """Relative gap ``|theta~ - C^| / theta~`` per streaming-to-bandwidth ratio.

    Both sides are summed over users; the stage cost at ``Q°`` is common
    to both.
    """
    q = CacheVector.uniform(q_min, cfg.n_files)
    pi = Urp(tuple(0 for _ in range(cfg.n_users)))
    gaps = []
    for ratio in ratios:
        c = cfg.replace(mu0=float(ratio) * cfg.bw)
        th = sum(theta_tilde(q_min, c, k) for k in range(c.n_users))
        gaps.append(abs(th - c_hat(q, pi, c)) / th)
    return gaps


@dataclass(frozen=True)
class ServiceRateReport:
    q_min: float
    r_bar_a: float
    r_bar_b: float
    expected: float
    tau: float

    @property
    def gap(self) -> float:
        return abs(self.r_bar_a - self.r_bar_b) / self.r_bar_b

    @property
    def error_a(self) -> float:
        return abs(self.r_bar_a - self.expected) / self.expected

    @property
    def error_b(self) -> float:
        return abs(self.r_bar_b - self.expected) / self.expected

    def per_second(self) -> tuple[float, float, float]:
        return self.r_bar_a / self.tau, self.r_bar_b / self.tau, self.expected / self.tau


def service_rate_identity_check(cfg: SystemConfig, q: CacheVector, pi: Urp, n_slots: int, seed=1) -> ServiceRateReport:
    """Closed-loop mean bits per slot given CoMP (A) and given scheduling (B).

    Both should equal ``2 mu0 tau / (1 + q_min)`` bits per slot.  Values are
    averaged over users; ``r_bar_a`` is undefined when ``q_min = 0``.
    """
    rec, _ = run_episode(cfg, "proposed", q, n_slots, seed, urp=pi)
    qm = float(q.as_array()[list(pi.pi)].min())
    return ServiceRateReport(
        q_min=qm,
        r_bar_a=float(np.nanmean(rec.rate_bits_comp)) if rec.pr_comp > 0 else math.nan,
        r_bar_b=float(np.nanmean(rec.rate_bits_selected)),
        expected=2.0 * cfg.mu0 * cfg.tau / (1.0 + qm),
        tau=cfg.tau,
    )


def underflow_trend(cfg: SystemConfig, q: CacheVector, segment_sizes, n_slots: int, seed=1, pi: Urp | None = None) -> list[float]:
    """Underflow events per user per CoMP slot for each segment size."""
    out = []
    for size in segment_sizes:
        rec, _ = run_episode(cfg.replace(segment_bits=float(size)), "proposed", q, n_slots, seed, urp=pi)
        out.append(rec.underflow_frequency)
    return out


def format_report(name: str, fields: dict) -> str:
    """``name key=value ...`` on one line, numbers with 12 significant digits."""
    parts = [name]
    for key, value in fields.items():
        if isinstance(value, float):
            value = f"{value:.12g}"
        parts.append(f"{key}={value}")
    return " ".join(parts)
