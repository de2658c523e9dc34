import itertools
import math

import numpy as np
import pytest

from coopcache.cache import CacheVector, Urp, cache_cost_bits
from coopcache.cache_control import (
    DEFAULT_SIGMA0,
    OptimizerState,
    c_hat,
    expected_objective,
    first_step_sigma0,
    min_user,
    noisy_subgradient,
    objective_sample,
    run_cache_optimization,
    subgradient_step,
    surrogate_constants,
)
from coopcache.config import reference_config
from coopcache.power import LN2

PI_ALL = Urp((0, 1, 2, 3))


def enumerated_objective(q: np.ndarray, cfg) -> float:
    """Exact expectation over all request profiles (6^4 of them)."""
    rho = np.asarray(cfg.rho)
    total = 0.0
    cv = CacheVector(tuple(q))
    for prof in itertools.product(range(cfg.n_files), repeat=cfg.n_users):
        total += np.prod(rho[list(prof)]) * c_hat(cv, Urp(prof), cfg)
    return total + cfg.eta * cache_cost_bits(q, cfg.file_sizes)


def test_constants_natural_log_reading(cfg):
    sc = surrogate_constants(0.5, cfg)
    c = cfg.mu0 * LN2 / cfg.bw
    assert sc.c == pytest.approx(c)
    assert sc.a1 == pytest.approx(math.log(math.exp(-c)) * math.exp(-math.exp(-c)) + sc.a2, rel=1e-14)
    # lambda^ = exp(-a1 + mu0 ln2 / (bw xi)) solves (xi/ln2)(ln lambda + a1) = mu0/bw
    lam_hat = sc.boost
    assert sc.xi / LN2 * (math.log(lam_hat) + sc.a1) == pytest.approx(cfg.mu0 / cfg.bw, rel=1e-12)
    with pytest.raises(ValueError):
        surrogate_constants(1.5, cfg)


def test_c_hat_decreases_with_caching(cfg):
    assert c_hat(CacheVector.uniform(1.0, 6), PI_ALL, cfg) < c_hat(CacheVector.uniform(0.0, 6), PI_ALL, cfg)


def test_c_hat_midpoint_convexity(cfg):
    rng = np.random.default_rng(0)
    for _ in range(100):
        q1, q2 = rng.random(6), rng.random(6)
        pi = Urp(tuple(rng.integers(0, 6, 4)))
        mid = c_hat(CacheVector(tuple((q1 + q2) / 2)), pi, cfg)
        avg = 0.5 * (c_hat(CacheVector(tuple(q1)), pi, cfg) + c_hat(CacheVector(tuple(q2)), pi, cfg))
        assert mid <= avg + 1e-12


def test_subgradient_unrequested_component(cfg):
    g = noisy_subgradient(CacheVector.uniform(0.5, 6), Urp((0, 0, 1, 1)), cfg)
    for l in (2, 3, 4, 5):
        assert g[l] == pytest.approx(cfg.eta * cfg.file_sizes[l])
    assert g[0] < 0


def test_subgradient_tie_break(cfg):
    q = CacheVector((0.3, 0.3, 0.9, 0.9, 0.9, 0.9))
    pi = Urp((2, 1, 0, 3))
    assert min_user(q, pi) == 1
    g = noisy_subgradient(q, pi, cfg)
    assert g[1] != pytest.approx(cfg.eta * cfg.file_sizes[1])
    assert g[0] == pytest.approx(cfg.eta * cfg.file_sizes[0])


def test_subgradient_unbiased_against_finite_difference(cfg):
    rng = np.random.default_rng(5)
    q = np.array([0.62, 0.55, 0.41, 0.27, 0.18, 0.09])  # no ties
    pis = [Urp(tuple(rng.choice(6, 4, p=cfg.rho))) for _ in range(10_000)]
    grads = np.array([noisy_subgradient(CacheVector(tuple(q)), pi, cfg) for pi in pis])
    mean, se = grads.mean(axis=0), grads.std(axis=0, ddof=1) / math.sqrt(len(pis))
    h = 1e-6
    for l in range(6):
        up, dn = q.copy(), q.copy()
        up[l] += h
        dn[l] -= h
        fd = np.mean([
            objective_sample(CacheVector(tuple(up)), pi, cfg) - objective_sample(CacheVector(tuple(dn)), pi, cfg)
            for pi in pis
        ]) / (2 * h)
        assert abs(fd - mean[l]) <= 3 * se[l] + 1e-6 * abs(fd)


def test_projection_keeps_zero(cfg):
    big = reference_config(eta=1e-6)
    state = OptimizerState(q=CacheVector.uniform(0.0, 6), sigma0=1.0)
    subgradient_step(state, PI_ALL, big)
    assert state.q.q == (0.0,) * 6
    assert state.iteration == 2 and len(state.trace) == 1


def test_state_validation():
    with pytest.raises(ValueError):
        OptimizerState(q=CacheVector.uniform(0.5, 6), sigma0=0.0)
    with pytest.raises(ValueError):
        OptimizerState(q=CacheVector.uniform(0.5, 6), sigma0=1.0, iteration=0)


def test_zero_storage_price_fills_requested_files():
    cfg = reference_config(eta=0.0)
    state = run_cache_optimization(cfg, 500, np.random.default_rng(2))
    q = np.array(state.q.q)
    assert q[0] > 0.9 and q[1] > 0.9
    assert np.all(q >= 0.5)


def test_huge_storage_price_empties_cache():
    cfg = reference_config(eta=1e-6)
    state = run_cache_optimization(cfg, 200, np.random.default_rng(2))
    assert state.q.q == (0.0,) * 6


def test_runs_are_deterministic(cfg):
    a = run_cache_optimization(cfg, 300, np.random.default_rng(4))
    b = run_cache_optimization(cfg, 300, np.random.default_rng(4))
    assert a.trace == b.trace


def test_projection_invariant(cfg):
    state = run_cache_optimization(cfg, 400, np.random.default_rng(8), sigma0=0.5)
    for row in state.trace:
        assert all(0.0 <= v <= 1.0 for v in row.q)


def test_step_size_schedule():
    i = np.arange(1, 1_000_001, dtype=float)
    steps = DEFAULT_SIGMA0 / i
    partial = np.cumsum(steps)
    sq = np.cumsum(steps**2)
    assert partial[-1] > partial[999] + DEFAULT_SIGMA0 * math.log(999)
    assert sq[-1] - sq[999] < DEFAULT_SIGMA0**2 / 999
    assert sq[-1] < DEFAULT_SIGMA0**2 * math.pi**2 / 6


def test_first_step_rule(cfg):
    q = CacheVector.uniform(0.5, 6)
    s0 = first_step_sigma0(q, cfg)
    for prof in itertools.product(range(6), repeat=4):
        assert np.max(np.abs(s0 * noisy_subgradient(q, Urp(prof), cfg))) <= 0.05 + 1e-12


@pytest.mark.parametrize("q", [(0.5,) * 6, (0.9, 0.7, 0.7, 0.2, 0.0, 0.0), (1.0, 0.0, 0.3, 0.3, 1.0, 0.6)])
def test_expected_objective_matches_enumeration(cfg, q):
    assert expected_objective(CacheVector(q), cfg) == pytest.approx(enumerated_objective(np.array(q), cfg), rel=1e-12)


def test_final_point_near_enumerated_optimum(cfg):
    state = run_cache_optimization(cfg, 2000, np.random.default_rng(1))
    final = enumerated_objective(np.array(state.q.q), cfg)
    start = enumerated_objective(np.full(6, 0.5), cfg)
    assert final < start
    # optimum from exhaustive profile enumeration is near (0.675, 0.675, 0.523, 0, 0, 0)
    opt = enumerated_objective(np.array([0.675, 0.675, 0.5228, 0, 0, 0]), cfg)
    assert final <= opt * 1.01
