import math

import numpy as np
import pytest

from coopcache.cache import CacheVector, Urp
from coopcache.oracles import (
    MdpConvergenceError,
    MdpGrid,
    format_report,
    mc_effective_gain_check,
    service_rate_identity_check,
    surrogate_error_scan,
    tiny_mdp_average_cost,
    underflow_trend,
    zf_projection_gains,
)
from coopcache.queue import stage_cost


def test_projection_gains_are_zero_forcing():
    rng = np.random.default_rng(0)
    rows = (rng.standard_normal((500, 2, 4)) + 1j * rng.standard_normal((500, 2, 4))) / math.sqrt(2)
    gains, leak, norm_err = zf_projection_gains(rows)
    assert leak < 1e-10 and norm_err < 1e-12
    inv = np.linalg.inv(rows @ np.conj(rows.transpose(0, 2, 1)))
    assert np.allclose(gains, 1.0 / np.real(np.diagonal(inv, axis1=1, axis2=2)), rtol=1e-9)


def test_gain_check_full_cache():
    rep = mc_effective_gain_check(1.0, 20_000, np.random.default_rng(1))
    assert rep.zero_mass == 0.0
    assert rep.tail_mean == pytest.approx(1.0, rel=0.03)
    assert rep.ks_pass


def test_gain_check_half_cache():
    rep = mc_effective_gain_check(0.5, 50_000, np.random.default_rng(2))
    assert rep.zero_mass == pytest.approx(0.25, abs=0.01)
    assert rep.tail_mean == pytest.approx(1.0, rel=0.02)
    assert rep.ks_pass


def test_gain_check_sample_floor():
    with pytest.raises(ValueError):
        mc_effective_gain_check(0.5, 100, np.random.default_rng(0))


def test_mdp_zero_arrival_sandbox(cfg):
    grid = MdpGrid(q_points=100, g_points=8, p_points=8)
    res = tiny_mdp_average_cost(grid, 0.5, cfg, allowed_powers=[0.0])
    assert res.theta == pytest.approx(float(stage_cost(0.0, cfg, 0)), rel=1e-6)


def test_mdp_bounds_bracket(cfg):
    res = tiny_mdp_average_cost(MdpGrid(100, 32, 32), 0.5, cfg.replace(tau=0.01, w_low=4e4))
    assert res.lower <= res.theta <= res.upper
    assert res.upper - res.lower <= 1e-6 * res.theta


def test_mdp_iteration_cap(cfg):
    with pytest.raises(MdpConvergenceError) as err:
        tiny_mdp_average_cost(MdpGrid(100, 16, 16), 0.5, cfg, max_iter=2, evaluate_every=1000)
    assert err.value.span > 0


def test_mdp_grid_doubling_is_stable(cfg):
    fine_cfg = cfg.replace(tau=1e-3)
    coarse = tiny_mdp_average_cost(MdpGrid(200, 32, 32), 0.5, fine_cfg).theta
    fine = tiny_mdp_average_cost(MdpGrid(400, 64, 64), 0.5, fine_cfg).theta
    assert abs(coarse - fine) / fine < 0.02


def test_surrogate_scan_deterministic(cfg):
    ratios = [0.1, 1, 2, 4, 8]
    a = surrogate_error_scan(ratios, 0.0, cfg)
    assert a == surrogate_error_scan(ratios, 0.0, cfg)
    assert all(g >= 0 for g in a)
    assert all(x > y for x, y in zip(a[1:], a[2:]))


def test_service_rate_full_cache(cfg):
    rep = service_rate_identity_check(cfg, CacheVector.uniform(1.0, 6), Urp((0, 1, 2, 3)), 100_000, seed=3)
    assert rep.q_min == 1.0
    assert rep.expected == pytest.approx(cfg.mu0 * cfg.tau)
    assert rep.gap < 0.03 and rep.error_a < 0.03 and rep.error_b < 0.03
    a, b, e = rep.per_second()
    assert e == pytest.approx(cfg.mu0)


def test_underflow_trend_shape(cfg):
    out = underflow_trend(cfg, CacheVector.uniform(0.5, 6), [1e6, 1e7], 40_000, seed=2, pi=Urp((0, 0, 0, 0)))
    assert len(out) == 2 and all(0 <= v <= 1 for v in out)


def test_format_report():
    line = format_report("gain", {"q_min": 0.5, "n": 3, "ks": 1 / 3})
    assert line == "gain q_min=0.5 n=3 ks=0.333333333333"
