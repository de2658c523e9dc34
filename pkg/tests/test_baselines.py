import math

import numpy as np
import pytest

from coopcache.baselines import (
    baseline1_power,
    baseline2_power,
    baseline3_df_step,
    baseline3_gains_batch,
    baseline3_power,
    baseline3_power_search,
    baseline_level,
    kappa_for_power_bl1,
    relay_channel,
)
from coopcache.channel import sample_channel
from coopcache.config import BaselineConfig

LN2 = math.log(2.0)


def grid_argmax(objective, hi, n=200_001):
    p = np.linspace(0.0, hi, n)
    return p[np.argmax(objective(p))], hi / (n - 1)


@pytest.mark.parametrize("g", [0.05, 0.7, 3.0])
def test_baseline1_matches_grid(cfg, g):
    bl = BaselineConfig(kappa=1e5)
    p_star = baseline1_power(g, cfg, bl)
    p_grid, step = grid_argmax(lambda p: cfg.bw * np.log2(1 + g * p) - bl.kappa * p, 50.0)
    assert abs(p_star - p_grid) <= step


@pytest.mark.parametrize("qk", [0.0, 4e10, 7.9e10])
def test_baseline2_matches_grid(cfg, qk):
    bl = BaselineConfig(kappa=4e9)
    g = 1.3
    weight = cfg.w_high - qk
    p_star = baseline2_power(g, qk, cfg, bl)
    p_grid, step = grid_argmax(lambda p: weight * cfg.bw * np.log2(1 + g * p) - bl.kappa * p, 200.0)
    assert abs(p_star - p_grid) <= step


@pytest.mark.parametrize("g,qk", [(0.4, 1e10), (2.0, 5e10), (9.0, 0.0)])
def test_baseline3_golden_section_agrees(cfg, g, qk):
    bl = BaselineConfig(kappa=2e9)
    exact = baseline3_power(g, qk, cfg, bl)
    found = baseline3_power_search(g, qk, cfg, bl, rtol=1e-6)
    assert found == pytest.approx(exact, rel=1e-4, abs=1e-6)


def test_zero_power_cases(cfg):
    bl = BaselineConfig(kappa=1e5)
    assert baseline2_power(2.0, cfg.w_high, cfg, bl) == 0.0
    assert baseline2_power(2.0, 2 * cfg.w_high, cfg, bl) == 0.0
    assert baseline3_power(0.0, 0.0, cfg, bl) == 0.0
    assert baseline1_power(0.0, cfg, bl) == 0.0
    assert baseline3_power_search(2.0, cfg.w_high, cfg, bl) == 0.0


def test_weighted_levels_decrease_with_queue(cfg):
    bl = BaselineConfig(kappa=4e9)
    qs = np.linspace(0, cfg.w_high, 50)
    for policy in ("baseline2", "baseline3"):
        lv = baseline_level(policy, qs, cfg, bl)
        assert np.all(np.diff(lv) < 0)
    assert np.allclose(baseline_level("baseline3", qs, cfg, bl), 0.5 * baseline_level("baseline2", qs, cfg, bl))
    assert baseline_level("baseline1", 3.0, cfg, bl) == pytest.approx(cfg.bw / (bl.kappa * LN2))
    with pytest.raises(ValueError):
        baseline_level("proposed", 0.0, cfg, bl)


def test_vectorized_matches_scalar(cfg):
    bl = BaselineConfig(kappa=3e9)
    g = np.array([0.1, 1.0, 0.0, 5.0])
    qk = np.array([0.0, 1e10, 2e10, 9e10])
    vec = baseline2_power(g, qk, cfg, bl)
    assert vec == pytest.approx([baseline2_power(a, b, cfg, bl) for a, b in zip(g, qk)])


def test_relay_channel_scaling():
    bl = BaselineConfig(relay_gain_db=20.0)
    h = relay_channel(np.random.default_rng(0), 2, bl, n=20_000)
    assert h.shape == (20_000, 2, 2)
    assert np.mean(np.abs(h) ** 2) == pytest.approx(100.0, rel=0.03)


def test_strong_relay_reduces_to_cooperative_hop(cfg):
    bl = BaselineConfig(relay_gain_db=80.0)
    n = 20_000
    g_df = baseline3_gains_batch(*(np.random.default_rng(s) for s in (1, 2, 3)), n, 2, bl)
    assert g_df.shape == (n, 4)
    assert np.all((g_df > 0).sum(axis=1) == 2)
    # huge relay gain: the bottleneck is the 4x2 cooperative ZF hop, Gamma(3, 1)
    selected = g_df[g_df > 0]
    assert selected.mean() == pytest.approx(3.0, rel=0.03)
    assert selected.var() == pytest.approx(3.0, rel=0.08)


def test_df_step(cfg):
    rng = np.random.default_rng(4)
    bl = BaselineConfig(kappa=2e9)
    h = sample_channel(rng, 2)
    out = baseline3_df_step(h, relay_channel(rng, 2, bl), np.zeros(4), cfg, bl, rng)
    assert len(out.selected) == 2
    idle = [k for k in range(4) if k not in out.selected]
    assert np.all(out.powers[idle] == 0) and np.all(out.rates[idle] == 0)
    g_eff = np.minimum(out.g_relay, out.g_coop)
    assert np.allclose(out.rates, 0.5 * cfg.bw * np.log2(1 + g_eff * out.powers))


def test_kappa_for_power_bl1_monte_carlo(cfg):
    target = 5.0
    kappa = kappa_for_power_bl1(target, cfg)
    bl = BaselineConfig(kappa=kappa)
    g = np.random.default_rng(9).exponential(size=400_000)
    p = 0.5 * baseline1_power(g, cfg, bl).mean()
    assert p == pytest.approx(target, rel=0.01)
    with pytest.raises(ValueError):
        kappa_for_power_bl1(0.0, cfg)


def test_baseline_config_validation():
    with pytest.raises(ValueError):
        BaselineConfig(kappa=0.0)
    with pytest.raises(ValueError):
        BaselineConfig(baseline_id=4)
