import numpy as np
import pytest

from coopcache.channel import (
    ChannelState,
    DegenerateChannelError,
    effective_gains_batch,
    instantaneous_rate,
    sample_channel,
    sample_channel_batch,
    select_and_beamform,
    zf_beamformers,
    zf_gains_batch,
)


def test_sample_channel_is_deterministic():
    a = sample_channel(np.random.default_rng(7), 2).full_matrix
    b = sample_channel(np.random.default_rng(7), 2).full_matrix
    assert a.shape == (4, 4)
    np.testing.assert_array_equal(a, b)


def test_sample_channel_rejects_zero_antennas():
    with pytest.raises(ValueError):
        sample_channel(np.random.default_rng(0), 0)


def test_channel_entry_statistics():
    h = sample_channel_batch(np.random.default_rng(1), 100_000, 4, 4)
    power = np.abs(h) ** 2
    assert power.mean(axis=0) == pytest.approx(np.ones((4, 4)), abs=0.01)
    assert np.var(h.real) == pytest.approx(0.5, abs=0.01)
    assert np.var(h.imag) == pytest.approx(0.5, abs=0.01)


def _check_outcome(h, out):
    rows = h.full_matrix if out.mode == 1 else h.bs_submatrix
    for k, v in out.beamformers.items():
        assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-12)
        for j in out.selected:
            if j != k:
                assert abs(np.vdot(rows[j], v)) <= 1e-9 * np.linalg.norm(rows[j])
        assert out.gains[k] == pytest.approx(abs(np.vdot(rows[k], v)) ** 2)
    unselected = [k for k in range(rows.shape[0]) if k not in out.selected]
    assert np.all(out.gains[unselected] == 0)


def test_mode1_serves_everyone():
    rng = np.random.default_rng(2)
    for _ in range(50):
        h = sample_channel(rng, 2)
        out = select_and_beamform(h, 1, rng)
        assert out.selected == (0, 1, 2, 3)
        _check_outcome(h, out)


def test_mode0_serves_m_users():
    rng = np.random.default_rng(3)
    for _ in range(50):
        h = sample_channel(rng, 3)
        out = select_and_beamform(h, 0, rng)
        assert len(out.selected) == 3
        assert all(v.size == 3 for v in out.beamformers.values())
        _check_outcome(h, out)


def test_single_user_gain_is_channel_norm():
    rng = np.random.default_rng(4)
    h = sample_channel(rng, 1)
    out = select_and_beamform(h, 0, rng)
    (k,) = out.selected
    assert out.gains[k] == pytest.approx(np.linalg.norm(h.bs_submatrix[k]) ** 2)


def test_invalid_state_rejected():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        select_and_beamform(sample_channel(rng, 2), 2, rng)


def test_degenerate_channel_rejected():
    rows = np.array([[1.0, 0.0], [2.0, 0.0]], dtype=complex)
    with pytest.raises(DegenerateChannelError):
        zf_beamformers(rows)
    with pytest.raises(DegenerateChannelError):
        zf_gains_batch(np.array([[[1, 1], [1, 1]]], dtype=complex))


def test_batched_gains_equal_projection_gains():
    rng = np.random.default_rng(5)
    h = sample_channel_batch(rng, 200, 4, 4)
    batch = zf_gains_batch(h)
    for n in range(200):
        v = zf_beamformers(h[n])
        direct = np.abs(np.einsum("kd,dk->k", np.conj(h[n]), v)) ** 2
        np.testing.assert_allclose(batch[n], direct, rtol=1e-10)


def test_selection_frequency_matches_cache_probability():
    rng = np.random.default_rng(6)
    n, q_min = 100_000, 0.5
    s = (rng.random(n) < q_min).astype(np.int8)
    g = effective_gains_batch(rng, np.random.default_rng(60), s, 2)
    freq = np.mean(g > 0, axis=0)
    assert freq == pytest.approx(np.full(4, 0.75), abs=0.01)
    assert np.all(g[s == 1] > 0)
    assert np.all(np.sum(g[s == 0] > 0, axis=1) == 2)


def test_instantaneous_rate_examples():
    assert instantaneous_rate(1.0, 0.0, 1e6) == 0.0
    assert instantaneous_rate(0.0, 5.0, 1e6) == 0.0
    assert instantaneous_rate(1.0, 1.0, 1e6) == pytest.approx(1e6)


def test_channel_state_views():
    h = ChannelState(np.arange(16, dtype=complex).reshape(4, 4))
    assert h.m == 2
    np.testing.assert_array_equal(h.bs_submatrix, h.full_matrix[:, :2])
