import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scbeam.model import (ConfigError, DimensionError, NetworkConfig, dbm_from_mw, in_feasible_set,
                          mw_from_dbm, per_rau_power, rau_powers, sinr, total_power)

from conftest import crandn, random_config


def test_sinr_single_user_no_interference():
    cfg = NetworkConfig.uniform(1, 1, sigma_sq=1.0, gamma=1.0)
    assert sinr([2 + 0j], [1 + 0j], 0, cfg) == pytest.approx(4.0)


def test_sinr_two_users_equal_split():
    cfg = NetworkConfig.uniform(1, 2, sigma_sq=1.0)
    # user 0 sees h = 1; both beams equal 1
    h = np.array([1.0, 0.0], dtype=complex)
    v = np.array([1.0, 1.0], dtype=complex)
    assert sinr(v, h, 0, cfg) == pytest.approx(0.5)


def _sinr_entrywise(v, h, k, cfg):
    V, H = v.reshape(cfg.K, cfg.N), h.reshape(cfg.K, cfg.N)
    num = 0.0
    den = cfg.sigma_sq[k]
    for i in range(cfg.K):
        re = sum(H[k, n].real * V[i, n].real + H[k, n].imag * V[i, n].imag for n in range(cfg.N))
        im = sum(H[k, n].real * V[i, n].imag - H[k, n].imag * V[i, n].real for n in range(cfg.N))
        if i == k:
            num = re * re + im * im
        else:
            den += re * re + im * im
    return num / den


def test_sinr_matches_entrywise_expansion(rng):
    for _ in range(50):
        cfg = random_config(rng)
        v, h = crandn(rng, cfg.dim), crandn(rng, cfg.dim)
        for k in range(cfg.K):
            assert sinr(v, h, k, cfg) == pytest.approx(_sinr_entrywise(v, h, k, cfg), rel=1e-12)


def test_sinr_dimension_errors():
    cfg = NetworkConfig.uniform(2, 2)
    with pytest.raises(DimensionError):
        sinr(np.ones(3), np.ones(4), 0, cfg)
    with pytest.raises(IndexError):
        sinr(np.ones(4), np.ones(4), 2, cfg)


def test_sinr_phase_and_scale_invariance(rng):
    for _ in range(30):
        cfg = random_config(rng)
        v, h = crandn(rng, cfg.dim), crandn(rng, cfg.dim)
        V = v.reshape(cfg.K, cfg.N).copy()
        k0 = int(rng.integers(cfg.K))
        V[k0] *= np.exp(1j * rng.uniform(0, 2 * np.pi))
        c = rng.uniform(0.1, 10.0)
        scaled = NetworkConfig(cfg.antennas, cfg.sigma_sq * c * c, cfg.P, cfg.gamma)
        for k in range(cfg.K):
            base = sinr(v, h, k, cfg)
            assert sinr(V.reshape(-1), h, k, cfg) == pytest.approx(base, rel=1e-10)
            assert sinr(c * v, h, k, scaled) == pytest.approx(base, rel=1e-10)


def test_total_power_examples(rng):
    assert total_power(np.zeros(4, complex)) == 0.0
    assert total_power([3 + 4j]) == pytest.approx(25.0)
    v = crandn(rng, 37)
    assert total_power(v) == pytest.approx(sum(abs(x) ** 2 for x in v[::-1]), rel=1e-12)


def test_per_rau_power():
    cfg = NetworkConfig.uniform(2, 1)
    v = np.array([1.0, 2.0], dtype=complex)
    assert per_rau_power(v, 1, cfg) == pytest.approx(4.0)
    assert per_rau_power(np.zeros(2), 0, cfg) == 0.0
    single = NetworkConfig(antennas=(3,), sigma_sq=[1, 1], P=[1.0], gamma=[1, 1])
    w = np.arange(6) + 1j
    assert per_rau_power(w, 0, single) == pytest.approx(total_power(w))
    with pytest.raises(IndexError):
        per_rau_power(v, 2, cfg)


def test_power_decomposes_over_raus(rng):
    for _ in range(30):
        cfg = random_config(rng)
        v = crandn(rng, cfg.dim)
        parts = [per_rau_power(v, l, cfg) for l in range(cfg.L)]
        assert sum(parts) == pytest.approx(total_power(v), rel=1e-12)
        np.testing.assert_allclose(rau_powers(v, cfg), parts, rtol=1e-12)


def test_in_feasible_set_boundaries():
    cfg = NetworkConfig(antennas=(2,), sigma_sq=[1.0], P=[1.0], gamma=[1.0])
    assert in_feasible_set(np.zeros(2), cfg)
    assert in_feasible_set(np.array([0.6, 0.8]), cfg, tol=0.0)
    tol = 1e-3
    over = np.array([np.sqrt(1 + 2 * tol), 0.0])
    assert not in_feasible_set(over, cfg, tol=tol)


def test_dbm_conversions():
    assert dbm_from_mw(1.0) == pytest.approx(0.0)
    assert dbm_from_mw(100.0) == pytest.approx(20.0)
    with pytest.raises(ValueError):
        dbm_from_mw(0.0)


@given(st.floats(min_value=1e-9, max_value=1e9))
@settings(max_examples=200, deadline=None)
def test_dbm_roundtrip(x):
    assert mw_from_dbm(dbm_from_mw(x)) == pytest.approx(x, rel=1e-12)


def test_config_invariants():
    with pytest.raises(ConfigError):
        NetworkConfig(antennas=(1, 0), sigma_sq=[1.0], P=[1.0, 1.0], gamma=[1.0])
    with pytest.raises(ConfigError):
        NetworkConfig(antennas=(1,), sigma_sq=[0.0], P=[1.0], gamma=[1.0])
    with pytest.raises(ConfigError):
        NetworkConfig(antennas=(1,), sigma_sq=[1.0], P=[1.0, 2.0], gamma=[1.0])
    cfg = NetworkConfig(antennas=(2, 1, 3), sigma_sq=[1, 1], P=[1, 1, 1], gamma=[1, 2])
    assert (cfg.L, cfg.K, cfg.N, cfg.dim) == (3, 2, 6, 12)
