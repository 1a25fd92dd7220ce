import numpy as np
import pytest

from scbeam.model import DimensionError, NetworkConfig
from scbeam.uncertainty import (AdditiveErrorModel, CovarianceError, GaussMarkovModel, PartialCsiModel,
                                SimChannelModel, draw, draw_batch, reconstruct_distribution,
                                rng_stream)

from conftest import crandn


def _random_psd(rng, n, rank=None):
    A = crandn(rng, n, rank or n)
    return A @ A.conj().T


def test_zero_covariance_returns_mean(rng):
    h_hat = crandn(rng, 2, 3)
    model = AdditiveErrorModel.atom(h_hat)
    np.testing.assert_array_equal(draw(model, rng_stream(0)), h_hat.reshape(-1))


def test_gauss_markov_perfect_estimate(rng):
    R = [[_random_psd(rng, 2)] for _ in range(2)]
    c_hat = crandn(rng, 2, 2)
    model = GaussMarkovModel((2,), R, c_hat, np.zeros((2, 1)))
    h = draw(model, rng_stream(3)).reshape(2, 2)
    for k in range(2):
        w, U = np.linalg.eigh(R[k][0])
        root = (U * np.sqrt(w)) @ U.conj().T
        np.testing.assert_allclose(h[k], root @ c_hat[k], atol=1e-12)


def test_gauss_markov_moments_unit_correlation():
    K, N, n = 1, 3, 100_000
    model = GaussMarkovModel((N,), [[np.eye(N)]], np.ones((K, N)), np.ones((K, 1)))
    h = draw_batch(model, n, rng_stream(11)).h[:, 0, :]
    assert np.all(np.abs(h.mean(axis=0)) < 4 / np.sqrt(n))
    C = h.T @ h.conj() / n
    np.testing.assert_allclose(C, np.eye(N), atol=0.05)


def _moment_check(model, n=100_000, seed=5):
    S = draw_batch(model, n, rng_stream(seed))
    for k, (mean, cov) in enumerate(reconstruct_distribution(model)):
        x = S.h[:, k, :]
        d = np.diag(cov).real
        se = np.sqrt(np.maximum(d, 1e-300) / n)
        assert np.all(np.abs(x.mean(axis=0) - mean) <= 5 * se + 1e-12)
        xc = x - mean
        emp = xc.T @ xc.conj() / n
        # entrywise standard error of a complex sample covariance
        se_c = np.sqrt(np.outer(d, d) / n)
        assert np.all(np.abs(emp - cov) <= 5 * se_c + 1e-12)
        # circular symmetry: pseudo-covariance vanishes
        assert np.all(np.abs(xc.T @ xc / n) <= 5 * se_c + 1e-12)


def test_sampler_moments_every_model(rng):
    K, ant = 2, (1, 2)
    N = sum(ant)
    Theta = np.stack([_random_psd(rng, N) for _ in range(K)])
    _moment_check(AdditiveErrorModel(crandn(rng, K, N), Theta))
    R = [[_random_psd(rng, n) for n in ant] for _ in range(K)]
    tau = rng.uniform(0.1, 0.9, (K, len(ant)))
    _moment_check(GaussMarkovModel(ant, R, crandn(rng, K, N), tau))
    _moment_check(PartialCsiModel.build(ant, R, crandn(rng, K, N), tau, [{0}, {1}]))
    _moment_check(SimChannelModel(ant, rng.uniform(0.5, 3, (K, 2)), crandn(rng, K, N), tau))


def test_partial_csi_unestimated_link_statistics(rng):
    R = [[_random_psd(rng, 1), _random_psd(rng, 2)]]
    model = PartialCsiModel.build((1, 2), R, crandn(rng, 1, 3), [[0.3, 0.2]], [{0}])
    mean, cov = reconstruct_distribution(model)[0]
    np.testing.assert_allclose(mean[1:], 0.0, atol=1e-14)
    np.testing.assert_allclose(cov[1:, 1:], R[0][1], atol=1e-12)
    with pytest.raises(ValueError):
        PartialCsiModel(GaussMarkovModel((1, 2), R, crandn(rng, 1, 3), [[0.3, 0.2]]), [{0}])


def test_partial_csi_full_omega_equals_gauss_markov(rng):
    R = [[_random_psd(rng, 2), _random_psd(rng, 1)] for _ in range(2)]
    c, tau = crandn(rng, 2, 3), rng.uniform(0, 1, (2, 2))
    a = PartialCsiModel.build((2, 1), R, c, tau, [{0, 1}, {0, 1}])
    b = GaussMarkovModel((2, 1), R, c, tau)
    for (m1, c1), (m2, c2) in zip(reconstruct_distribution(a), reconstruct_distribution(b)):
        np.testing.assert_array_equal(m1, m2)
        np.testing.assert_array_equal(c1, c2)


def test_tau_zero_gives_zero_covariance(rng):
    model = GaussMarkovModel((2,), [[_random_psd(rng, 2)]], crandn(rng, 1, 2), [[0.0]])
    _, cov = reconstruct_distribution(model)[0]
    assert np.all(cov == 0)


def test_sim_model_scalar_link():
    model = SimChannelModel((1,), [[2.0]], [[1.0]], [[0.5]])
    mean, cov = reconstruct_distribution(model)[0]
    assert mean[0] == pytest.approx(np.sqrt(0.75) * 2)
    assert cov[0, 0].real == pytest.approx(1.0)


def test_draw_batch_determinism_and_streams(rng):
    model = AdditiveErrorModel(crandn(rng, 2, 2), np.stack([np.eye(2)] * 2).astype(complex))
    a = draw_batch(model, 50, rng_stream(7, "rep", 1))
    b = draw_batch(model, 50, rng_stream(7, "rep", 1))
    np.testing.assert_array_equal(a.h, b.h)
    c = draw_batch(model, 50, rng_stream(8, "rep", 1))
    assert np.any(a.h != c.h)
    d = draw_batch(model, 50, rng_stream(7, "rep", 2))
    assert np.any(a.h != d.h)
    one = draw_batch(model, 1, rng_stream(9))
    np.testing.assert_array_equal(one[0], draw(model, rng_stream(9)))
    assert a.seed == 7 and a.key == ("rep", 1)


def test_invalid_inputs(rng):
    with pytest.raises(CovarianceError):
        AdditiveErrorModel(np.zeros((1, 2)), np.array([[[1.0, 0.0], [0.0, -1.0]]]))
    with pytest.raises(CovarianceError):
        AdditiveErrorModel(np.zeros((1, 2)), np.array([[[1.0, 1.0], [0.0, 1.0]]]))
    with pytest.raises(ValueError):
        SimChannelModel((1,), [[1.0]], [[1.0]], [[1.5]])
    with pytest.raises(ValueError):
        draw_batch(AdditiveErrorModel.atom(np.ones((1, 1))), 0, rng_stream(0))
    model = AdditiveErrorModel.atom(np.ones((2, 3)))
    with pytest.raises(DimensionError):
        model.check(NetworkConfig.uniform(2, 2))
