import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scbeam import dcmath
from scbeam.model import NetworkConfig, sinr
from scbeam.uncertainty import AdditiveErrorModel, rng_stream

from conftest import crandn, random_config


def naive_pieces(v, h, nu, cfg):
    """Per-sample pieces from explicit loops over users."""
    V, H = v.reshape(cfg.K, cfg.N), h.reshape(cfg.K, cfg.N)
    q = [[abs(np.vdot(H[k], V[i])) ** 2 for i in range(cfg.K)] for k in range(cfg.K)]
    c1 = [sum(q[k][i] for i in range(cfg.K) if i != k) + cfg.sigma_sq[k] for k in range(cfg.K)]
    c2 = [q[k][k] / cfg.gamma[k] for k in range(cfg.K)]
    s = [nu + c1[k] + sum(c2[i] for i in range(cfg.K) if i != k) for k in range(cfg.K)]
    return np.array(s + [sum(c2)]), np.array(c1), np.array(c2)


def test_d_k_examples(rng):
    cfg = NetworkConfig.uniform(1, 1, sigma_sq=1.0, gamma=1.0)
    assert dcmath.d_k([2.0 + 0j], [1.0 + 0j], 0, cfg) == pytest.approx(-3.0)
    # scale a beam until the SINR equals the target exactly
    cfg = random_config(rng, K=3)
    v, h = crandn(rng, cfg.dim), crandn(rng, cfg.dim)
    V = v.reshape(cfg.K, cfg.N).copy()
    V[1] *= np.sqrt(cfg.gamma[1] / sinr(v, h, 1, cfg))
    assert abs(dcmath.d_k(V.reshape(-1), h, 1, cfg)) < 1e-12 * (1 + cfg.sigma_sq[1])


def test_d_k_sign_matches_sinr(rng):
    for _ in range(200):
        cfg = random_config(rng)
        v, h = crandn(rng, cfg.dim), crandn(rng, cfg.dim)
        for k in range(cfg.K):
            d = dcmath.d_k(v, h, k, cfg)
            assert (d <= 0) == (sinr(v, h, k, cfg) >= cfg.gamma[k]) or abs(d) < 1e-12


def test_psi_examples():
    assert dcmath.psi(0.5, 0.1) == 1.0
    assert dcmath.psi(-0.1, 0.1) == 0.0
    assert dcmath.psi(-0.05, 0.1) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        dcmath.psi(0.0, 0.0)


def test_dc_pieces_zero_beamformer(rng):
    cfg = random_config(rng)
    ev = dcmath.dc_pieces(np.zeros(cfg.dim), crandn(rng, cfg.dim), 0.3, cfg)
    assert np.all(ev.c2 == 0) and ev.C2 == 0
    assert ev.C1 == pytest.approx(cfg.sigma_sq.max())
    assert ev.s[-1] == 0


def test_dc_pieces_single_user(rng):
    cfg = NetworkConfig.uniform(2, 1, gamma=2.0)
    v, h = crandn(rng, 2), crandn(rng, 2)
    ev = dcmath.dc_pieces(v, h, 0.7, cfg)
    assert ev.s[0] == pytest.approx(0.7 + ev.c1[0])
    assert ev.s[1] == pytest.approx(ev.c2[0])
    ev0 = dcmath.dc_pieces(v, h, 0.0, cfg)
    assert ev0.max_piece == pytest.approx(max(ev.c1[0], ev.c2[0]))


def test_dc_pieces_match_loops(rng):
    for _ in range(50):
        cfg = random_config(rng)
        v, h, nu = crandn(rng, cfg.dim), crandn(rng, cfg.dim), rng.uniform(0, 2)
        ev = dcmath.dc_pieces(v, h, nu, cfg)
        s, c1, c2 = naive_pieces(v, h, nu, cfg)
        np.testing.assert_allclose(ev.s, s, rtol=1e-12)
        np.testing.assert_allclose(ev.c1, c1, rtol=1e-12)
        np.testing.assert_allclose(ev.c2, c2, rtol=1e-12, atol=1e-300)
        assert ev.max_piece == pytest.approx(max(nu + ev.C1, ev.C2), rel=1e-12)


def test_u_saa_examples_and_oracle(rng):
    cfg = random_config(rng)
    h = crandn(rng, 1, cfg.K, cfg.N)
    assert dcmath.u_saa(np.zeros(cfg.dim), 0.4, h, cfg) == pytest.approx(0.4 + cfg.sigma_sq.max())
    for _ in range(20):
        cfg = random_config(rng)
        M = int(rng.integers(1, 30))
        H = crandn(rng, M, cfg.K, cfg.N)
        v, nu = crandn(rng, cfg.dim), rng.uniform(0, 1)
        ref = sum(naive_pieces(v, H[m].reshape(-1), nu, cfg)[0].max() for m in range(M)) / M
        assert dcmath.u_saa(v, nu, H, cfg) == pytest.approx(ref, rel=1e-12)
        u0, un = dcmath.u_saa(v, 0.0, H, cfg), dcmath.u_saa(v, nu, H, cfg)
        assert u0 <= un + 1e-12 and un <= u0 + nu + 1e-12


def test_fhat_two_routes(rng):
    for _ in range(50):
        cfg = random_config(rng)
        H = crandn(rng, 40, cfg.K, cfg.N)
        v, nu = crandn(rng, cfg.dim), rng.uniform(0.01, 2)
        f = dcmath.fhat_saa(v, nu, H, cfg)
        via_psi = np.mean(dcmath.psi(dcmath.max_d(v, H, cfg), nu))
        via_u = (dcmath.u_saa(v, nu, H, cfg) - dcmath.u_saa(v, 0.0, H, cfg)) / nu
        assert f == pytest.approx(via_psi, abs=1e-12)
        assert f == pytest.approx(via_u, abs=1e-10)


def test_fhat_extremes():
    cfg = NetworkConfig.uniform(1, 1, sigma_sq=1.0, gamma=1.0)
    H = np.full((5, 1, 1), 1.0 + 0j)
    assert dcmath.fhat_saa([10.0 + 0j], 0.5, H, cfg) == 0.0  # margin 99 > nu
    assert dcmath.fhat_saa([0.1 + 0j], 0.5, H, cfg) == 1.0


def test_grad_zero_and_single_user(rng):
    cfg = random_config(rng)
    H = crandn(rng, 10, cfg.K, cfg.N)
    assert np.all(dcmath.grad_u_saa(np.zeros(cfg.dim), H, cfg) == 0)
    cfg = NetworkConfig.uniform(2, 1, sigma_sq=0.01, gamma=1.5)
    h = crandn(rng, 2)
    v = 10 * h  # strong signal, so the last piece wins
    g = dcmath.grad_u_saa(v, h[None, None, :], cfg)
    np.testing.assert_allclose(g, np.outer(h, h.conj()) @ v / 1.5, rtol=1e-12)


def real_fd_gradient(f, v, step=1e-6):
    x = np.concatenate([v.real, v.imag])
    n = v.size
    out = np.empty(2 * n)
    for j in range(2 * n):
        e = np.zeros(2 * n)
        e[j] = step
        xp, xm = x + e, x - e
        out[j] = (f(xp[:n] + 1j * xp[n:]) - f(xm[:n] + 1j * xm[n:])) / (2 * step)
    return out


def tie_gap(v, H, cfg):
    s = dcmath.pieces(v, H, 0.0, cfg)
    top = np.sort(s, axis=1)
    return float((top[:, -1] - top[:, -2]).min() / max(1.0, np.abs(s).max()))


def test_grad_matches_finite_differences(rng):
    checked = 0
    while checked < 20:
        cfg = random_config(rng, max_ant=2)
        H = crandn(rng, int(rng.integers(1, 20)), cfg.K, cfg.N)
        v = crandn(rng, cfg.dim)
        if tie_gap(v, H, cfg) < 1e-4:
            continue
        g = dcmath.grad_u_saa(v, H, cfg)
        fd = real_fd_gradient(lambda w: dcmath.u_saa(w, 0.0, H, cfg), v)
        emb = 2 * np.concatenate([g.real, g.imag])
        assert np.linalg.norm(emb - fd) <= 1e-5 * max(1.0, np.linalg.norm(fd))
        checked += 1


def test_grad_value_return(rng):
    cfg = random_config(rng)
    H = crandn(rng, 15, cfg.K, cfg.N)
    v = crandn(rng, cfg.dim)
    g, u0 = dcmath.grad_u_saa(v, H, cfg, return_value=True)
    assert u0 == pytest.approx(dcmath.u_saa(v, 0.0, H, cfg), rel=1e-14)
    np.testing.assert_array_equal(g, dcmath.grad_u_saa(v, H, cfg))


def test_nu_derivative(rng):
    cfg = NetworkConfig.uniform(1, 1, sigma_sq=1.0, gamma=1.0)
    H = np.full((4, 1, 1), 1.0 + 0j)
    assert dcmath.saa_nu_derivative([10.0 + 0j], 0.5, H, cfg) == 0.0
    assert dcmath.saa_nu_derivative([10.0 + 0j], 1e6, H, cfg) == 1.0
    for _ in range(50):
        cfg = random_config(rng)
        H = crandn(rng, 30, cfg.K, cfg.N)
        v = crandn(rng, cfg.dim)
        md = dcmath.max_d(v, H, cfg)
        nu = rng.uniform(0.01, 3.0)
        # distance to the nearest breakpoint -max d above nu
        above = -md[-md > nu] - nu
        delta = 0.5 * above.min() if above.size else 1.0
        dq = (dcmath.u_saa(v, nu + delta, H, cfg) - dcmath.u_saa(v, nu, H, cfg)) / delta
        assert dq == pytest.approx(dcmath.saa_nu_derivative(v, nu, H, cfg), abs=1e-8)


def test_violation_prob_mc():
    cfg = NetworkConfig.uniform(1, 2, sigma_sq=1.0, gamma=1.0)
    h = np.array([[1.0], [1.0]], dtype=complex)
    atom = AdditiveErrorModel.atom(h)
    good = np.array([0.0, 0.0], dtype=complex)
    p, hw = dcmath.violation_prob_mc(good, atom, 1000, rng_stream(1), cfg)
    assert p == 1.0  # zero signal never meets a positive target
    p2, _ = dcmath.violation_prob_mc(good, atom, 1000, rng_stream(1), cfg)
    assert p2 == p
    cfg1 = NetworkConfig.uniform(1, 1, sigma_sq=1.0, gamma=1.0)
    p, hw = dcmath.violation_prob_mc([5.0 + 0j], AdditiveErrorModel.atom([[1.0]]), 500, rng_stream(2), cfg1)
    assert p == 0.0 and 0 < hw < 0.01


def test_wilson_halfwidth_near_090():
    assert dcmath.wilson_halfwidth(0.9, 100_000) == pytest.approx(0.00186, abs=2e-5)


@st.composite
def instances(draw):
    seed = draw(st.integers(0, 2 ** 32 - 1))
    rng = np.random.default_rng(seed)
    cfg = random_config(rng)
    M = draw(st.integers(1, 25))
    scale = draw(st.floats(0.05, 5.0))
    return cfg, scale * crandn(rng, cfg.dim), crandn(rng, M, cfg.K, cfg.N)


@given(instances(), st.lists(st.floats(1e-4, 10.0), min_size=2, max_size=6))
@settings(max_examples=150, deadline=None)
def test_fhat_monotone_bounded_conservative(inst, nus):
    cfg, v, H = inst
    vals = [dcmath.fhat_saa(v, nu, H, cfg) for nu in sorted(nus)]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
    viol = dcmath.violation_fraction(v, H, cfg)
    assert all(0.0 <= f <= 1.0 and f >= viol for f in vals)


@given(instances(), st.floats(0.0, 5.0))
@settings(max_examples=150, deadline=None)
def test_split_identity_per_sample(inst, nu):
    cfg, v, H = inst
    for m in range(H.shape[0]):
        ev = dcmath.dc_pieces(v, H[m], nu, cfg)
        scale = max(1.0, ev.C1, ev.C2)
        assert abs(ev.d.max() - (ev.C1 - ev.C2)) <= 1e-12 * scale
        if nu > 0:
            lhs = nu * dcmath.psi(ev.d.max(), nu)
            rhs = ev.max_piece - dcmath.dc_pieces(v, H[m], 0.0, cfg).max_piece
            assert abs(lhs - rhs) <= 1e-12 * scale
