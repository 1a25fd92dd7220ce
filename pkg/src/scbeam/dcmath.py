"""DC constraint functions, smoothing, and sample-average estimators.

For a sample ``h`` and beamformer ``v`` the QoS requirement of user ``k`` is
the DC constraint ``d_k = c_k1 - c_k2 <= 0`` with

    c_k1 = sum_{i != k} |h_k^H v_i|^2 + sigma_k^2
    c_k2 = |h_k^H v_k|^2 / gamma_k

The joint violation indicator ``1[max_k d_k > 0]`` is bounded above by
``psi(max_k d_k, nu)``, and per sample

    nu * psi(max_k d_k, nu) = max_j s_j(v, h, nu) - max_j s_j(v, h, 0)

with the ``K + 1`` convex pieces ``s_k = nu + c_k1 + sum_{i != k} c_i2`` and
``s_{K+1} = sum_i c_i2``. Everything below is vectorised over the sample
axis; per-sample quantities are ``(M, ...)`` arrays.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .model import DimensionError, NetworkConfig, as_blocks
from .uncertainty import RngLike, SampleSet, _as_generator, draw_batch

WILSON_Z = float(norm.ppf(0.975))


def _samples(S, cfg: NetworkConfig) -> np.ndarray:
    h = S.h if isinstance(S, SampleSet) else np.asarray(S)
    if h.ndim == 1:
        h = as_blocks(h, cfg, "h")[None]
    elif h.ndim == 2 and h.shape == (cfg.K, cfg.N):
        h = h[None]
    if h.ndim != 3 or h.shape[1:] != (cfg.K, cfg.N):
        raise DimensionError(f"samples have shape {h.shape}, expected (M, {cfg.K}, {cfg.N})")
    return h


def inner_products(v, S, cfg: NetworkConfig) -> np.ndarray:
    """``G[m, k, i] = h_k^{mH} v_i`` for every sample, user and beam."""
    V = as_blocks(v, cfg)
    H = _samples(S, cfg)
    return np.einsum("mkn,in->mki", H.conj(), V)


def _c_terms(v, S, cfg):
    G = inner_products(v, S, cfg)
    A = G.real ** 2 + G.imag ** 2
    sig = np.diagonal(A, axis1=1, axis2=2)  # |h_k^H v_k|^2, (M, K)
    c1 = A.sum(axis=2) - sig + cfg.sigma_sq
    c2 = sig / cfg.gamma
    return G, c1, c2


def d_all(v, S, cfg: NetworkConfig) -> np.ndarray:
    """``d_k(v, h^m)`` for every sample and user, shape ``(M, K)``."""
    _, c1, c2 = _c_terms(v, S, cfg)
    return c1 - c2


def d_k(v, h, k: int, cfg: NetworkConfig) -> float:
    """DC constraint value of user ``k``; ``<= 0`` iff its SINR target is met."""
    if not 0 <= k < cfg.K:
        raise IndexError(f"user index {k} outside [0, {cfg.K})")
    return float(d_all(v, h, cfg)[0, k])


def max_d(v, S, cfg: NetworkConfig) -> np.ndarray:
    return d_all(v, S, cfg).max(axis=1)


def psi(z, nu):
    """Piecewise-linear surrogate of ``1[z > 0]``: 0 below ``-nu``, 1 above 0."""
    if np.any(np.asarray(nu) <= 0):
        raise ValueError("psi needs nu > 0")
    z = np.asarray(z, dtype=float)
    # branches keep the flat parts exact; the ramp is (nu + z) / nu
    ramp = (nu + np.clip(z, -nu, 0.0)) / nu
    out = np.where(z >= 0, 1.0, np.where(z <= -nu, 0.0, ramp))
    return float(out) if out.ndim == 0 else out


def pieces(v, S, nu: float, cfg: NetworkConfig) -> np.ndarray:
    """The ``K + 1`` convex pieces ``s_j(v, h^m, nu)``, shape ``(M, K + 1)``.

    ``nu = 0`` runs through the same expression, which keeps ``u(v, 0)``
    and ``u(v, nu)`` consistent.
    """
    _, c1, c2 = _c_terms(v, S, cfg)
    total2 = c2.sum(axis=1, keepdims=True)
    s = np.empty((c1.shape[0], cfg.K + 1))
    s[:, :cfg.K] = nu + c1 + (total2 - c2)
    s[:, cfg.K] = total2[:, 0]
    return s


@dataclass(frozen=True)
class DcEvaluation:
    d: np.ndarray  # (K,)
    c1: np.ndarray  # c_{k,1}
    c2: np.ndarray  # c_{k,2}
    s: np.ndarray  # (K + 1,) pieces at the requested nu
    C1: float
    C2: float
    nu: float

    @property
    def max_piece(self) -> float:
        return float(self.s.max())


def dc_pieces(v, h, nu: float, cfg: NetworkConfig) -> DcEvaluation:
    if nu < 0:
        raise ValueError("nu must be >= 0")
    _, c1, c2 = _c_terms(v, h, cfg)
    c1, c2 = c1[0], c2[0]
    C2 = c2.sum()
    C1 = np.max(c1 + (C2 - c2))
    s = np.append(nu + c1 + (C2 - c2), C2)
    return DcEvaluation(d=c1 - c2, c1=c1, c2=c2, s=s, C1=float(C1), C2=float(C2), nu=float(nu))


def u_saa(v, nu: float, S, cfg: NetworkConfig) -> float:
    """Sample average of ``max_j s_j(v, h^m, nu)``."""
    if nu < 0:
        raise ValueError("nu must be >= 0")
    return float(pieces(v, S, nu, cfg).max(axis=1).mean())


def fhat_saa(v, nu: float, S, cfg: NetworkConfig) -> float:
    """DC estimate of the violation probability, ``(u(v, nu) - u(v, 0)) / nu``.

    Evaluated as the sample mean of ``psi(max_k d_k, nu)``, which equals the
    difference quotient but avoids its cancellation for small ``nu``; the
    result is then exactly bounded below by the empirical violation fraction.
    """
    if nu <= 0:
        raise ValueError("fhat_saa needs nu > 0")
    return float(np.mean(psi(max_d(v, S, cfg), nu)))


def dc_constraint_saa(v, kappa: float, eps: float, S, cfg: NetworkConfig) -> float:
    """``u(v, kappa) - kappa*eps - u(v, 0)``; nonpositive on the feasible set."""
    s0 = pieces(v, S, 0.0, cfg)
    m_k = np.maximum(s0[:, :cfg.K].max(axis=1) + kappa, s0[:, cfg.K])
    return float((m_k - s0.max(axis=1)).mean() - kappa * eps)


def grad_u_saa(v, S, cfg: NetworkConfig, *, return_value=False):
    """Sample-average gradient of ``u(v, 0)`` with respect to ``conj(v)``.

    Each sample contributes the gradient of its maximising piece (lowest index
    on ties). Returns the stacked ``(N*K,)`` complex vector; the gradient on
    the real embedding ``[Re v; Im v]`` is ``2 * [Re g; Im g]``.
    """
    H = _samples(S, cfg)
    M, K = H.shape[0], cfg.K
    G, c1, c2 = _c_terms(v, H, cfg)
    total2 = c2.sum(axis=1, keepdims=True)
    s = np.concatenate([c1 + (total2 - c2), total2], axis=1)
    win = s.argmax(axis=1)  # first maximiser

    # coefficient of h_i h_i^H v_i / gamma_i in block i: every piece except the
    # winner's own block (winner K+1 keeps all blocks)
    own = np.ones((M, K))
    own[np.arange(M)[win < K], win[win < K]] = 0.0
    diag_G = np.diagonal(G, axis1=1, axis2=2)  # h_i^H v_i, (M, K)
    grad = np.einsum("mi,min->in", own * diag_G / cfg.gamma, H)

    # interference part: winner k <= K contributes h_k (h_k^H v_i) to block i != k
    rows = np.flatnonzero(win < K)
    if rows.size:
        kw = win[rows]
        coef = G[rows, kw, :].copy()  # h_k^H v_i for the winning k, (R, K)
        coef[np.arange(rows.size), kw] = 0.0
        grad += np.einsum("ri,rn->in", coef, H[rows, kw, :])
    grad = (grad / M).reshape(-1)
    if return_value:
        return grad, float(s.max(axis=1).mean())
    return grad


def saa_nu_derivative(v, nu: float, S, cfg: NetworkConfig) -> float:
    """Fraction of samples with ``max_k d_k > -nu``: the right derivative of
    the sample-average ``u(v, .)`` at ``nu``."""
    if nu < 0:
        raise ValueError("nu must be >= 0")
    return float(np.mean(max_d(v, S, cfg) > -nu))


def wilson_halfwidth(p_hat: float, n: int, z: float = WILSON_Z) -> float:
    denom = 1.0 + z * z / n
    return float(z / denom * np.sqrt(p_hat * (1 - p_hat) / n + z * z / (4 * n * n)))


def violation_fraction(v, S, cfg: NetworkConfig) -> float:
    return float(np.mean(max_d(v, S, cfg) > 0))


def violation_prob_mc(v, model, n: int, rng: RngLike, cfg: NetworkConfig,
                      chunk: int = 50_000) -> tuple[float, float]:
    """Monte Carlo estimate of ``Pr{max_k d_k > 0}`` with a 95% Wilson half-width.

    Draws are generated in chunks from one generator, so the estimate depends
    only on ``(rng, n, chunk)``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    gen = _as_generator(rng)
    hits = 0
    done = 0
    while done < n:
        m = min(chunk, n - done)
        S = draw_batch(model, m, gen)
        hits += int(np.count_nonzero(max_d(v, S, cfg) > 0))
        done += m
    p = hits / n
    return p, wilson_halfwidth(p, n)
