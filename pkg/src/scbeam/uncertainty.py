"""Stochastic CSI models and their samplers.

Every model is Gaussian per user block: ``h_k ~ CN(mean_k, cov_k)`` with
independent users. ``CN(m, C)`` is circularly symmetric: real and imaginary
parts are independent Gaussians with covariance ``C/2`` each.

All Monte Carlo randomness in the package flows through :class:`Stream`,
a (seed, key path) pair mapped onto numpy's ``SeedSequence`` spawn tree, so
parallel replications draw from disjoint, reproducible substreams.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

import numpy as np

from .model import DimensionError, NetworkConfig

PSD_TOL = 1e-10
HERM_TOL = 1e-12


class CovarianceError(ValueError):
    """Covariance matrix is not Hermitian positive semidefinite."""


def _key_int(k) -> int:
    if isinstance(k, (int, np.integer)):
        if k < 0:
            raise ValueError("stream keys must be nonnegative")
        return int(k)
    return zlib.crc32(str(k).encode())


@dataclass(frozen=True)
class Stream:
    """Named substream of a base seed, e.g. ``Stream(7, ("rep", 3, "saa"))``."""

    seed: int
    key: tuple = ()

    def child(self, *keys) -> "Stream":
        return Stream(self.seed, self.key + tuple(keys))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=tuple(_key_int(k) for k in self.key))
        return np.random.Generator(np.random.PCG64(ss))


def rng_stream(seed: int, *keys) -> Stream:
    return Stream(int(seed), tuple(keys))


RngLike = Union[Stream, np.random.Generator]


def _as_generator(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, Stream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected Stream or numpy Generator, got {type(rng).__name__}")


def _psd_eig(C, name):
    C = np.asarray(C, dtype=complex)
    scale = max(1.0, float(np.max(np.abs(C))) if C.size else 1.0)
    if np.max(np.abs(C - C.conj().T), initial=0.0) > HERM_TOL * scale:
        raise CovarianceError(f"{name} is not Hermitian")
    w, U = np.linalg.eigh(0.5 * (C + C.conj().T))
    if w.size and w.min() < -PSD_TOL * max(1.0, w.max()):
        raise CovarianceError(f"{name} has eigenvalue {w.min():.3e} < 0")
    return np.clip(w, 0.0, None), U


def psd_factor(C: np.ndarray, name: str = "covariance") -> np.ndarray:
    """Return ``F`` with ``F F^H = C`` for a Hermitian PSD matrix ``C``.

    Uses an eigendecomposition so that exactly-zero and rank-deficient
    covariances factor without jitter.
    """
    w, U = _psd_eig(C, name)
    return U * np.sqrt(w)


def psd_sqrt(R: np.ndarray, name: str = "R") -> np.ndarray:
    """Hermitian PSD square root."""
    w, U = _psd_eig(R, name)
    return (U * np.sqrt(w)) @ U.conj().T


def _expand_links(x: np.ndarray, antennas) -> np.ndarray:
    """Repeat a per-link (K, L) table along each RAU's antennas -> (K, N)."""
    return np.repeat(np.asarray(x), antennas, axis=1)


def _check_tau(tau, name="tau"):
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0) or np.any(tau > 1) or not np.all(np.isfinite(tau)):
        raise ValueError(f"{name} entries must lie in [0, 1]")
    return tau


class _GaussianModel:
    """Shared sampling machinery; subclasses provide ``distribution``."""

    kind = "gaussian"

    def distribution(self) -> tuple[np.ndarray, np.ndarray]:  # pragma: no cover
        raise NotImplementedError

    @cached_property
    def _moments(self):
        mean, cov = self.distribution()
        factors = np.stack([psd_factor(c, f"covariance of user {k}") for k, c in enumerate(cov)])
        return mean, cov, factors

    @property
    def K(self) -> int:
        return self._moments[0].shape[0]

    @property
    def N(self) -> int:
        return self._moments[0].shape[1]

    def check(self, cfg: NetworkConfig):
        if (self.K, self.N) != (cfg.K, cfg.N):
            raise DimensionError(
                f"{self.kind} model is {self.K} users x {self.N} antennas, "
                f"config is {cfg.K} x {cfg.N}")


@dataclass(frozen=True, eq=False)
class AdditiveErrorModel(_GaussianModel):
    """``h_k = h_hat_k + e_k`` with ``e_k ~ CN(0, Theta_k)``."""

    h_hat: np.ndarray  # (K, N)
    Theta: np.ndarray  # (K, N, N)
    kind = "additive"

    def __post_init__(self):
        object.__setattr__(self, "h_hat", np.asarray(self.h_hat, dtype=complex))
        object.__setattr__(self, "Theta", np.asarray(self.Theta, dtype=complex))
        K, N = self.h_hat.shape
        if self.Theta.shape != (K, N, N):
            raise DimensionError(f"Theta has shape {self.Theta.shape}, expected {(K, N, N)}")
        self._moments  # validates PSD eagerly

    @classmethod
    def atom(cls, h) -> "AdditiveErrorModel":
        """Degenerate model that always returns ``h``."""
        h = np.atleast_2d(np.asarray(h, dtype=complex))
        K, N = h.shape
        return cls(h, np.zeros((K, N, N), dtype=complex))

    def distribution(self):
        return self.h_hat.copy(), self.Theta.copy()


def _blocks_from_links(per_link, antennas, K):
    """Assemble per-user block-diagonal matrices from a [k][l] nested list."""
    N = sum(antennas)
    out = np.zeros((K, N, N), dtype=complex)
    for k in range(K):
        start = 0
        for l, n in enumerate(antennas):
            out[k, start:start + n, start:start + n] = per_link[k][l]
            start += n
    return out


@dataclass(frozen=True, eq=False)
class GaussMarkovModel(_GaussianModel):
    """``h_kl = R_kl^{1/2} (sqrt(1 - tau_kl) c_hat_kl + tau_kl e_kl)``.

    ``R`` is indexed ``R[k][l]`` with shape ``(N_l, N_l)``; ``c_hat`` is the
    stacked ``(K, N)`` estimate; ``tau`` is ``(K, L)``.
    """

    antennas: tuple
    R: tuple
    c_hat: np.ndarray
    tau: np.ndarray
    kind = "gauss_markov"

    def __post_init__(self):
        object.__setattr__(self, "antennas", tuple(int(n) for n in self.antennas))
        object.__setattr__(self, "c_hat", np.asarray(self.c_hat, dtype=complex))
        object.__setattr__(self, "tau", _check_tau(self.tau))
        K, L = self.tau.shape
        if L != len(self.antennas) or self.c_hat.shape != (K, sum(self.antennas)):
            raise DimensionError("GaussMarkovModel: tau/c_hat shapes disagree with antennas")
        R = tuple(tuple(np.asarray(self.R[k][l], dtype=complex) for l in range(L)) for k in range(K))
        for k in range(K):
            for l, n in enumerate(self.antennas):
                if R[k][l].shape != (n, n):
                    raise DimensionError(f"R[{k}][{l}] has shape {R[k][l].shape}, expected {(n, n)}")
                psd_factor(R[k][l], f"R[{k}][{l}]")
        object.__setattr__(self, "R", R)
        self._moments

    def distribution(self):
        K, L = self.tau.shape
        roots = [[psd_sqrt(self.R[k][l]) for l in range(L)] for k in range(K)]
        Rhalf = _blocks_from_links(roots, self.antennas, K)
        tau_n = _expand_links(self.tau, self.antennas)
        mean = np.einsum("kij,kj->ki", Rhalf, np.sqrt(1.0 - tau_n) * self.c_hat)
        cov = _blocks_from_links(
            [[self.tau[k, l] ** 2 * self.R[k][l] for l in range(L)] for k in range(K)],
            self.antennas, K)
        return mean, cov


@dataclass(frozen=True, eq=False)
class PartialCsiModel(_GaussianModel):
    """Gauss-Markov model where only links in ``omega[k]`` are estimated.

    Unestimated links carry ``tau = 1`` so they reduce to ``CN(0, R_kl)``.
    """

    base: GaussMarkovModel
    omega: tuple
    kind = "partial_csi"

    def __post_init__(self):
        omega = tuple(frozenset(int(l) for l in o) for o in self.omega)
        object.__setattr__(self, "omega", omega)
        K, L = self.base.tau.shape
        if len(omega) != K:
            raise DimensionError(f"omega has {len(omega)} entries, expected {K}")
        for k in range(K):
            for l in range(L):
                if l not in omega[k] and self.base.tau[k, l] != 1.0:
                    raise ValueError(f"tau[{k},{l}] must be 1 for an unestimated link")
        self._moments

    @classmethod
    def build(cls, antennas, R, c_hat, tau, omega) -> "PartialCsiModel":
        """Overwrite ``tau`` with 1 outside ``omega`` and wrap a Gauss-Markov model."""
        tau = np.array(tau, dtype=float)
        for k, links in enumerate(omega):
            mask = np.ones(tau.shape[1], dtype=bool)
            mask[list(links)] = False
            tau[k, mask] = 1.0
        return cls(GaussMarkovModel(antennas, R, c_hat, tau), omega)

    def distribution(self):
        return self.base.distribution()


@dataclass(frozen=True, eq=False)
class SimChannelModel(_GaussianModel):
    """``h_kl = sqrt(1 - tau^2) D_kl c_hat_kl + tau D_kl e_kl``.

    Note the ``tau**2`` under the root, unlike :class:`GaussMarkovModel`.
    ``D`` and ``tau`` are ``(K, L)``; ``c_hat`` is ``(K, N)``.
    """

    antennas: tuple
    D: np.ndarray
    c_hat: np.ndarray
    tau: np.ndarray
    omega: tuple = field(default=None)
    kind = "sim"

    def __post_init__(self):
        object.__setattr__(self, "antennas", tuple(int(n) for n in self.antennas))
        object.__setattr__(self, "D", np.asarray(self.D, dtype=float))
        object.__setattr__(self, "c_hat", np.asarray(self.c_hat, dtype=complex))
        object.__setattr__(self, "tau", _check_tau(self.tau))
        K, L = self.D.shape
        if np.any(self.D < 0):
            raise ValueError("large-scale coefficients D must be nonnegative")
        if self.tau.shape != (K, L) or L != len(self.antennas):
            raise DimensionError("SimChannelModel: D/tau shapes disagree with antennas")
        if self.c_hat.shape != (K, sum(self.antennas)):
            raise DimensionError(f"c_hat has shape {self.c_hat.shape}, expected {(K, sum(self.antennas))}")
        self._moments

    def distribution(self):
        Dn = _expand_links(self.D, self.antennas)
        tn = _expand_links(self.tau, self.antennas)
        mean = np.sqrt(1.0 - tn ** 2) * Dn * self.c_hat
        cov = np.stack([np.diag((t * d) ** 2).astype(complex) for t, d in zip(tn, Dn)])
        return mean, cov


UncertaintyModel = Union[AdditiveErrorModel, GaussMarkovModel, PartialCsiModel, SimChannelModel]


@dataclass(frozen=True, eq=False)
class SampleSet:
    """``M`` i.i.d. channel draws, ``h[m]`` of shape ``(K, N)``."""

    h: np.ndarray  # (M, K, N)
    model_id: str = ""
    seed: int | None = None
    key: tuple = ()

    def __post_init__(self):
        if self.h.ndim != 3 or self.h.shape[0] < 1:
            raise DimensionError(f"sample array has shape {self.h.shape}, expected (M>=1, K, N)")

    @property
    def M(self) -> int:
        return self.h.shape[0]

    def __len__(self):
        return self.M

    def __getitem__(self, m) -> np.ndarray:
        return self.h[m].reshape(-1)


def reconstruct_distribution(model) -> list[tuple[np.ndarray, np.ndarray]]:
    """Closed-form per-user ``(mean, covariance)`` of a Gaussian model."""
    mean, cov, _ = model._moments
    return [(mean[k].copy(), cov[k].copy()) for k in range(mean.shape[0])]


def draw_batch(model, M: int, rng: RngLike) -> SampleSet:
    if M < 1:
        raise ValueError("sample count M must be >= 1")
    mean, _, F = model._moments
    gen = _as_generator(rng)
    K, N = mean.shape
    w = gen.standard_normal((M, K, N, 2))
    w = (w[..., 0] + 1j * w[..., 1]) * np.sqrt(0.5)
    h = mean[None] + np.einsum("kij,mkj->mki", F, w)
    seed, key = (rng.seed, rng.key) if isinstance(rng, Stream) else (None, ())
    return SampleSet(h, model_id=model.kind, seed=seed, key=key)


def draw(model, rng: RngLike) -> np.ndarray:
    """One channel draw as a stacked ``(N*K,)`` vector."""
    return draw_batch(model, 1, rng)[0]
