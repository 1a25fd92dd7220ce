"""Deterministic network model: dimensions, SINR, power accounting.

Layout convention shared by every module: a beamformer (or channel draw) is
a complex vector of length ``N*K`` stored user-major, ``v = [v_1; ...; v_K]``,
and each per-user block ``v_k`` is RAU-major, ``v_k = [v_1k; ...; v_Lk]``.
User and RAU indices are 0-based.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DimensionError(ValueError):
    """Array shapes disagree with the network configuration."""


class ConfigError(ValueError):
    """A configuration value violates its invariant."""


@dataclass(frozen=True)
class NetworkConfig:
    """Dimensions and link budgets of a cooperative downlink.

    Powers are linear milliwatts, SINR targets are linear ratios.
    """

    antennas: tuple[int, ...]  # N_l, one entry per RAU
    sigma_sq: np.ndarray  # (K,) noise powers
    P: np.ndarray  # (L,) per-RAU power budgets
    gamma: np.ndarray  # (K,) SINR targets
    rau_index: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "antennas", tuple(int(n) for n in self.antennas))
        for name in ("sigma_sq", "P", "gamma"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float)).copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        problems = self.violations()
        if problems:
            raise ConfigError("; ".join(problems))
        idx = np.repeat(np.arange(self.L), self.antennas)
        idx.setflags(write=False)
        object.__setattr__(self, "rau_index", idx)

    @classmethod
    def uniform(cls, L, K, n_antennas=1, sigma_sq=1.0, P=1e3, gamma=1.0):
        """Configuration with identical parameters on every RAU and user."""
        return cls(
            antennas=(n_antennas,) * L,
            sigma_sq=np.full(K, sigma_sq, dtype=float),
            P=np.full(L, P, dtype=float),
            gamma=np.full(K, gamma, dtype=float),
        )

    def violations(self) -> list[str]:
        out = []
        if len(self.antennas) < 1:
            out.append("antennas: need at least one RAU")
        if any(n < 1 for n in self.antennas):
            out.append(f"antennas={self.antennas}: every RAU needs >= 1 antenna")
        if self.P.shape != (len(self.antennas),):
            out.append(f"P: expected {len(self.antennas)} entries, got {self.P.size}")
        K = self.gamma.size
        if K < 1:
            out.append("gamma: need at least one user")
        if self.sigma_sq.shape != (K,):
            out.append(f"sigma_sq: expected {K} entries, got {self.sigma_sq.size}")
        for name in ("sigma_sq", "P", "gamma"):
            arr = getattr(self, name)
            if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
                out.append(f"{name}={arr.tolist()}: entries must be finite and > 0")
        return out

    @property
    def L(self) -> int:
        return len(self.antennas)

    @property
    def K(self) -> int:
        return self.gamma.size

    @property
    def N(self) -> int:
        return sum(self.antennas)

    @property
    def dim(self) -> int:
        """Length of the stacked complex beamformer, ``N*K``."""
        return self.N * self.K

    def rau_slice(self, l: int) -> slice:
        """Antenna positions of RAU ``l`` inside a per-user block."""
        start = sum(self.antennas[:l])
        return slice(start, start + self.antennas[l])


def as_blocks(x, cfg: NetworkConfig, name="v") -> np.ndarray:
    """View a stacked ``N*K`` vector as ``(K, N)`` per-user blocks."""
    x = np.asarray(x)
    if x.shape == (cfg.K, cfg.N):
        return x
    if x.shape != (cfg.dim,):
        raise DimensionError(f"{name} has shape {x.shape}, expected ({cfg.dim},) "
                             f"or ({cfg.K}, {cfg.N})")
    if not np.all(np.isfinite(x)):
        raise DimensionError(f"{name} has non-finite entries")
    return x.reshape(cfg.K, cfg.N)


def _check_user(k, cfg):
    if not 0 <= k < cfg.K:
        raise IndexError(f"user index {k} outside [0, {cfg.K})")


def sinr(v, h, k: int, cfg: NetworkConfig) -> float:
    """SINR of user ``k`` under beamformer ``v`` and channel draw ``h``."""
    _check_user(k, cfg)
    V = as_blocks(v, cfg)
    H = as_blocks(h, cfg, "h")
    g = np.abs(V @ H[k].conj()) ** 2  # |h_k^H v_i|^2 for every i
    interference = g.sum() - g[k]
    return float(g[k] / (interference + cfg.sigma_sq[k]))


def total_power(v) -> float:
    v = np.asarray(v)
    return float(np.vdot(v, v).real)


def per_rau_power(v, l: int, cfg: NetworkConfig) -> float:
    """Transmit power of RAU ``l`` summed over all users."""
    if not 0 <= l < cfg.L:
        raise IndexError(f"RAU index {l} outside [0, {cfg.L})")
    blk = as_blocks(v, cfg)[:, cfg.rau_slice(l)]
    return float(np.sum(blk.real ** 2 + blk.imag ** 2))


def rau_powers(v, cfg: NetworkConfig) -> np.ndarray:
    V = as_blocks(v, cfg)
    p = (V.real ** 2 + V.imag ** 2).sum(axis=0)
    return np.bincount(cfg.rau_index, weights=p, minlength=cfg.L)


def in_feasible_set(v, cfg: NetworkConfig, tol: float = 0.0) -> bool:
    return bool(np.all(rau_powers(v, cfg) <= cfg.P + tol))


def dbm_from_mw(p):
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0):
        raise ValueError("power must be positive to convert to dBm")
    out = 10.0 * np.log10(p)
    return float(out) if out.ndim == 0 else out


def mw_from_dbm(d):
    out = 10.0 ** (np.asarray(d, dtype=float) / 10.0)
    return float(out) if out.ndim == 0 else out


def db_to_linear(x):
    return mw_from_dbm(x)
