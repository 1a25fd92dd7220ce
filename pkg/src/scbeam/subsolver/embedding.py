"""Real embedding of complex beamformers and their quadratic forms.

A complex vector ``u`` of length ``n`` maps to ``[Re u; Im u]`` of length
``2n``. With ``a^H u = (a_r.u_r + a_i.u_i) + 1j (a_r.u_i - a_i.u_r)`` the
squared magnitude ``|a^H u|^2`` is the squared norm of two real rows acting
on the embedded vector, which is the factored form every quadratic in the
subproblem is built from.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..model import NetworkConfig


@dataclass(frozen=True)
class Embedding:
    """Index map between ``C^n`` and ``R^{2n}`` (real parts first)."""

    n: int

    @property
    def size(self) -> int:
        return 2 * self.n

    @property
    def re(self) -> np.ndarray:
        return np.arange(self.n)

    @property
    def im(self) -> np.ndarray:
        return np.arange(self.n, 2 * self.n)

    def to_real(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=complex).reshape(-1)
        if u.size != self.n:
            raise ValueError(f"expected {self.n} complex entries, got {u.size}")
        return np.concatenate([u.real, u.imag])

    def to_complex(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float).reshape(-1)
        if y.size != 2 * self.n:
            raise ValueError(f"expected {2 * self.n} real entries, got {y.size}")
        return y[:self.n] + 1j * y[self.n:]

    def block_columns(self, start: int, stop: int) -> np.ndarray:
        """Real columns of the complex entries ``start..stop-1``."""
        idx = np.arange(start, stop)
        return np.concatenate([idx, idx + self.n])


def embed_complex(cfg: NetworkConfig) -> Embedding:
    return Embedding(cfg.dim)


def magnitude_rows(a) -> np.ndarray:
    """Rows ``R`` with ``||R [u_r; u_i]||^2 = |a^H u|^2``.

    ``a`` may carry leading batch axes; the result has shape
    ``a.shape[:-1] + (2, 2n)``.
    """
    a = np.asarray(a, dtype=complex)
    ar, ai = a.real, a.imag
    top = np.concatenate([ar, ai], axis=-1)
    bot = np.concatenate([-ai, ar], axis=-1)
    return np.stack([top, bot], axis=-2)


def real_part_row(a) -> np.ndarray:
    """Row ``g`` with ``g . [u_r; u_i] = Re(a^H u)``."""
    a = np.asarray(a, dtype=complex)
    return np.concatenate([a.real, a.imag], axis=-1)
