"""Bundled benchmark network: 5 single-antenna RAUs, 3 single-antenna users.

The channel data ships as two plain-text tables in ``scbeam/data`` (rows are
RAUs, columns are users). The channel of user ``k`` at RAU ``l`` is

    h_kl = sqrt(1 - tau_kl^2) * H_hat[l, k] + tau_kl * D[l, k] * e_kl

with ``e_kl ~ CN(0, 1)``. Each user knows its two strongest links
(``tau = 0.01``) and only the statistics of the rest (``tau = 1``).

Noise power and power budgets are not part of the data; the defaults
``sigma_sq = 1`` and ``P = 1e3`` mW normalise the noise and leave the budgets
slack. Absolute powers therefore depend on this choice while orderings,
constraint tightness and the smoothing-parameter trend do not.
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np

from .model import NetworkConfig, db_to_linear
from .uncertainty import SimChannelModel

PRESET_NAME = "l5k3"
PRESET_EPS = 0.1
PRESET_M = 1000
PRESET_J = 308
PRESET_GAMMA_DB = 3.0
TAU_KNOWN = 0.01
N_KNOWN = 2


def _table(name: str) -> np.ndarray:
    text = resources.files("scbeam").joinpath("data", name).read_text()
    return np.loadtxt(text.splitlines(), comments="#", ndmin=2)


def preset_tables() -> tuple[np.ndarray, np.ndarray]:
    """``(H_hat, D)`` as stored: shape ``(L, K)``, complex and real."""
    raw = _table(f"{PRESET_NAME}_channel_mean.txt")
    H_hat = raw[:, 0::2] + 1j * raw[:, 1::2]
    D = _table(f"{PRESET_NAME}_large_scale.txt")
    if H_hat.shape != D.shape:
        raise ValueError(f"preset tables disagree: {H_hat.shape} vs {D.shape}")
    return H_hat, D


def strongest_links(D_user_rau: np.ndarray, count: int = N_KNOWN) -> tuple[tuple[int, ...], ...]:
    """Per user, the RAU indices of the ``count`` largest large-scale entries
    (descending)."""
    order = np.argsort(-np.asarray(D_user_rau), axis=1, kind="stable")[:, :count]
    return tuple(tuple(int(i) for i in row) for row in order)


@dataclass(frozen=True)
class Preset:
    cfg: NetworkConfig
    model: SimChannelModel
    eps: float = PRESET_EPS
    M: int = PRESET_M
    J: int = PRESET_J


def load_paper_preset(sigma_sq: float = 1.0, P: float = 1e3, gamma_db: float = PRESET_GAMMA_DB,
                      tau_known: float = TAU_KNOWN, n_known: int = N_KNOWN) -> tuple[NetworkConfig, SimChannelModel]:
    """Network configuration and channel model of the bundled benchmark."""
    H_hat, D_lk = preset_tables()
    L, K = D_lk.shape
    D = D_lk.T  # (K, L)
    c_hat = (H_hat / D_lk).T  # small-scale estimate, (K, N) with N_l = 1
    omega = strongest_links(D, n_known)
    tau = np.ones((K, L))
    for k, links in enumerate(omega):
        tau[k, list(links)] = tau_known
    cfg = NetworkConfig.uniform(L, K, 1, sigma_sq=sigma_sq, P=P, gamma=db_to_linear(gamma_db))
    model = SimChannelModel(antennas=cfg.antennas, D=D, c_hat=c_hat, tau=tau, omega=omega)
    return cfg, model


def preset() -> Preset:
    cfg, model = load_paper_preset()
    return Preset(cfg, model)
