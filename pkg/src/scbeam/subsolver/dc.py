"""Assembly of the convexified DC subproblem around an anchor ``(v_j, kappa_j)``.

Decision vector ``y = [Re v; Im v; kappa; x_1..x_M; t]``. With the convex pieces
``s_k`` of :mod:`scbeam.dcmath` and the sample-average gradient ``g`` of
``u(., 0)`` at ``v_j`` the subproblem is

    minimize    ||v||^2
    subject to  s_k(v, h^m, kappa) <= x_m        k = 1..K+1, m = 1..M
                t - u(v_j, 0) - 2 Re g^H (v - v_j) - kappa*eps <= 0
                t = (1/M) sum_m x_m
                sum_k ||v_lk||^2 <= P_l           every RAU l
                x_m >= 0,  kappa >= kappa_min

Only the first ``K`` pieces carry ``kappa``. All ``K + 1`` pieces are kept per
sample because the pointwise maximum runs over all of them. The average
slack ``t`` only exists to keep the linearized row off the per-sample
columns, which lets the solver eliminate those columns as a diagonal block.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .. import dcmath
from ..model import NetworkConfig, as_blocks
from .embedding import magnitude_rows
from .problem import ConvexSubproblem, QuadGroup

KAPPA_MIN = 1e-8


@dataclass(frozen=True)
class DcLayout:
    cfg_dim: int
    M: int

    @property
    def nv(self) -> int:
        return 2 * self.cfg_dim

    @property
    def kappa(self) -> int:
        return self.nv

    @property
    def x(self) -> slice:
        return slice(self.nv + 1, self.nv + 1 + self.M)

    @property
    def t(self) -> int:
        return self.nv + 1 + self.M

    @property
    def n(self) -> int:
        return self.nv + 2 + self.M

    def v_cols(self, user: int, N: int) -> np.ndarray:
        """Real columns of ``v_user``: real parts then imaginary parts."""
        idx = np.arange(user * N, (user + 1) * N)
        return np.concatenate([idx, idx + self.cfg_dim])

    def unpack(self, y):
        y = np.asarray(y, dtype=float)
        d = self.cfg_dim
        return y[:d] + 1j * y[d:2 * d], float(y[self.kappa]), y[self.x].copy()

    def pack(self, v, kappa, x) -> np.ndarray:
        v = np.asarray(v, dtype=complex).reshape(-1)
        x = np.asarray(x, dtype=float)
        return np.concatenate([v.real, v.imag, [kappa], x, [x.mean()]])


def _piece_groups(H, cfg: NetworkConfig, lay: DcLayout) -> list[QuadGroup]:
    M, K, N = H.shape
    gam = cfg.gamma
    groups = []
    for k in range(K + 1):
        others = [i for i in range(K) if i != k]
        # rows per user block: |h_k^H v_i|^2 (interference at k) and
        # |h_i^H v_i|^2 / gamma_i (the concave part moved across)
        nb = len(others)
        rows_per = 4 if k < K else 2
        r = 2 * N * nb + (2 if k < K else 1)
        F = np.zeros((M, rows_per * nb, r))
        for b, i in enumerate(others):
            sl = slice(2 * N * b, 2 * N * (b + 1))
            own = magnitude_rows(H[:, i, :]) / np.sqrt(gam[i])  # (M, 2, 2N)
            if k < K:
                F[:, 4 * b:4 * b + 2, sl] = magnitude_rows(H[:, k, :])
                F[:, 4 * b + 2:4 * b + 4, sl] = own
            else:
                F[:, 2 * b:2 * b + 2, sl] = own
        vcols = np.concatenate([lay.v_cols(i, N) for i in others]) if others else np.zeros(0, int)
        xcol = lay.nv + 1 + np.arange(M)
        a = np.zeros((M, r))
        a[:, -1] = -1.0
        if k < K:
            cols = np.column_stack([np.tile(vcols, (M, 1)), np.full(M, lay.kappa), xcol])
            a[:, -2] = 1.0
            c = np.full(M, cfg.sigma_sq[k])
        else:
            cols = np.column_stack([np.tile(vcols, (M, 1)), xcol])
            c = np.zeros(M)
        groups.append(QuadGroup(f"piece{k}", F, a, c, cols))
    return groups


def power_groups(cfg: NetworkConfig, nv_offset_imag: int) -> list[QuadGroup]:
    """Per-RAU power budgets ``sum_k ||v_lk||^2 <= P_l``, grouped by antenna count."""
    by_size: dict[int, list[int]] = {}
    for l, nl in enumerate(cfg.antennas):
        by_size.setdefault(nl, []).append(l)
    out = []
    for nl, raus in sorted(by_size.items()):
        cols = []
        for l in raus:
            sl = cfg.rau_slice(l)
            idx = np.concatenate([np.arange(sl.start, sl.stop) + k * cfg.N for k in range(cfg.K)])
            cols.append(np.concatenate([idx, idx + nv_offset_imag]))
        cols = np.array(cols)
        r = cols.shape[1]
        F = np.broadcast_to(np.eye(r), (len(raus), r, r)).copy()
        out.append(QuadGroup(f"power_n{nl}", F, np.zeros((len(raus), r)),
                             -cfg.P[raus], cols))
    return out


def build_subproblem(v_j, kappa_j: float, S, eps: float, cfg: NetworkConfig,
                     settings=None) -> ConvexSubproblem:
    """Convex subproblem anchored at ``(v_j, kappa_j)`` on the sample set ``S``.

    ``settings`` may provide ``kappa_min`` and ``fixed_kappa``; with a fixed
    value, ``kappa`` is pinned by an equality row. ``kappa_j`` does not enter
    the constraints (the surrogate is exact in ``kappa``); it is accepted so
    callers can hand over the full anchor.
    """
    kappa_min = getattr(settings, "kappa_min", KAPPA_MIN)
    fixed = getattr(settings, "fixed_kappa", None)
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    H = dcmath._samples(S, cfg)
    M = H.shape[0]
    if M < 1:
        raise ValueError("need at least one sample")
    vj = as_blocks(v_j, cfg).reshape(-1)
    lay = DcLayout(cfg.dim, M)
    n = lay.n

    quads = _piece_groups(H, cfg, lay)

    g, u0 = dcmath.grad_u_saa(vj, H, cfg, return_value=True)
    a = np.concatenate([-2.0 * g.real, -2.0 * g.imag, [-eps, 1.0]])
    lin_cols = np.concatenate([np.arange(lay.nv + 1), [lay.t]])
    c = 2.0 * float(np.real(np.vdot(g, vj))) - u0
    quads.append(QuadGroup("linearized", np.zeros((1, 0, a.size)), a[None], [c], lin_cols[None]))

    quads.extend(power_groups(cfg, cfg.dim))

    xcol = (lay.nv + 1 + np.arange(M))[:, None]
    quads.append(QuadGroup("slack_nonneg", np.zeros((M, 0, 1)), -np.ones((M, 1)), np.zeros(M), xcol))
    quads.append(QuadGroup("kappa_min", np.zeros((1, 0, 1)), [[-1.0]], [kappa_min], [[lay.kappa]]))

    A = np.zeros((1, n))
    A[0, lay.x] = 1.0 / M
    A[0, lay.t] = -1.0
    b = [0.0]
    if fixed is not None:
        if fixed < kappa_min:
            raise ValueError(f"fixed kappa {fixed} is below kappa_min {kappa_min}")
        row = np.zeros((1, n))
        row[0, lay.kappa] = 1.0
        A, b = np.vstack([A, row]), [0.0, float(fixed)]

    Q = sp.diags_array(np.concatenate([np.ones(lay.nv), np.zeros(n - lay.nv)]))
    return ConvexSubproblem(Q=Q, q=np.zeros(n), quads=quads, A=A, b=b, layout=lay)


def anchor_point(v_j, kappa_j: float, S, cfg: NetworkConfig) -> np.ndarray:
    """``(v_j, kappa_j, x_m = max_k s_k(v_j, h^m, kappa_j))`` in the subproblem layout."""
    H = dcmath._samples(S, cfg)
    x = dcmath.pieces(v_j, H, kappa_j, cfg).max(axis=1)
    return DcLayout(cfg.dim, H.shape[0]).pack(as_blocks(v_j, cfg).reshape(-1), kappa_j, x)
