"""Primal-dual interior-point method for convex QPs over second-order cones.

Solves the pair

    minimize    (1/2) x'Px + q'x          maximize   -(1/2) x'Px - h'z - b'y
    subject to  Gx + s = h, Ax = b        subject to  Px + G'z + A'y + q = 0
                s in C                                z in C

where ``C`` is a product of second-order cones
``{(t, u): ||u|| <= t}``; a cone of size 1 is the nonnegative ray, so the
orthant needs no separate treatment.

Cones are stored in blocks of equal shape. Block ``b`` holds ``nc`` cones of
size ``q``, each touching ``r`` columns of ``x``: ``G`` is ``(nc, q, r)``,
``cols`` is ``(nc, r)``, ``h`` is ``(nc, q)``. All per-cone linear algebra is
batched over the block, which is what keeps problems with thousands of small
cones tractable with dense normal equations.

The iteration follows the standard Nesterov-Todd scaled, Mehrotra
predictor-corrector scheme for cone QPs, with the scaling recomputed from
``(s, z)`` at every step.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
NUMERICAL_LIMIT = "numerical-limit"


@dataclass
class ConeBlock:
    G: np.ndarray  # (nc, q, r)
    cols: np.ndarray  # (nc, r) int
    h: np.ndarray  # (nc, q)
    name: str = ""

    def __post_init__(self):
        self.G = np.ascontiguousarray(self.G, dtype=float)
        self.cols = np.ascontiguousarray(self.cols, dtype=np.int64)
        self.h = np.ascontiguousarray(self.h, dtype=float)
        nc, q, r = self.G.shape
        if self.cols.shape != (nc, r) or self.h.shape != (nc, q):
            raise ValueError(f"cone block {self.name!r}: inconsistent shapes "
                             f"G{self.G.shape} cols{self.cols.shape} h{self.h.shape}")

    @property
    def nc(self):
        return self.G.shape[0]

    @property
    def q(self):
        return self.G.shape[1]


@dataclass
class ConeSettings:
    feastol: float = 1e-8
    reltol: float = 1e-8
    abstol: float = 1e-12
    max_iters: int = 100
    step_frac: float = 0.99
    refinement: int = 5  # maximum number of refinement steps per solve


@dataclass
class ConeSolution:
    status: str
    x: np.ndarray
    y: np.ndarray
    s: list = field(repr=False)
    z: list = field(repr=False)
    primal_objective: float = np.nan
    dual_objective: float = np.nan
    gap: float = np.nan
    rel_gap: float = np.nan
    primal_residual: float = np.nan
    dual_residual: float = np.nan
    iterations: int = 0
    solve_time: float = 0.0


# ---------------------------------------------------------------------------
# batched second-order cone algebra; every array below is (nc, q)


def _jsign(q):
    j = -np.ones(q)
    j[0] = 1.0
    return j


def _jnorm(u):
    """sqrt(u0^2 - ||u1||^2), computed as a product to limit cancellation."""
    t = np.linalg.norm(u[:, 1:], axis=1)
    return np.sqrt(np.maximum((u[:, 0] - t) * (u[:, 0] + t), 0.0))


def _jprod(u, v):
    out = np.empty_like(u)
    out[:, 0] = np.einsum("cq,cq->c", u, v)
    out[:, 1:] = u[:, :1] * v[:, 1:] + v[:, :1] * u[:, 1:]
    return out


def _jdiv(lam, d):
    """Solve ``lam o x = d`` for ``x``."""
    ljl = _jnorm(lam) ** 2
    x = np.empty_like(d)
    x[:, 0] = (lam[:, 0] * d[:, 0] - np.einsum("cq,cq->c", lam[:, 1:], d[:, 1:])) / ljl
    x[:, 1:] = (d[:, 1:] - x[:, :1] * lam[:, 1:]) / lam[:, :1]
    return x


def _max_step(lam, d):
    """Largest ``t`` with ``lam + d/t`` on the cone boundary, per cone (0 if none)."""
    n = _jnorm(lam)
    lb = lam / n[:, None]
    j = _jsign(lam.shape[1])
    rho0 = np.einsum("cq,cq->c", lb * j, d)
    rho1 = d[:, 1:] - ((rho0 + d[:, 0]) / (lb[:, 0] + 1.0))[:, None] * lb[:, 1:]
    t = (np.linalg.norm(rho1, axis=1) - rho0) / n
    return np.maximum(t, 0.0)


def _boundary_shift(u):
    """Smallest ``a`` with ``u + a*e`` in the cone, maximised over cones."""
    return float(np.max(np.linalg.norm(u[:, 1:], axis=1) - u[:, 0]))


def _norm_all(*parts) -> float:
    """Euclidean norm of arrays and lists of arrays taken together."""
    tot = 0.0
    for p in parts:
        for u in (p if isinstance(p, list) else [p]):
            tot += float(np.sum(u * u))
    return np.sqrt(tot)


class _Scaling:
    """Nesterov-Todd scaling ``W = beta (2 w w' - J)`` for every cone of a block."""

    def __init__(self, s, z):
        if s is None:  # identity scaling
            return
        ns, nz = _jnorm(s), _jnorm(z)
        sb, zb = s / ns[:, None], z / nz[:, None]
        gamma = np.sqrt(0.5 * (1.0 + np.einsum("cq,cq->c", sb, zb)))
        j = _jsign(s.shape[1])
        wbar = (sb + zb * j) / (2.0 * gamma[:, None])  # NT scaling point, wbar'J wbar = 1
        # W = beta (2 w w' - J) with w = (wbar + e) / sqrt(2 (1 + wbar_0)), so w'Jw = 1
        wbar[:, 0] += 1.0
        self.w = wbar / np.sqrt(2.0 * wbar[:, :1])
        self.beta = np.sqrt(ns / nz)
        self.j = j

    @classmethod
    def identity(cls, nc, q):
        sc = cls(None, None)
        sc.w = np.zeros((nc, q))
        sc.w[:, 0] = 1.0
        sc.beta = np.ones(nc)
        sc.j = _jsign(q)
        return sc

    def apply(self, u):
        """W u for u of shape (nc, q) or (nc, q, r)."""
        if u.ndim == 2:
            wu = np.einsum("cq,cq->c", self.w, u)
            return self.beta[:, None] * (2.0 * self.w * wu[:, None] - self.j * u)
        wu = np.einsum("cq,cqr->cr", self.w, u)
        return self.beta[:, None, None] * (2.0 * self.w[:, :, None] * wu[:, None, :]
                                           - self.j[None, :, None] * u)

    def apply_inv(self, u):
        a = self.w * self.j
        if u.ndim == 2:
            au = np.einsum("cq,cq->c", a, u)
            return (2.0 * a * au[:, None] - self.j * u) / self.beta[:, None]
        au = np.einsum("cq,cqr->cr", a, u)
        return (2.0 * a[:, :, None] * au[:, None, :] - self.j[None, :, None] * u) \
            / self.beta[:, None, None]


class _Split:
    """Column split ``D | X`` of the normal matrix for block elimination.

    ``X`` is an independent set of the sparsity graph (columns that never
    share a cone or an objective entry with each other), so ``H[X, X]`` is
    diagonal and ``H`` factors through the dense Schur complement on ``D``.
    Columns with off-diagonal objective entries stay in ``D``.
    In the DC subproblem ``X`` collects the per-sample slacks.
    Entries are kept in one flat buffer ``[H_DD | H_DX | diag H_XX]``.
    """

    def __init__(self, n, cliques, P):
        rows, cols = [P.row], [P.col]
        for c in cliques:
            rows.append(np.repeat(c, c.shape[1], axis=1).ravel())
            cols.append(np.tile(c, (1, c.shape[1])).ravel())
        adj = sp.csr_array((np.ones(sum(r.size for r in rows)), (np.concatenate(rows), np.concatenate(cols))),
                           shape=(n, n))
        adj.sum_duplicates()
        chosen = np.zeros(n, bool)
        blocked = np.zeros(n, bool)
        # X columns couple to D through cones only, which keeps the Schur complement projectable
        off = P.row != P.col
        blocked[P.row[off]] = True
        for j in np.argsort(np.diff(adj.indptr), kind="stable"):
            if blocked[j]:
                continue
            chosen[j] = True
            blocked[adj.indices[adj.indptr[j]:adj.indptr[j + 1]]] = True
        self.X = np.flatnonzero(chosen)
        self.D = np.flatnonzero(~chosen)
        self.nd, self.nx = self.D.size, self.X.size
        self.posD = np.full(n, -1)
        self.posD[self.D] = np.arange(self.nd)
        self.posX = np.full(n, -1)
        self.posX[self.X] = np.arange(self.nx)
        self.size = self.nd * self.nd + self.nd * self.nx + self.nx

    def target(self, i, j):
        """Buffer position of entry ``(i, j)``; -1 for the mirrored ``(X, D)`` half."""
        i, j = np.broadcast_arrays(np.asarray(i), np.asarray(j))
        di, dj, xi, xj = self.posD[i], self.posD[j], self.posX[i], self.posX[j]
        nd, nx = self.nd, self.nx
        out = np.full(i.shape, -1, dtype=np.int64)
        m = (di >= 0) & (dj >= 0)
        out[m] = di[m] * nd + dj[m]
        m = (di >= 0) & (xj >= 0)
        out[m] = nd * nd + di[m] * nx + xj[m]
        m = (xi >= 0) & (i == j)
        out[m] = nd * nd + nd * nx + xi[m]
        return out

    def views(self, buf):
        nd, nx = self.nd, self.nx
        return (buf[:nd * nd].reshape(nd, nd), buf[nd * nd:nd * nd + nd * nx].reshape(nd, nx),
                buf[nd * nd + nd * nx:])


class _PlainScatter:
    """Adds ``sum_c Gt_c' Gt_c`` of cones that touch no ``X`` column.

    Columns shared by every cone of the block go through a single stacked
    product; cross terms with the per-cone columns are scattered directly when
    their targets are distinct and through ``bincount`` otherwise.
    """

    def __init__(self, cols, split: _Split):
        nc, r = cols.shape
        shared = np.all(cols == cols[:1], axis=0)
        self.sh = np.flatnonzero(shared)
        self.pc = np.flatnonzero(~shared)
        c = cols[0, self.sh]
        t = split.target(c[:, None], c[None, :])
        self.ss_keep = t >= 0
        self.ss_t = t[self.ss_keep]
        self.size = split.size
        if self.pc.size:
            shc, pcc = cols[:, self.sh], cols[:, self.pc]
            flat = np.concatenate([split.target(shc[:, :, None], pcc[:, None, :]).ravel(),
                                   split.target(pcc[:, :, None], shc[:, None, :]).ravel(),
                                   split.target(pcc[:, :, None], pcc[:, None, :]).ravel()])
            self.keep = flat >= 0
            self.flat = flat[self.keep]
            self.unique = np.unique(self.flat).size == self.flat.size

    def add(self, buf, Gt):
        nc, q, r = Gt.shape
        if self.sh.size:
            X = (Gt if not self.pc.size else Gt[:, :, self.sh]).reshape(nc * q, -1)
            buf[self.ss_t] += (X.T @ X)[self.ss_keep]
        if not self.pc.size:
            return
        Gs, Gp = Gt[:, :, self.sh], Gt[:, :, self.pc]
        Bsp = np.einsum("cqs,cqp->csp", Gs, Gp)
        Bpp = np.einsum("cqp,cqt->cpt", Gp, Gp)
        vals = np.concatenate([Bsp.ravel(), Bsp.transpose(0, 2, 1).ravel(), Bpp.ravel()])[self.keep]
        if self.unique:
            buf[self.flat] += vals
        else:
            buf += np.bincount(self.flat, weights=vals, minlength=self.size)


class _XScatter:
    """Cones that touch one ``X`` column each.

    Their share of ``H_DX`` and ``diag H_XX`` goes into the split buffer
    (:meth:`add`); their share of the Schur complement
    ``H_DD - H_DX diag(d)^-1 H_XD`` is formed directly (:meth:`schur`).
    An active cone gives its ``X`` column a weight many orders of magnitude
    above the information left after elimination, so subtracting the
    assembled products would cancel catastrophically. Instead each cone's
    rows are projected first,

        sum_c U_c'U_c - h h'/d = sum_c (U_c - u_c h'/d)'(U_c - u_c h'/d),

    where ``u_c`` is the cone's ``X`` column, ``U_c`` the rest, ``h`` the
    ``H_DX`` column and ``d`` the ``X`` diagonal (all cones of that column
    summed). The projected rows live on the union of ``D`` columns that share
    a cone with that ``X`` column (``support``).
    """

    def __init__(self, cols, split: _Split, support, local):
        nc, r = cols.shape
        px = split.posX[cols]
        self.xloc = np.argmax(px >= 0, axis=1)
        self.xj = px[np.arange(nc), self.xloc]
        self.dpos = split.posD[cols]  # -1 at the X column
        self.local = local  # (nc, r): slot in the X column's support, -1 at the X column
        self.w = support.shape[1]
        self.support = support[self.xj]  # (nc, w), -1 padded
        self.shared = bool(np.all(self.support == self.support[:1]))
        self.nx = split.nx
        self.nd = split.nd
        # cones with one column layout scatter through a single static gather
        self.uniform = bool(np.all(local == local[:1]))
        self.keep = np.flatnonzero(local[0] >= 0)
        self.slots = local[0][self.keep]
        self.hdx_t = np.where(self.dpos >= 0, self.dpos * split.nx + self.xj[:, None], -1)

    def add(self, HDX, dX, Gt):
        nc = Gt.shape[0]
        u = Gt[np.arange(nc), :, self.xloc]  # (nc, q)
        dX += np.bincount(self.xj, weights=np.einsum("cq,cq->c", u, u), minlength=self.nx)
        vals = np.einsum("cqr,cq->cr", Gt, u)
        keep = self.hdx_t >= 0
        HDX.reshape(-1)[:] += np.bincount(self.hdx_t[keep], weights=vals[keep], minlength=HDX.size)

    def schur(self, S, Gt, HDX, d):
        nc, q, r = Gt.shape
        w = self.w
        u = Gt[np.arange(nc), :, self.xloc]
        Ut = np.zeros((nc, q, w))
        if self.uniform:
            Ut[:, :, self.slots] = Gt[:, :, self.keep]
        else:
            slot = np.where(self.local >= 0, self.local, w)
            full = np.zeros((nc, q, w + 1))
            full[np.arange(nc)[:, None], :, slot] = Gt.transpose(0, 2, 1)
            Ut = full[:, :, :w]
        sup = self.support
        h = np.where(sup >= 0, HDX[np.maximum(sup, 0), self.xj[:, None]], 0.0)
        Ut -= u[:, :, None] * (h / d[self.xj][:, None])[:, None, :]
        if self.shared:
            X = Ut.reshape(nc * q, w)
            idx = sup[0]
            m = idx >= 0
            C = X.T @ X
            S[np.ix_(idx[m], idx[m])] += C[np.ix_(m, m)]
            return
        C = np.einsum("cqa,cqb->cab", Ut, Ut)
        tgt = sup[:, :, None] * self.nd + sup[:, None, :]
        keep = (sup[:, :, None] >= 0) & (sup[:, None, :] >= 0)
        S.reshape(-1)[:] += np.bincount(tgt[keep], weights=C[keep], minlength=S.size)


def _x_supports(blocks, split: _Split):
    """Per ``X`` column, the sorted ``D`` columns sharing a cone with it.

    Returns the padded support table ``(nx, w)`` and, per block, the slot of
    every cone column in its ``X`` column's support (``None`` for blocks
    without ``X`` columns).
    """
    keys = []
    for blk in blocks:
        px = split.posX[blk.cols]
        has = px >= 0
        rows = np.flatnonzero(has.any(axis=1))
        if not rows.size:
            continue
        xj = px[rows].max(axis=1)
        dp = split.posD[blk.cols[rows]]
        keys.append((xj[:, None] * split.nd + dp)[dp >= 0])
    if not keys or split.nx == 0:
        return np.zeros((split.nx, 0), dtype=np.int64), [None] * len(blocks)
    uk = np.unique(np.concatenate(keys))
    xj, dcol = uk // split.nd, uk % split.nd
    counts = np.bincount(xj, minlength=split.nx)
    start = np.concatenate([[0], np.cumsum(counts)[:-1]])
    w = int(counts.max()) if counts.size else 0
    table = np.full((split.nx, w), -1, dtype=np.int64)
    rank = np.arange(uk.size) - start[xj]
    table[xj, rank] = dcol
    locals_ = []
    for blk in blocks:
        px = split.posX[blk.cols]
        if not np.any(px >= 0):
            locals_.append(None)
            continue
        rows = px.max(axis=1)
        dp = split.posD[blk.cols]
        key = rows[:, None] * split.nd + np.maximum(dp, 0)
        loc = np.searchsorted(uk, key) - start[rows][:, None]
        locals_.append(np.where(dp >= 0, loc, -1))
    return table, locals_


class _NormalFactor:
    """Factorisation of ``H = [[H_DD, H_DX], [H_XD, diag(d_X)]]`` given the
    Schur complement ``S = H_DD - H_DX diag(d_X)^-1 H_XD``."""

    def __init__(self, split: _Split, S, HDX, dX):
        self.split, self.HDX, self.dX = split, HDX, dX
        self.L = sla.cho_factor(S, lower=True, check_finite=False) if split.nd else None
        if self.L is not None and not np.all(np.isfinite(self.L[0])):
            raise np.linalg.LinAlgError("non-finite Cholesky factor")

    def solve(self, r):
        sp_ = self.split
        out = np.empty_like(r)
        rX = r[sp_.X]
        dX = self.dX if r.ndim == 1 else self.dX[:, None]
        if self.L is None:
            out[sp_.X] = rX / dX
            return out
        uD = sla.cho_solve(self.L, r[sp_.D] - self.HDX @ (rX / dX), check_finite=False)
        out[sp_.D] = uD
        out[sp_.X] = (rX - self.HDX.T @ uD) / dX
        return out


# ---------------------------------------------------------------------------


class ConeQP:
    """A cone QP instance; :meth:`solve` runs the interior-point method."""

    def __init__(self, P, q, blocks: list[ConeBlock], A=None, b=None):
        self.q = np.asarray(q, dtype=float)
        n = self.n = self.q.size
        self.P = sp.csr_array((n, n)) if P is None else sp.csr_array(P)
        if self.P.shape != (n, n):
            raise ValueError(f"P has shape {self.P.shape}, expected ({n}, {n})")
        self.blocks = [blk for blk in blocks if blk.nc > 0]
        if A is None:
            A, b = np.zeros((0, n)), np.zeros(0)
        self.A = np.atleast_2d(np.asarray(A, dtype=float)).reshape(-1, n)
        self.b = np.asarray(b, dtype=float).reshape(-1)
        for blk in self.blocks:
            if blk.cols.size and (blk.cols.min() < 0 or blk.cols.max() >= n):
                raise ValueError(f"cone block {blk.name!r} references a column outside [0, {n})")
        Pc = self.P.tocoo()
        self.split = _Split(n, [blk.cols for blk in self.blocks], Pc)
        self._p_t = self.split.target(Pc.row, Pc.col)
        self._p_keep = self._p_t >= 0
        self._p_vals = Pc.data[self._p_keep]
        self._p_t = self._p_t[self._p_keep]
        self._pX = np.zeros(self.split.nx)
        on_x = (Pc.row == Pc.col) & (self.split.posX[Pc.row] >= 0)
        np.add.at(self._pX, self.split.posX[Pc.row[on_x]], Pc.data[on_x])
        support, locals_ = _x_supports(self.blocks, self.split)
        self._scatter = []
        for blk, loc in zip(self.blocks, locals_):
            has_x = np.any(self.split.posX[blk.cols] >= 0, axis=1)
            plain, xc = np.flatnonzero(~has_x), np.flatnonzero(has_x)
            self._scatter.append((
                plain, _PlainScatter(blk.cols[plain], self.split) if plain.size else None,
                xc, _XScatter(blk.cols[xc], self.split, support, loc[xc]) if xc.size else None))
        self.degree = sum(blk.nc for blk in self.blocks)

    # linear maps -----------------------------------------------------------
    def G_mul(self, x):
        return [np.einsum("cqr,cr->cq", blk.G, x[blk.cols]) for blk in self.blocks]

    def GT_mul(self, zs):
        out = np.zeros(self.n)
        for blk, z in zip(self.blocks, zs):
            out += np.bincount(blk.cols.ravel(), weights=np.einsum("cqr,cq->cr", blk.G, z).ravel(),
                               minlength=self.n)
        return out

    def h_list(self):
        return [blk.h for blk in self.blocks]

    # KKT system --------------------------------------------------------------
    def _factor(self, scalings):
        split = self.split
        buf = np.zeros(split.size)
        np.add.at(buf, self._p_t, self._p_vals)
        HDD, HDX, dX = split.views(buf)
        parts = []
        for blk, sc, (plain, ps, xc, xs) in zip(self.blocks, scalings, self._scatter):
            Gt = sc.apply_inv(blk.G)
            if ps is not None:
                ps.add(buf, Gt if plain.size == blk.nc else Gt[plain])
            if xs is not None:
                Gx = Gt if xc.size == blk.nc else Gt[xc]
                xs.add(HDX, dX, Gx)
                parts.append((xs, Gx))
        scale = max(1.0, float(np.abs(dX).max()) if dX.size else 1.0,
                    float(np.abs(np.diag(HDD)).max()) if HDD.size else 1.0)
        reg = 0.0
        for _ in range(8):
            try:
                d = dX + reg
                if np.any(d <= 0):
                    raise np.linalg.LinAlgError
                S = HDD + reg * np.eye(split.nd) if reg else HDD.copy()
                for xs, Gx in parts:
                    xs.schur(S, Gx, HDX, d)
                if split.nd and split.nx:
                    S += (HDX * ((self._pX + reg) / d ** 2)) @ HDX.T
                nf = _NormalFactor(split, S, HDX, d)
                break
            except (np.linalg.LinAlgError, ValueError):
                reg = 1e-14 * scale if reg == 0.0 else reg * 100.0
        else:
            raise np.linalg.LinAlgError("normal equations are not positive definite")
        S = None
        if self.A.shape[0]:
            HiAT = nf.solve(np.ascontiguousarray(self.A.T))
            S = sla.cho_factor(self.A @ HiAT, lower=True, check_finite=False)
        return nf, S, scalings

    def _solve_reduced(self, fac, bx, by, bz):
        nf, S, scalings = fac
        Wi2bz = [sc.apply_inv(sc.apply_inv(u)) for sc, u in zip(scalings, bz)]
        rhs = bx + self.GT_mul(Wi2bz)
        if S is not None:
            dy = sla.cho_solve(S, self.A @ nf.solve(rhs) - by, check_finite=False)
            dx = nf.solve(rhs - self.A.T @ dy)
        else:
            dy = np.zeros(0)
            dx = nf.solve(rhs)
        Gdx = self.G_mul(dx)
        dz = [sc.apply_inv(sc.apply_inv(g - u)) for sc, g, u in zip(scalings, Gdx, bz)]
        return dx, dy, dz

    def _kkt_solve(self, fac, bx, by, bz, refinement):
        """Solve [P A' G'; A 0 0; G 0 -W^2] [dx; dy; dz] = [bx; by; bz].

        Up to ``refinement`` correction steps are taken; refinement stops once
        the residual is at rounding level or no longer shrinks.
        """
        dx, dy, dz = self._solve_reduced(fac, bx, by, bz)
        scalings = fac[2]
        scale = max(1.0, _norm_all(bx, by, bz))
        prev = np.inf
        for _ in range(refinement):
            r1 = bx - (self.P @ dx + self.A.T @ dy + self.GT_mul(dz))
            r2 = by - self.A @ dx
            Gdx = self.G_mul(dx)
            r3 = [u - (g - sc.apply(sc.apply(z))) for u, g, sc, z in zip(bz, Gdx, scalings, dz)]
            res = _norm_all(r1, r2, r3)
            if res <= 1e-15 * scale or res > 0.5 * prev:
                break
            prev = res
            ex, ey, ez = self._solve_reduced(fac, r1, r2, r3)
            dx, dy = dx + ex, dy + ey
            dz = [a + e for a, e in zip(dz, ez)]
        return dx, dy, dz

    # main loop ----------------------------------------------------------------
    def solve(self, settings: ConeSettings | None = None) -> ConeSolution:
        st = settings or ConeSettings()
        t0 = time.perf_counter()
        blocks = self.blocks
        P, q, A, b = self.P, self.q, self.A, self.b
        hs = self.h_list()
        hnorm = np.sqrt(sum(float(np.sum(h * h)) for h in hs))
        resx0 = max(1.0, float(np.linalg.norm(q)))
        resy0 = max(1.0, float(np.linalg.norm(b)))
        resz0 = max(1.0, hnorm)

        # starting point from the identity-scaled KKT system
        ident = [_Scaling.identity(blk.nc, blk.q) for blk in blocks]
        fac = self._factor(ident)
        x, y, zz = self._kkt_solve(fac, -q, b, [h.copy() for h in hs], st.refinement)
        s = [-u for u in zz]
        z = [u.copy() for u in zz]
        if blocks:
            ts = max(_boundary_shift(u) for u in s)
            tz = max(_boundary_shift(u) for u in z)
            nrms = np.sqrt(sum(float(np.sum(u * u)) for u in s))
            nrmz = np.sqrt(sum(float(np.sum(u * u)) for u in z))
            if ts >= -1e-8 * max(nrms, 1.0):
                for u in s:
                    u[:, 0] += 1.0 + ts
            if tz >= -1e-8 * max(nrmz, 1.0):
                for u in z:
                    u[:, 0] += 1.0 + tz

        status = NUMERICAL_LIMIT
        it = 0
        stats = {}
        best = None  # least-bad iterate, returned if the loop stalls
        for it in range(st.max_iters + 1):
            Gx = self.G_mul(x)
            GTz = self.GT_mul(z)
            Px = P @ x
            rx = Px + q + A.T @ y + GTz
            ry = A @ x - b
            rz = [g + u - h for g, u, h in zip(Gx, s, hs)]
            gap = sum(float(np.sum(u * w)) for u, w in zip(s, z))
            pcost = 0.5 * float(x @ Px) + float(q @ x)
            dcost = pcost + float(y @ ry) + sum(float(np.sum(w * r)) for w, r in zip(z, rz)) - gap
            nrz = np.sqrt(sum(float(np.sum(r * r)) for r in rz))
            pres = max(float(np.linalg.norm(ry)) / resy0, nrz / resz0)
            dres = float(np.linalg.norm(rx)) / resx0
            denom = max(abs(pcost), abs(dcost))
            relgap = gap / denom if denom > 0 else np.inf
            stats = dict(primal_objective=pcost, dual_objective=dcost, gap=gap, rel_gap=relgap,
                         primal_residual=pres, dual_residual=dres)
            log.debug("it %2d pcost % .8e dcost % .8e gap %.2e pres %.2e dres %.2e",
                      it, pcost, dcost, gap, pres, dres)
            if pres <= st.feastol and dres <= st.feastol and (gap <= st.abstol or relgap <= st.reltol):
                status = OPTIMAL
                break
            score = max(pres / st.feastol, dres / st.feastol, min(relgap / st.reltol, gap / st.abstol))
            if best is None or score < best[0]:
                best = (score, it, x, y, s, z, stats)
            elif score > 1e3 * best[0] and best[0] < 10.0:
                break  # accuracy is being lost near the optimum

            # Farkas certificate: z in C, G'z + A'y = 0, h'z + b'y < 0
            hzby = sum(float(np.sum(h * w)) for h, w in zip(hs, z)) + float(b @ y)
            if hzby < 0 and np.linalg.norm(GTz + A.T @ y) <= st.feastol * (-hzby) \
                    and pres > st.feastol:
                status = INFEASIBLE
                break
            if it == st.max_iters or not blocks:
                break

            if min(min(float(_jnorm(u).min()), float(_jnorm(w).min())) for u, w in zip(s, z)) <= 0:
                break  # an iterate reached the cone boundary
            scalings = [_Scaling(u, w) for u, w in zip(s, z)]
            lam = [sc.apply(w) for sc, w in zip(scalings, z)]
            if min(float(_jnorm(l_).min()) for l_ in lam) <= 0:
                break  # the scaled point lost interiority to rounding
            try:
                fac = self._factor(scalings)
            except np.linalg.LinAlgError:
                break
            mu = gap / self.degree
            lamsq = [_jprod(l_, l_) for l_ in lam]

            def direction(ds):
                bz = [-r - sc.apply(_jdiv(l_, d)) for r, sc, l_, d in zip(rz, scalings, lam, ds)]
                dx, dy, dz = self._kkt_solve(fac, -rx, -ry, bz, st.refinement)
                zt = [sc.apply(w) for sc, w in zip(scalings, dz)]
                # ds from the primal equation G dx + ds = -rz; going through
                # W^2 dz instead loses accuracy on cones with extreme scaling
                st_ = [sc.apply_inv(-r - g) for sc, r, g in zip(scalings, rz, self.G_mul(dx))]
                tmax = 0.0
                for l_, a, c in zip(lam, st_, zt):
                    tmax = max(tmax, float(np.max(_max_step(l_, a))), float(np.max(_max_step(l_, c))))
                return dx, dy, dz, st_, zt, tmax

            # predictor
            dx, dy, dz, sa, za, tmax = direction([-u for u in lamsq])
            alpha = min(1.0, 1.0 / tmax) if tmax > 0 else 1.0
            dsdz = sum(float(np.sum(a * c)) for a, c in zip(sa, za))
            sigma = min(1.0, max(0.0, 1.0 - alpha + dsdz / gap * alpha ** 2)) ** 3

            # corrector
            ds = []
            for l2, a, c in zip(lamsq, sa, za):
                d = -l2 - _jprod(a, c)
                d[:, 0] += sigma * mu
                ds.append(d)
            dx, dy, dz, sc_t, zc_t, tmax = direction(ds)
            alpha = min(1.0, st.step_frac / tmax) if tmax > 0 else 1.0
            log.debug("   sigma %.2e step %.3e", sigma, alpha)
            if alpha < 1e-12:
                break
            x = x + alpha * dx
            y = y + alpha * dy
            s = [u + alpha * sc.apply(a) for u, sc, a in zip(s, scalings, sc_t)]
            z = [w + alpha * c for w, c in zip(z, dz)]

        if status == NUMERICAL_LIMIT and best is not None:
            _, _, x, y, s, z, stats = best
        return ConeSolution(status=status, x=x, y=y, s=s, z=z, iterations=it,
                            solve_time=time.perf_counter() - t0, **stats)
