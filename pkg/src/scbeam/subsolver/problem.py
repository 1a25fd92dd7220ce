"""Convex QCQPs in factored form and their interior-point solution.

Every quadratic constraint is stored as ``||F u||^2 + a.u + c <= 0`` with
``u = y[cols]``, so its matrix ``F'F`` is PSD by construction. Constraints
of identical shape form a :class:`QuadGroup`; a group with zero ``F`` rows is
a set of linear inequalities. Second-order-cone constraints
``||F u + f|| <= g.u + g0`` (used by the scenario baseline) form a
:class:`SocGroup`.

:func:`solve` rewrites each quadratic as a rotated cone,
``||F u||^2 <= t  <=>  ||(2 F u, 1 - t)|| <= 1 + t``, and hands the result to
:class:`~scbeam.subsolver.conic.ConeQP`. Multipliers are mapped back to the
QCQP so that ``grad f0 + sum_i lam_i grad g_i + A' mu = 0``.
"""
from __future__ import annotations

import io
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import lsq_linear

from .conic import ConeBlock, ConeQP, ConeSettings, OPTIMAL, INFEASIBLE, NUMERICAL_LIMIT

__all__ = ["QuadGroup", "SocGroup", "ConvexSubproblem", "SolverSettings",
           "SubproblemSolution", "KktResidual", "solve", "kkt_residual", "dump",
           "OPTIMAL", "INFEASIBLE", "NUMERICAL_LIMIT"]


@dataclass
class QuadGroup:
    """``nc`` constraints ``||F_i y[cols_i]||^2 + a_i . y[cols_i] + c_i <= 0``."""

    name: str
    F: np.ndarray  # (nc, p, r)
    a: np.ndarray  # (nc, r)
    c: np.ndarray  # (nc,)
    cols: np.ndarray  # (nc, r)

    def __post_init__(self):
        self.a = np.atleast_2d(np.asarray(self.a, dtype=float))
        nc, r = self.a.shape
        self.F = np.asarray(self.F, dtype=float).reshape(nc, -1, r)
        self.c = np.asarray(self.c, dtype=float).reshape(nc)
        self.cols = np.asarray(self.cols, dtype=np.int64).reshape(nc, r)

    @property
    def nc(self) -> int:
        return self.a.shape[0]

    def values(self, y) -> np.ndarray:
        u = y[self.cols]
        Fu = np.einsum("cpr,cr->cp", self.F, u)
        return np.einsum("cp,cp->c", Fu, Fu) + np.einsum("cr,cr->c", self.a, u) + self.c

    def gradients(self, y) -> np.ndarray:
        """``(nc, r)`` gradients with respect to ``y[cols]``."""
        u = y[self.cols]
        Fu = np.einsum("cpr,cr->cp", self.F, u)
        return 2.0 * np.einsum("cpr,cp->cr", self.F, Fu) + self.a

    def matrix(self, i: int) -> np.ndarray:
        return self.F[i].T @ self.F[i]


@dataclass
class SocGroup:
    """``nc`` constraints ``||F_i u + f_i|| <= g_i . u + g0_i`` with ``u = y[cols_i]``."""

    name: str
    F: np.ndarray  # (nc, p, r)
    f: np.ndarray  # (nc, p)
    g: np.ndarray  # (nc, r)
    g0: np.ndarray  # (nc,)
    cols: np.ndarray  # (nc, r)

    def __post_init__(self):
        self.g = np.atleast_2d(np.asarray(self.g, dtype=float))
        nc, r = self.g.shape
        self.F = np.asarray(self.F, dtype=float).reshape(nc, -1, r)
        self.f = np.asarray(self.f, dtype=float).reshape(nc, self.F.shape[1])
        self.g0 = np.asarray(self.g0, dtype=float).reshape(nc)
        self.cols = np.asarray(self.cols, dtype=np.int64).reshape(nc, r)

    @property
    def nc(self) -> int:
        return self.g.shape[0]

    def parts(self, y):
        u = y[self.cols]
        t = np.einsum("cr,cr->c", self.g, u) + self.g0
        w = np.einsum("cpr,cr->cp", self.F, u) + self.f
        return t, w

    def values(self, y) -> np.ndarray:
        t, w = self.parts(y)
        return np.linalg.norm(w, axis=1) - t


@dataclass
class ConvexSubproblem:
    """Minimise ``y'Qy + q'y`` subject to the groups and ``A y = b``."""

    Q: np.ndarray
    q: np.ndarray
    quads: list[QuadGroup] = field(default_factory=list)
    socs: list[SocGroup] = field(default_factory=list)
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    layout: object = None  # caller-specific unpacking helper

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).reshape(-1)
        n = self.q.size
        self.Q = sp.csr_array(self.Q) if sp.issparse(self.Q) else np.asarray(self.Q, dtype=float)
        if self.Q.shape != (n, n):
            raise ValueError(f"Q has shape {self.Q.shape}, expected ({n}, {n})")
        if self.A is None:
            self.A, self.b = np.zeros((0, n)), np.zeros(0)
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        if self.b.size != self.A.shape[0]:
            raise ValueError("A and b disagree in row count")
        for grp in [*self.quads, *self.socs]:
            if grp.cols.size and (grp.cols.min() < 0 or grp.cols.max() >= n):
                raise ValueError(f"group {grp.name!r} references a variable outside [0, {n})")
        names = [g.name for g in [*self.quads, *self.socs]]
        if len(set(names)) != len(names):
            raise ValueError(f"group names must be unique: {names}")

    @property
    def n(self) -> int:
        return self.q.size

    def objective(self, y) -> float:
        return float(y @ (self.Q @ y) + self.q @ y)

    def dense_Q(self) -> np.ndarray:
        return self.Q.toarray() if sp.issparse(self.Q) else self.Q

    def constraint_counts(self) -> dict[str, int]:
        out = {g.name: g.nc for g in self.quads}
        out.update({g.name: g.nc for g in self.socs})
        if self.A.shape[0]:
            out["equality"] = self.A.shape[0]
        return out

    def min_eigenvalue(self) -> float:
        """Smallest eigenvalue over the objective and every constraint matrix."""
        Qd = self.dense_Q()
        lo = float(np.linalg.eigvalsh(0.5 * (Qd + Qd.T)).min())
        for grp in self.quads:
            if grp.F.shape[1] == 0:
                continue
            M = np.matmul(grp.F.transpose(0, 2, 1), grp.F)
            lo = min(lo, float(np.linalg.eigvalsh(M).min()))
        return lo

    def max_violation(self, y) -> float:
        y = np.asarray(y, dtype=float)
        worst = 0.0
        for grp in [*self.quads, *self.socs]:
            if grp.nc:
                worst = max(worst, float(grp.values(y).max()))
        if self.A.shape[0]:
            worst = max(worst, float(np.abs(self.A @ y - self.b).max()))
        return worst


@dataclass
class SolverSettings:
    gap_tol: float = 1e-8
    feas_tol: float = 1e-8
    max_iters: int = 100
    polish: bool = True  # active-set Newton refinement after the interior-point solve


@dataclass
class SubproblemSolution:
    status: str
    y_star: np.ndarray
    objective: float
    duals: dict[str, np.ndarray]
    eq_duals: np.ndarray
    rel_gap: float
    primal_residual: float
    dual_residual: float
    iterations: int
    solve_time: float
    polished: bool = False

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def _quad_scale(grp: QuadGroup) -> np.ndarray:
    # keeps the 1 +- t entries of the rotated cone of order one
    return 1.0 / np.maximum(1.0, np.abs(grp.c))


def _to_cones(p: ConvexSubproblem) -> list[ConeBlock]:
    blocks = []
    for grp in p.quads:
        w = _quad_scale(grp)
        F = grp.F * np.sqrt(w)[:, None, None]
        a, c = grp.a * w[:, None], grp.c * w
        nc, pr, r = F.shape
        if pr == 0:
            blocks.append(ConeBlock(G=a[:, None, :], cols=grp.cols, h=-c[:, None], name=grp.name))
            continue
        G = np.empty((nc, pr + 2, r))
        G[:, 0, :] = a
        G[:, 1, :] = a
        G[:, 2:, :] = -2.0 * F
        h = np.zeros((nc, pr + 2))
        h[:, 0] = 1.0 - c
        h[:, 1] = -1.0 - c
        blocks.append(ConeBlock(G=G, cols=grp.cols, h=h, name=grp.name))
    for grp in p.socs:
        nc, pr, r = grp.F.shape
        G = np.empty((nc, pr + 1, r))
        G[:, 0, :] = -grp.g
        G[:, 1:, :] = -grp.F
        h = np.concatenate([grp.g0[:, None], grp.f], axis=1)
        blocks.append(ConeBlock(G=G, cols=grp.cols, h=h, name=grp.name))
    return blocks


def solve(p: ConvexSubproblem, settings: SolverSettings | None = None) -> SubproblemSolution:
    """Solve ``p`` with the primal-dual interior-point method.

    ``status`` is ``optimal`` only when the relative duality gap and both
    scaled residuals are within tolerance, or when the interior-point method
    stalls close to the optimum and the active-set polish certifies the point
    on the QCQP's own KKT system (``polished`` is then set and the reported
    gap and residuals are the QCQP ones). ``infeasible`` is returned with a
    Farkas certificate; anything else is ``numerical-limit``.
    """
    st = settings or SolverSettings()
    blocks = _to_cones(p)
    qp = ConeQP(2.0 * p.Q, p.q, blocks, p.A, p.b)
    cs = ConeSettings(feastol=st.feas_tol, reltol=st.gap_tol, max_iters=st.max_iters)
    sol = qp.solve(cs)

    duals = {}
    y = sol.x
    zs = iter(zip(blocks, sol.z))
    for grp in p.quads:
        if not grp.nc:
            duals[grp.name] = np.zeros(0)
            continue
        blk, z = next(zs)
        if grp.F.shape[1] == 0:
            duals[grp.name] = z[:, 0] * _quad_scale(grp)
            continue
        # the cone's share of G'z, projected on the constraint gradient; at an
        # exact optimum the two are parallel and this equals (z0 + z1) * w
        contrib = np.einsum("cqr,cq->cr", blk.G, z)
        grad = grp.gradients(y)
        gg = np.einsum("cr,cr->c", grad, grad)
        proj = np.einsum("cr,cr->c", grad, contrib) / np.where(gg > 0, gg, 1.0)
        duals[grp.name] = np.where(gg > 0, proj, (z[:, 0] + z[:, 1]) * _quad_scale(grp))
    for grp in p.socs:
        duals[grp.name] = next(zs)[1] if grp.nc else np.zeros((0, grp.F.shape[1] + 1))
    eq_duals = sol.y
    out = SubproblemSolution(
        status=sol.status, y_star=y, objective=p.objective(y), duals=duals,
        eq_duals=eq_duals, rel_gap=sol.rel_gap, primal_residual=sol.primal_residual,
        dual_residual=sol.dual_residual, iterations=sol.iterations, solve_time=sol.solve_time,
    )
    near = max(sol.rel_gap, sol.primal_residual, sol.dual_residual) <= np.sqrt(st.gap_tol)
    if st.polish and (sol.status == OPTIMAL or (sol.status == NUMERICAL_LIMIT and near)):
        t0 = time.perf_counter()
        polished = _polished_solution(p, out, st)
        if polished is not None:
            polished.solve_time += time.perf_counter() - t0
            return polished
    return out


def _lagrangian_gap(p: ConvexSubproblem, y, duals, eq_duals) -> float:
    """``f(y) - L(y, lam, mu)``; the duality gap when ``grad_y L(y) = 0``."""
    gap = -float(eq_duals @ (p.A @ y - p.b)) if p.A.shape[0] else 0.0
    for grp in p.quads:
        if grp.nc:
            gap -= float(duals[grp.name] @ grp.values(y))
    for grp in p.socs:
        if grp.nc:
            tt, w = grp.parts(y)
            z = duals[grp.name]
            gap += float(z[:, 0] @ tt + np.einsum("cp,cp->", z[:, 1:], w))
    return gap


def _polished_solution(p: ConvexSubproblem, sol: SubproblemSolution, st: SolverSettings):
    """Polish ``sol`` and certify the result on the QCQP's own KKT system.

    The polished point replaces ``sol`` when its KKT residuals are smaller.
    If the Newton polish moves ``y`` off the feasible set, the multipliers
    are refitted at the unchanged ``y`` instead.
    A solution the interior-point method could not certify (stalled near the
    optimum) becomes ``optimal`` only if the polished point meets both
    tolerances: stationarity and feasibility within ``feas_tol`` and a
    Lagrangian duality gap within ``gap_tol`` relative.
    Returns ``None`` when nothing improves.
    """
    y, duals, eq_duals = sol.y_star, sol.duals, sol.eq_duals
    before = _kkt(p, y, duals, eq_duals)

    def rel_gap_of(y2, d2, e2):
        return abs(_lagrangian_gap(p, y2, d2, e2)) / max(abs(p.objective(y2)), 1e-300)

    def accept(y2, d2, e2):
        after = _kkt(p, y2, d2, e2)
        certified = (after.stationarity <= st.feas_tol and after.primal_feasibility <= st.feas_tol
                     and after.dual_feasibility == 0.0 and rel_gap_of(y2, d2, e2) <= st.gap_tol)
        if sol.status == OPTIMAL:
            return (after.max() < before.max()
                    and after.primal_feasibility <= max(before.primal_feasibility, 1e-12)), after
        return certified, after

    y2, d2, e2 = _polish(p, y, duals, eq_duals)
    ok, after = accept(y2, d2, e2) if y2 is not y else (False, None)
    if not ok:
        y2 = y
        d2, e2 = _refit_multipliers(p, y, duals, eq_duals)
        ok, after = accept(y2, d2, e2)
        if not ok:
            return None
    obj = p.objective(y2)
    rel_gap = rel_gap_of(y2, d2, e2)
    return SubproblemSolution(
        status=OPTIMAL, y_star=y2, objective=obj, duals=d2, eq_duals=e2,
        rel_gap=rel_gap if sol.status != OPTIMAL else min(rel_gap, sol.rel_gap),
        primal_residual=after.primal_feasibility if sol.status != OPTIMAL else sol.primal_residual,
        dual_residual=after.stationarity if sol.status != OPTIMAL else sol.dual_residual,
        iterations=sol.iterations, solve_time=sol.solve_time, polished=True)


def _stationarity(p: ConvexSubproblem, y, duals, eq_duals) -> np.ndarray:
    n = p.n
    grad = 2.0 * (p.Q @ y) + p.q + p.A.T @ eq_duals
    for grp in p.quads:
        if grp.nc:
            grad += np.bincount(grp.cols.ravel(), minlength=n,
                                weights=(duals[grp.name][:, None] * grp.gradients(y)).ravel())
    for grp in p.socs:
        if grp.nc:
            z = duals[grp.name]
            contrib = -grp.g * z[:, :1] - np.einsum("cpr,cp->cr", grp.F, z[:, 1:])
            grad += np.bincount(grp.cols.ravel(), weights=contrib.ravel(), minlength=n)
    return grad


def _refit_multipliers(p: ConvexSubproblem, y, duals, eq_duals, slack: float = 1e-8):
    """Least-squares multipliers at a fixed primal point.

    Minimises the stationarity residual over nonnegative multipliers of the
    near-active quadratic constraints and free equality multipliers. The
    other quadratic multipliers are set to zero; cone duals are kept.
    """
    duals = {k: np.array(v, dtype=float) for k, v in duals.items()}
    rows, cols, vals, start = [], [], [], []
    picked = []
    j = 0
    for grp in p.quads:
        if not grp.nc:
            continue
        lam, v = duals[grp.name], grp.values(y)
        idx = np.flatnonzero((lam > 1e-3 * np.maximum(-v, 0.0)) | (-v <= slack))
        rest = np.setdiff1d(np.arange(grp.nc), idx)
        lam[rest] = 0.0
        G = grp.gradients(y)[idx]
        rows.append(grp.cols[idx].ravel())
        cols.append(np.repeat(np.arange(j, j + idx.size), grp.cols.shape[1]))
        vals.append(G.ravel())
        start.append(np.maximum(lam[idx], 0.0))
        picked.append((grp.name, idx, j))
        j += idx.size
    m = p.A.shape[0]
    J = sp.csr_matrix((np.concatenate(vals or [np.zeros(0)]),
                       (np.concatenate(rows or [np.zeros(0, int)]), np.concatenate(cols or [np.zeros(0, int)]))),
                      shape=(p.n, j))
    if m:
        J = sp.hstack([J, sp.csr_matrix(p.A.T)]).tocsr()
    x0 = np.concatenate(start + [np.asarray(eq_duals, dtype=float)])
    for name, idx, k in picked:
        duals[name][idx] = x0[k:k + idx.size]
    r0 = _stationarity(p, y, duals, x0[j:])
    if J.shape[1] == 0:
        return duals, np.asarray(eq_duals, dtype=float)
    lb = np.r_[-x0[:j], np.full(m, -np.inf)]
    dx = lsq_linear(J, -r0, bounds=(lb, np.inf), tol=1e-14, lsmr_tol=1e-14, max_iter=2000).x
    x = np.maximum(x0 + dx, np.r_[np.zeros(j), np.full(m, -np.inf)])
    for name, idx, k in picked:
        duals[name][idx] = x[k:k + idx.size]
    return duals, x[j:]


def _smooth_parts(grp, idx, y):
    """Value, gradient and Hessian (on ``cols``) of active constraints as smooth equalities.

    A quadratic constraint is used as is; an active cone constraint is
    written ``||F u + f|| - (g . u + g0) = 0``, which is smooth away from the
    cone tip.
    """
    u = y[grp.cols[idx]]
    F = grp.F[idx]
    if isinstance(grp, QuadGroup):
        Fu = np.einsum("cpr,cr->cp", F, u)
        val = np.einsum("cp,cp->c", Fu, Fu) + np.einsum("cr,cr->c", grp.a[idx], u) + grp.c[idx]
        grad = 2.0 * np.einsum("cpr,cp->cr", F, Fu) + grp.a[idx]
        hess = 2.0 * np.einsum("cpr,cps->crs", F, F)
        return val, grad, hess
    w = np.einsum("cpr,cr->cp", F, u) + grp.f[idx]
    nw = np.linalg.norm(w, axis=1)
    wh = w / nw[:, None]
    val = nw - np.einsum("cr,cr->c", grp.g[idx], u) - grp.g0[idx]
    Fw = np.einsum("cpr,cp->cr", F, wh)
    grad = Fw - grp.g[idx]
    hess = (np.einsum("cpr,cps->crs", F, F) - np.einsum("cr,cs->crs", Fw, Fw)) / nw[:, None, None]
    return val, grad, hess


def _refined(factor, K, rhs, steps):
    x = np.zeros(K.shape[0])
    res = rhs
    for _ in range(steps):
        x = x + factor(res)
        new = rhs - K @ x
        if not np.all(np.isfinite(new)) or np.linalg.norm(new) >= np.linalg.norm(res):
            break
        res = new
    return x, float(np.linalg.norm(res))


def _regularized_solve(K, rhs, n, delta=1e-10, steps=60):
    """Solve ``K x = rhs``; ``None`` if no accurate solution is found.

    A plain sparse LU is tried first. If ``K`` is numerically singular (a
    non-unique optimum or dependent active gradients) the factorisation of
    ``K + delta diag(I, -I)`` is used instead, and iterative refinement
    against ``K`` converges to a solution whenever the system is consistent.
    """
    m = K.shape[0]
    K = sp.csc_array(K)
    tol = 1e-10 * max(1.0, float(np.linalg.norm(rhs)))
    try:
        lu = spla.splu(K)
        x, res = _refined(lu.solve, K, rhs, 3)
        if np.all(np.isfinite(x)) and res <= tol:
            return x
    except RuntimeError:
        pass
    scale = max(1.0, float(abs(K).max()))
    shift = sp.diags_array(np.concatenate([np.full(n, delta * scale), np.full(m - n, -delta * scale)]))
    lu = spla.splu(sp.csc_array(K + shift))
    x, res = _refined(lu.solve, K, rhs, steps)
    # the shifted solve converges slowly on singular systems; an inexact Newton step still contracts
    if not np.all(np.isfinite(x)) or res > 100.0 * tol:
        return None
    return x


def _polish(p: ConvexSubproblem, y, duals, eq_duals, sweeps: int = 6, attempts: int = 3):
    """Active-set Newton refinement of an interior-point solution.

    Interior-point iterates of a cone reformulation meet the KKT conditions
    of the original constraints only to about the square root of the final
    gap. Constraints whose multiplier exceeds their slack are treated as
    equalities, the others get multiplier zero, and Newton's method is run on
    the resulting square KKT system in ``(y, multipliers)``. Constraints whose
    multiplier turns negative leave the active set and the refinement is
    repeated; when Newton makes no progress, the active constraint with the
    smallest multiplier-to-slack ratio leaves instead. The inputs come back
    unchanged when no attempt succeeds.
    """
    dropped = {}
    for _ in range(attempts):
        out, negative = _polish_once(p, y, duals, eq_duals, dropped, sweeps)
        if negative is None:
            return out
        if not negative:
            if out is None:
                break
            negative = out  # no progress: drop the least certain active constraint
        for name, idx in negative.items():
            dropped[name] = np.union1d(dropped.get(name, np.zeros(0, np.int64)), idx)
    return y, duals, eq_duals


def _polish_once(p: ConvexSubproblem, y, duals, eq_duals, dropped, sweeps):
    """One Newton refinement on the active set guessed from ``(y, duals)``.

    Returns ``(result, None)`` on success, ``(None, negative)`` with the
    indices of negative multipliers per group, ``(weakest, {})`` when Newton
    stalls (``weakest`` names the least certain active constraint) and
    ``(None, {})`` on any other failure.
    """
    n = p.n
    groups = []  # (group, active indices, offset into the multiplier vector)
    nu0 = []
    off = 0
    weakest = None  # (multiplier / slack, group, index)
    for grp in list(p.quads) + list(p.socs):
        if not grp.nc:
            continue
        if isinstance(grp, QuadGroup):
            lam = duals[grp.name]
            slack = np.abs(grp.values(y))
        else:
            lam = duals[grp.name][:, 0]
            tt, w = grp.parts(y)
            slack = np.abs(tt - np.linalg.norm(w, axis=1))
            if np.any((lam > slack) & (np.linalg.norm(w, axis=1) <= 1e-8 * (1.0 + np.abs(tt)))):
                return None, {}  # active at the cone tip: not smooth
        act = np.setdiff1d(np.flatnonzero(lam > slack), dropped.get(grp.name, ()))
        if act.size:
            ratio = lam[act] / np.maximum(slack[act], 1e-300)
            i = int(np.argmin(ratio))
            if weakest is None or ratio[i] < weakest[0]:
                weakest = (ratio[i], grp.name, act[i])
        groups.append((grp, act, off))
        nu0.append(lam[act])
        off += act.size
    na, neq = off, p.A.shape[0]
    if na + neq > 2 * n + 50 and na > n:
        return None, {}  # degenerate: more active constraints than unknowns allow
    A = sp.csr_array(p.A) if neq else sp.csr_array((0, n))
    Q2 = sp.csr_array(2.0 * p.Q)
    z = np.concatenate([y, np.concatenate(nu0) if nu0 else np.zeros(0), eq_duals])

    def system(z, jac):
        yy, nu, mu = z[:n], z[n:n + na], z[n + na:]
        r_stat = Q2 @ yy + p.q + A.T @ mu
        r_con = np.empty(na)
        hr, hc, hv, jr, jc, jv = [], [], [], [], [], []
        for grp, act, o in groups:
            if not act.size:
                continue
            val, grad, hess = _smooth_parts(grp, act, yy)
            lam = nu[o:o + act.size]
            cols = grp.cols[act]
            r_stat += np.bincount(cols.ravel(), weights=(lam[:, None] * grad).ravel(), minlength=n)
            r_con[o:o + act.size] = val
            if jac:
                r = cols.shape[1]
                hr.append(np.repeat(cols, r, axis=1).ravel())
                hc.append(np.tile(cols, (1, r)).ravel())
                hv.append((lam[:, None, None] * hess).ravel())
                jr.append(cols.ravel())
                jc.append(np.repeat(np.arange(o, o + act.size), r) + n)
                jv.append(grad.ravel())
        F = np.concatenate([r_stat, r_con, A @ yy - p.b])
        if not jac:
            return F, None
        H = Q2.tocoo()
        Ac = A.tocoo()
        rows = [H.row, Ac.col, Ac.row + n + na] + hr + jr + jc
        cols_ = [H.col, Ac.row + n + na, Ac.col] + hc + jc + jr
        data = [H.data, Ac.data, Ac.data] + hv + jv + jv
        K = sp.csc_array((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols_))),
                         shape=(z.size, z.size))
        return F, K

    try:
        F, K = system(z, True)
        for _ in range(sweeps):
            dz = _regularized_solve(K, -F, n)
            if dz is None:
                break
            fn = np.linalg.norm(F)
            for step in 0.5 ** np.arange(7):  # backtracking on the residual norm
                F_new, K_new = system(z + step * dz, True)
                if np.linalg.norm(F_new) < fn:
                    break
            else:
                break  # converged to rounding level
            z, F, K = z + step * dz, F_new, K_new
    except (RuntimeError, ValueError, np.linalg.LinAlgError):
        return None, {}
    if np.array_equal(z[:n], y):
        return ({weakest[1]: np.array([weakest[2]])} if weakest else None), {}

    y_new, nu, mu = z[:n], z[n:n + na], z[n + na:]
    if np.any(nu < 0):
        return None, {grp.name: act[nu[o:o + act.size] < 0] for grp, act, o in groups
                      if np.any(nu[o:o + act.size] < 0)}
    new = {k: np.zeros_like(v) for k, v in duals.items()}
    for grp, act, o in groups:
        lam = nu[o:o + act.size]
        if isinstance(grp, QuadGroup):
            new[grp.name][act] = lam
        else:
            tt, w = grp.parts(y_new)
            wh = w[act] / np.linalg.norm(w[act], axis=1)[:, None]
            new[grp.name][act, 0] = lam
            new[grp.name][act, 1:] = -lam[:, None] * wh
    return (y_new, new, mu), None


@dataclass(frozen=True)
class KktResidual:
    """KKT residuals of a QCQP at a primal-dual pair.

    ``stationarity`` is the Lagrangian gradient norm divided by
    ``max(1, ||q||)``, the scaling the solver itself stops on. The other
    entries are absolute.
    """

    stationarity: float
    complementarity: float
    primal_feasibility: float
    dual_feasibility: float

    def max(self) -> float:
        return max(self.stationarity, self.complementarity,
                   self.primal_feasibility, self.dual_feasibility)


def kkt_residual(p: ConvexSubproblem, sol: SubproblemSolution) -> KktResidual:
    return _kkt(p, np.asarray(sol.y_star, dtype=float), sol.duals, sol.eq_duals)


def _kkt(p: ConvexSubproblem, y, duals, eq_duals) -> KktResidual:
    grad = _stationarity(p, y, duals, eq_duals)
    comp = 0.0
    dfeas = 0.0
    for grp in p.quads:
        if grp.nc:
            lam = duals[grp.name]
            comp = max(comp, float(np.abs(lam * grp.values(y)).max()))
            dfeas = max(dfeas, float(np.maximum(-lam, 0.0).max()))
    for grp in p.socs:
        if grp.nc:
            z = duals[grp.name]
            t, w = grp.parts(y)
            comp = max(comp, float(np.abs(t * z[:, 0] + np.einsum("cp,cp->c", w, z[:, 1:])).max()))
            dfeas = max(dfeas, float(np.maximum(np.linalg.norm(z[:, 1:], axis=1) - z[:, 0], 0.0).max()))
    stat = float(np.linalg.norm(grad)) / max(1.0, float(np.linalg.norm(p.q)))
    return KktResidual(stationarity=stat, complementarity=comp,
                       primal_feasibility=p.max_violation(y), dual_feasibility=dfeas)


def _entries(out, tag, M, tol=0.0):
    for idx in zip(*np.nonzero(np.abs(M) > tol)):
        out.write(f"  {tag} {' '.join(str(int(i)) for i in idx)} {float(M[idx]):.17g}\n")


def dump(p: ConvexSubproblem, file=None) -> str:
    """Plain-text sparse dump of ``p``; returns the text and writes it to ``file`` if given.

    Format, one record per line, variable indices 0-based::

        vars <n>
        objective                 min y'Qy + q'y
          Q <i> <j> <value>       upper triangle, i <= j
          q <j> <value>
        con <id> quad <group> <k> ||F u||^2 + a.u + c <= 0 in full coordinates
          Q <i> <j> <value>       F'F, upper triangle
          a <j> <value>
          c <value>
        con <id> soc <group> <k>  ||F y + f|| <= g.y + g0
          F <row> <j> <value>
          f <row> <value>
          g <j> <value>
          g0 <value>
        eq <id>                   a.y = b
          a <j> <value>
          b <value>
    """
    out = io.StringIO()
    n = p.n
    out.write(f"vars {n}\n")
    out.write("objective\n")
    _entries(out, "Q", np.triu(p.dense_Q()))
    _entries(out, "q", p.q)
    cid = 0
    for grp in p.quads:
        for k in range(grp.nc):
            out.write(f"con {cid} quad {grp.name} {k}\n")
            Qf = np.zeros((n, n))
            cols = grp.cols[k]
            np.add.at(Qf, (cols[:, None], cols[None, :]), grp.matrix(k))
            _entries(out, "Q", np.triu(Qf))
            af = np.bincount(cols, weights=grp.a[k], minlength=n)
            _entries(out, "a", af)
            out.write(f"  c {float(grp.c[k]):.17g}\n")
            cid += 1
    for grp in p.socs:
        for k in range(grp.nc):
            out.write(f"con {cid} soc {grp.name} {k}\n")
            cols = grp.cols[k]
            Ff = np.zeros((grp.F.shape[1], n))
            np.add.at(Ff, (slice(None), cols), grp.F[k])
            _entries(out, "F", Ff)
            _entries(out, "f", grp.f[k])
            _entries(out, "g", np.bincount(cols, weights=grp.g[k], minlength=n))
            out.write(f"  g0 {float(grp.g0[k]):.17g}\n")
            cid += 1
    for r in range(p.A.shape[0]):
        out.write(f"eq {r}\n")
        _entries(out, "a", p.A[r])
        out.write(f"  b {float(p.b[r]):.17g}\n")
    text = out.getvalue()
    if file is not None:
        if hasattr(file, "write"):
            file.write(text)
        else:
            with open(file, "w") as fh:
                fh.write(text)
    return text
