"""Outer methods: stochastic DC programming, the scenario baseline and the
perfect-CSI reference.

The DC method keeps one sample set for the whole run (unless
``fresh_samples_per_iter``), so every subproblem contains its own anchor and
the objective sequence is nonincreasing up to solver accuracy.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.stats import binom

from . import dcmath
from .model import NetworkConfig, as_blocks, dbm_from_mw, in_feasible_set, sinr, total_power
from .subsolver import (OPTIMAL, INFEASIBLE, ConvexSubproblem, SocGroup, SolverSettings, build_subproblem, magnitude_rows,
                        power_groups, real_part_row, solve)
from .subsolver.dc import KAPPA_MIN
from .uncertainty import AdditiveErrorModel, RngLike, SampleSet, Stream, draw_batch

log = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITERS = "max-iters"
INIT_FAILED = "initialization-failure"


class InitializationError(RuntimeError):
    """No feasible starting point for the DC iteration was found."""

    def __init__(self, msg, violation=None):
        super().__init__(msg)
        self.violation = violation


@dataclass
class DcSettings:
    eps: float = 0.1
    M: int = 1000
    obj_tol: float = 1e-4
    max_iters: int = 50
    kappa_min: float = KAPPA_MIN
    fixed_kappa: float | None = None  # None: kappa is optimised jointly
    fresh_samples_per_iter: bool = False
    n_validate: int = 100_000
    gap_tol: float = 1e-8
    feas_tol: float = 1e-8
    init_J: int | None = None  # scenario sample count for the starting point

    def violations(self) -> list[str]:
        out = []
        if not 0 < self.eps < 1:
            out.append(f"eps={self.eps}: eps must lie in (0,1)")
        if self.M < 1:
            out.append(f"M={self.M}: need M >= 1")
        if not self.obj_tol > 0:
            out.append(f"obj_tol={self.obj_tol}: must be > 0")
        if self.max_iters < 1:
            out.append(f"max_iters={self.max_iters}: need >= 1")
        if not self.kappa_min > 0:
            out.append(f"kappa_min={self.kappa_min}: must be > 0")
        if self.fixed_kappa is not None and not self.fixed_kappa >= self.kappa_min:
            out.append(f"fixed_kappa={self.fixed_kappa}: must be >= kappa_min")
        if self.n_validate < 0:
            out.append(f"n_validate={self.n_validate}: must be >= 0")
        return out

    @property
    def mode(self) -> str:
        return "joint" if self.fixed_kappa is None else "fixed"

    def solver(self) -> SolverSettings:
        return SolverSettings(gap_tol=self.gap_tol, feas_tol=self.feas_tol)


@dataclass
class ScenarioSettings:
    J: int | None = None  # None: derived from (eps, beta, decision dimension)
    beta: float = 1e-6
    eps: float = 0.1
    rotation: bool = True  # conservative real-part restriction (the only one implemented)
    gap_tol: float = 1e-8
    feas_tol: float = 1e-8

    def violations(self) -> list[str]:
        out = []
        if self.J is not None and self.J < 1:
            out.append(f"J={self.J}: need J >= 1")
        if not 0 < self.beta < 1:
            out.append(f"beta={self.beta}: beta must lie in (0,1)")
        if not 0 < self.eps < 1:
            out.append(f"eps={self.eps}: eps must lie in (0,1)")
        if not self.rotation:
            out.append("rotation=false: only the real-part restriction is supported")
        return out


@dataclass
class IterateRecord:
    iteration: int
    objective_mw: float
    objective_dbm: float
    kappa: float
    saa_constraint: float
    solver_iterations: int = 0
    solver_time: float = 0.0
    rel_gap: float = float("nan")
    status: str = ""


@dataclass
class DcRunReport:
    status: str
    v: np.ndarray
    kappa: float
    trace: list[IterateRecord]
    violation: float = float("nan")
    violation_halfwidth: float = float("nan")
    wall_clock: float = 0.0
    init_kappa: float = float("nan")
    message: str = ""

    @property
    def objective_mw(self) -> float:
        return total_power(self.v)

    @property
    def objective_dbm(self) -> float:
        return dbm_from_mw(self.objective_mw)

    @property
    def satisfied(self) -> float:
        return 1.0 - self.violation

    @property
    def iterations(self) -> int:
        return len(self.trace) - 1

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.objective_mw for r in self.trace])

    def trace_rows(self) -> list[dict]:
        return [asdict(r) for r in self.trace]


@dataclass
class ScenarioReport:
    status: str
    v: np.ndarray | None
    power: float
    J: int
    samples: SampleSet | None = field(default=None, repr=False)
    violation: float = float("nan")
    violation_halfwidth: float = float("nan")
    iterations: int = 0
    wall_clock: float = 0.0


def _child(rng, *keys):
    """Substream ``keys`` of a Stream; a Generator is simply shared."""
    return rng.child(*keys) if isinstance(rng, Stream) else rng


# ---------------------------------------------------------------------------
# scenario approach and perfect CSI


def scenario_sample_size(eps: float, beta: float, d: int) -> int:
    """Smallest ``J`` with ``sum_{i<d} C(J,i) eps^i (1-eps)^(J-i) <= beta``."""
    if not 0 < eps < 1 or not 0 < beta < 1:
        raise ValueError("eps and beta must lie in (0, 1)")
    if d < 1:
        raise ValueError("decision dimension must be >= 1")

    def ok(J):
        return binom.cdf(d - 1, J, eps) <= beta

    lo, hi = d - 1, d
    while not ok(hi):
        lo, hi = hi, 2 * hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _sinr_soc_groups(H: np.ndarray, cfg: NetworkConfig) -> list[SocGroup]:
    """``sqrt(gamma_k) ||(h_k^H v_i)_{i != k}, sigma_k|| <= Re(h_k^H v_k)`` per sample and user."""
    J, K, N = H.shape
    nv = 2 * cfg.dim
    groups = []
    allcols = np.arange(nv)
    for k in range(K):
        sg = np.sqrt(cfg.gamma[k])
        others = [i for i in range(K) if i != k]
        F = np.zeros((J, 2 * len(others) + 1, nv))
        rows = magnitude_rows(H[:, k, :]) * sg  # (J, 2, 2N)
        for b, i in enumerate(others):
            F[:, 2 * b:2 * b + 2, i * N:(i + 1) * N] = rows[:, :, :N]
            F[:, 2 * b:2 * b + 2, cfg.dim + i * N:cfg.dim + (i + 1) * N] = rows[:, :, N:]
        f = np.zeros((J, F.shape[1]))
        f[:, -1] = sg * np.sqrt(cfg.sigma_sq[k])
        g = np.zeros((J, nv))
        gr = real_part_row(H[:, k, :])
        g[:, k * N:(k + 1) * N] = gr[:, :N]
        g[:, cfg.dim + k * N:cfg.dim + (k + 1) * N] = gr[:, N:]
        groups.append(SocGroup(f"sinr_user{k}", F, f, g, np.zeros(J), np.tile(allcols, (J, 1))))
    return groups


def sampled_sinr_problem(H, cfg: NetworkConfig) -> ConvexSubproblem:
    H = dcmath._samples(H, cfg)
    nv = 2 * cfg.dim
    return ConvexSubproblem(Q=np.eye(nv), q=np.zeros(nv), quads=power_groups(cfg, cfg.dim),
                            socs=_sinr_soc_groups(H, cfg))


def _solve_sampled(H, cfg, settings):
    p = sampled_sinr_problem(H, cfg)
    sol = solve(p, settings)
    v = sol.y_star[:cfg.dim] + 1j * sol.y_star[cfg.dim:]
    return sol, v


def perfect_csi_socp(h, cfg: NetworkConfig, settings: SolverSettings | None = None):
    """Minimum-power beamformer meeting every SINR target for the known channel ``h``.

    Returns ``(v, power)``; ``(None, inf)`` when the targets are infeasible.
    """
    sol, v = _solve_sampled(dcmath._samples(h, cfg), cfg, settings)
    if sol.status == INFEASIBLE:
        return None, float("inf")
    if sol.status != OPTIMAL:
        raise RuntimeError(f"perfect-CSI solve ended with status {sol.status}")
    return v, total_power(v)


def scenario_approach(model, cfg: NetworkConfig, settings: ScenarioSettings, rng: RngLike,
                      n_validate: int = 0):
    """Sampled SINR program over ``J`` draws; returns ``(v, ScenarioReport)``."""
    problems = settings.violations()
    if problems:
        raise ValueError("; ".join(problems))
    t0 = time.perf_counter()
    J = settings.J or scenario_sample_size(settings.eps, settings.beta, 2 * cfg.dim)
    S = draw_batch(model, J, _child(rng, "scenario"))
    sol, v = _solve_sampled(S.h, cfg, SolverSettings(settings.gap_tol, settings.feas_tol))
    if sol.status != OPTIMAL:
        rep = ScenarioReport(sol.status, None, float("inf"), J, S, iterations=sol.iterations,
                             wall_clock=time.perf_counter() - t0)
        return None, rep
    rep = ScenarioReport(OPTIMAL, v, total_power(v), J, S, iterations=sol.iterations)
    if n_validate:
        rep.violation, rep.violation_halfwidth = dcmath.violation_prob_mc(
            v, model, n_validate, _child(rng, "validate"), cfg)
    rep.wall_clock = time.perf_counter() - t0
    return v, rep


def replay_sinr(v, S, cfg: NetworkConfig) -> np.ndarray:
    """SINR of every user on every sample, ``(M, K)``."""
    H = dcmath._samples(S, cfg)
    return np.array([[sinr(v, H[m], k, cfg) for k in range(cfg.K)] for m in range(H.shape[0])])


# ---------------------------------------------------------------------------
# stochastic DC programming

_SCALES = (1.0, 1.01, 1.1, 1.25, 1.5, 2.0, 3.0, 5.0, 10.0)


def find_kappa(v, S, eps: float, cfg: NetworkConfig, kappa_min: float = KAPPA_MIN):
    """Largest ``kappa`` in ``{1, 1/2, 1/4, ..., kappa_min}`` with a nonpositive
    SAA DC constraint at ``v``; ``None`` if there is none."""
    kappa = 1.0
    while True:
        if dcmath.dc_constraint_saa(v, kappa, eps, S, cfg) <= 0:
            return kappa
        if kappa <= kappa_min:
            return None
        kappa = max(kappa / 2, kappa_min)


def initialize(model, cfg: NetworkConfig, settings: DcSettings, rng: RngLike, S=None):
    """Feasible starting point ``(v0, kappa0)`` for the DC iteration.

    ``v0`` is the scenario solution; if no ``kappa`` makes it feasible for the
    SAA DC constraint on ``S``, it is scaled up by a few fixed factors (within
    the power budgets) before giving up.
    """
    if S is None:
        S = draw_batch(model, settings.M, _child(rng, "saa"))
    J = settings.init_J or scenario_sample_size(settings.eps, 1e-6, 2 * cfg.dim)
    v0, rep = scenario_approach(model, cfg, ScenarioSettings(J=J, eps=settings.eps), _child(rng, "init"))
    if v0 is None:
        raise InitializationError(f"scenario starting point failed ({rep.status})")
    for c in _SCALES:
        v = c * v0
        if not in_feasible_set(v, cfg):
            break  # larger scalings exceed the power budgets too
        kappa = find_kappa(v, S, settings.eps, cfg, settings.kappa_min)
        if kappa is not None:
            return v, kappa
    viol = dcmath.violation_fraction(v0, S, cfg)
    raise InitializationError(
        f"no feasible kappa for the scenario start (empirical violation {viol:.4f})", viol)


def stochastic_dc(model, cfg: NetworkConfig, settings: DcSettings, rng: RngLike,
                  samples: SampleSet | None = None, init=None) -> DcRunReport:
    """Successive convex approximation of the DC-reformulated chance constraint."""
    problems = settings.violations()
    if problems:
        raise ValueError("; ".join(problems))
    t0 = time.perf_counter()
    S = samples if samples is not None else draw_batch(model, settings.M, _child(rng, "saa"))
    try:
        v, kappa = init if init is not None else initialize(model, cfg, settings, rng, S)
    except InitializationError as err:
        return DcRunReport(INIT_FAILED, None, float("nan"), [], violation=err.violation or np.nan,
                           wall_clock=time.perf_counter() - t0, message=str(err))
    v = as_blocks(v, cfg).reshape(-1).astype(complex)
    if settings.fixed_kappa is not None:
        kappa = settings.fixed_kappa
    kappa0 = kappa
    solver = settings.solver()

    def record(j, v, kappa, sol=None):
        obj = total_power(v)
        return IterateRecord(
            iteration=j, objective_mw=obj, objective_dbm=dbm_from_mw(obj) if obj > 0 else -np.inf,
            kappa=kappa, saa_constraint=dcmath.dc_constraint_saa(v, kappa, settings.eps, S, cfg),
            solver_iterations=sol.iterations if sol else 0, solver_time=sol.solve_time if sol else 0.0,
            rel_gap=sol.rel_gap if sol else float("nan"), status=sol.status if sol else "start")

    trace = [record(0, v, kappa)]
    status, message = MAX_ITERS, ""
    for j in range(1, settings.max_iters + 1):
        if settings.fresh_samples_per_iter and j > 1:
            S = draw_batch(model, settings.M, _child(rng, "saa", j))
        p = build_subproblem(v, kappa, S, settings.eps, cfg, settings)
        sol = solve(p, solver)
        if sol.status != OPTIMAL:
            status, message = sol.status, f"subproblem {j} ended with status {sol.status}"
            log.warning(message)
            break
        v, kappa, _ = p.layout.unpack(sol.y_star)
        trace.append(record(j, v, kappa, sol))
        if abs(trace[-1].objective_mw - trace[-2].objective_mw) < settings.obj_tol:
            status = CONVERGED
            break

    rep = DcRunReport(status, v, kappa, trace, init_kappa=kappa0, message=message)
    if settings.n_validate:
        rep.violation, rep.violation_halfwidth = dcmath.violation_prob_mc(
            v, model, settings.n_validate, _child(rng, "validate"), cfg)
    rep.wall_clock = time.perf_counter() - t0
    return rep


def atom_model(h, cfg: NetworkConfig) -> AdditiveErrorModel:
    """Zero-covariance model concentrated on the single channel ``h``."""
    return AdditiveErrorModel.atom(as_blocks(h, cfg, "h"))
