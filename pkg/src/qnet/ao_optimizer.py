"""Alternating optimization of user association and generation rates.

The joint problem maximizes the delivered rate sum(x * r * s) subject to
per-user minimum rates (C1), eligibility (C2), per-station capacities
(C3), a connectivity bound of two stations per user -- one in SC mode --
(C4), binary associations (C5) and nonnegative rates (C6). The bilinear
coupling is attacked by alternating two linear subproblems:

* rates: with the association fixed, a plain LP over the active links;
* association: the binary constraint is relaxed to [0, 1] and enforced
  through a penalty lam * sum(x - x^2), whose concave part is linearized
  at the previous iterate (minorize-maximize), giving a sequence of LPs.
  If the relaxation stays fractional the penalty is escalated; the final
  iterate is thresholded and repaired to a valid binary association.

The outer loop records the objective each iteration and returns the best
feasible iterate seen, which need not be the last one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import lp_core
from .scenario import Scenario

_BINARY_TOL = 1e-6
_RESIDUAL_TOL = 1e-6


def connectivity_bound(mode: str) -> int:
    if mode == "DC":
        return 2
    if mode == "SC":
        return 1
    raise ValueError(f"unknown mode {mode!r} (expected 'DC' or 'SC')")


@dataclass(frozen=True)
class AoConfig:
    max_outer_iters: int = 30
    outer_tol: float = 1e-4
    penalty_lambda: float | None = None  # None: 10 * (max(r*s) + 1) per call
    lambda_growth: float = 10.0
    max_lambda_escalations: int = 5
    max_mm_iters: int = 25
    mm_tol: float = 1e-9
    binarize_threshold: float = 0.5
    mode: str = "DC"

    def __post_init__(self):
        if self.max_outer_iters < 1 or self.max_mm_iters < 1:
            raise ValueError("iteration limits must be >= 1")
        if self.outer_tol <= 0 or self.mm_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.penalty_lambda is not None and self.penalty_lambda < 0:
            raise ValueError("penalty_lambda must be >= 0")
        if self.lambda_growth < 1:
            raise ValueError("lambda_growth must be >= 1")
        if not (0.0 < self.binarize_threshold < 1.0):
            raise ValueError("binarize_threshold must lie in (0, 1)")
        connectivity_bound(self.mode)

    @property
    def bound(self) -> int:
        return connectivity_bound(self.mode)


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    objective: float
    lam: float
    fractional_norm: float
    feasible: bool


@dataclass
class AoSolution:
    x: np.ndarray | None
    r: np.ndarray | None
    objective: float
    trace: list[TraceRecord]
    feasible: bool
    iterations: int
    mode: str
    message: str = ""


@dataclass
class MmResult:
    x: np.ndarray | None
    fractional: bool
    fractional_norm: float
    lam: float
    iterations: int
    # One ascent trajectory of the penalized objective per lambda level.
    penalized_trace: list[tuple[float, list[float]]] = field(default_factory=list)
    message: str = ""


def solve_rate_subproblem(scenario: Scenario, x: np.ndarray) -> tuple[np.ndarray | None, str]:
    """Optimal rates for a fixed binary association.

    Maximizes sum(s * r) over the links with x = 1, subject to per-user
    delivered minima and per-station capacities; inactive links are fixed
    at rate zero. Returns (rates, status); rates is None unless optimal.
    """
    N, U = scenario.n_qbs, scenario.n_qu
    active = np.argwhere(np.asarray(x) > 0.5)
    nv = active.shape[0]
    c = scenario.s[active[:, 0], active[:, 1]] if nv else np.zeros(0)

    G = np.zeros((U + N, nv))
    h = np.concatenate([-scenario.rmin, scenario.rmax])
    for k, (n, j) in enumerate(active):
        G[j, k] = -scenario.s[n, j]
        G[U + n, k] = 1.0
    problem = lp_core.LpProblem(
        c=c, G=G, h=h, l=np.zeros(nv), u=np.full(nv, math.inf)
    )
    sol = lp_core.solve(problem)
    if sol.status != lp_core.OPTIMAL:
        return None, sol.status
    r = np.zeros((N, U))
    r[active[:, 0], active[:, 1]] = sol.z
    return r, sol.status


def build_association_lp(
    scenario: Scenario,
    r: np.ndarray,
    x_prev: np.ndarray,
    lam: float,
    bound: int,
    fixed_cols: dict[int, np.ndarray] | None = None,
) -> lp_core.LpProblem:
    """Linearized penalized association subproblem as an LP over x in [0,1].

    Objective coefficients are r*s - lam + 2*lam*x_prev; the surrogate's
    constant term -lam*sum(x_prev^2) does not move the argmax and is added
    back by callers when they report surrogate values. Ineligible links are
    pinned to zero through their upper bound; `fixed_cols` pins whole user
    columns (used when a user's rates are all zero and the objective is
    indifferent).
    """
    N, U = scenario.n_qbs, scenario.n_qu
    rs = r * scenario.s
    c = (rs - lam + 2.0 * lam * x_prev).ravel()

    G = np.zeros((U + N + U, N * U))
    h = np.zeros(U + N + U)
    idx = np.arange(N * U).reshape(N, U)
    for j in range(U):
        G[j, idx[:, j]] = -rs[:, j]
        h[j] = -scenario.rmin[j]
    for n in range(N):
        G[U + n, idx[n, :]] = r[n, :]
        h[U + n] = scenario.rmax[n]
    for j in range(U):
        G[U + N + j, idx[:, j]] = 1.0
        h[U + N + j] = float(bound)

    lower = np.zeros(N * U)
    upper = np.where(scenario.eligible.ravel(), 1.0, 0.0)
    if fixed_cols:
        for j, col in fixed_cols.items():
            lower[idx[:, j]] = col
            upper[idx[:, j]] = col
    return lp_core.LpProblem(c=c, G=G, h=h, l=lower, u=upper)


def penalized_objective(scenario: Scenario, r: np.ndarray, x: np.ndarray, lam: float) -> float:
    """Exact objective of the penalty reformulation; the penalty vanishes on binary x."""
    return float(np.sum(x * r * scenario.s) - lam * np.sum(x - x * x))


def greedy_initial_association(scenario: Scenario, mode: str) -> np.ndarray:
    """Feasibility-leaning start: each user takes its strongest eligible
    stations, skipping stations whose projected load under equal demand
    splitting would exceed their capacity."""
    bound = connectivity_bound(mode)
    N, U = scenario.n_qbs, scenario.n_qu
    x = np.zeros((N, U))
    load = np.zeros(N)
    for j in range(U):
        elig = np.flatnonzero(scenario.eligible[:, j])
        if elig.size == 0:
            continue
        order = elig[np.lexsort((elig, -scenario.s[elig, j]))]
        share = scenario.rmin[j] / bound
        chosen = [n for n in order if load[n] + share <= scenario.rmax[n]][:bound]
        if not chosen and scenario.rmin[j] > 0:
            chosen = [int(order[0])]
        for n in chosen:
            load[n] += share
            x[n, j] = 1.0
    return x


def _round_and_repair(scenario: Scenario, r: np.ndarray, x_relaxed: np.ndarray, bound: int, threshold: float) -> np.ndarray:
    """Threshold a relaxed association and restore C2/C4.

    Users left with more than `bound` stations keep the largest r*s links;
    any resulting C1/C3 damage is the next rate solve's to judge.
    """
    x = (x_relaxed >= threshold) & scenario.eligible
    rs = r * scenario.s
    for j in range(scenario.n_qu):
        on = np.flatnonzero(x[:, j])
        if on.size > bound:
            keep = on[np.lexsort((on, -rs[on, j]))][:bound]
            x[:, j] = False
            x[keep, j] = True
    return x.astype(float)


def solve_association_mm(
    scenario: Scenario,
    r: np.ndarray,
    config: AoConfig,
    x_init: np.ndarray,
) -> MmResult:
    """Minorize-maximize loop for the association subproblem.

    Iterates LP solves of the linearized penalty surrogate until the
    iterate stops moving, escalating the penalty (up to the configured
    number of times) while the relaxation stays fractional, then rounds
    and repairs. The returned association carries a `fractional` flag when
    binarity was never reached before rounding.
    """
    bound = config.bound
    rs_max = float(np.max(r * scenario.s, initial=0.0))
    lam = config.penalty_lambda if config.penalty_lambda is not None else 10.0 * (rs_max + 1.0)

    zero_cols = np.flatnonzero(np.max(r, axis=0) <= 0.0)
    fixed_cols = {}
    if zero_cols.size:
        anchor = greedy_initial_association(scenario, config.mode)
        fixed_cols = {int(j): anchor[:, j] for j in zero_cols}

    x_prev = np.clip(np.asarray(x_init, dtype=float), 0.0, 1.0)
    total_iters = 0
    penalized_trace: list[tuple[float, list[float]]] = []
    frac_norm = math.inf

    for _ in range(config.max_lambda_escalations + 1):
        level_values: list[float] = []
        for _ in range(config.max_mm_iters):
            problem = build_association_lp(scenario, r, x_prev, lam, bound, fixed_cols)
            sol = lp_core.solve(problem)
            total_iters += 1
            if sol.status != lp_core.OPTIMAL:
                return MmResult(
                    x=None,
                    fractional=True,
                    fractional_norm=math.inf,
                    lam=lam,
                    iterations=total_iters,
                    penalized_trace=penalized_trace,
                    message=f"association LP {sol.status}",
                )
            x_new = sol.z.reshape(scenario.n_qbs, scenario.n_qu)
            level_values.append(penalized_objective(scenario, r, x_new, lam))
            delta = float(np.max(np.abs(x_new - x_prev)))
            x_prev = x_new
            if delta <= config.mm_tol:
                break
        penalized_trace.append((lam, level_values))
        frac_norm = float(np.max(np.abs(x_prev - np.round(x_prev)), initial=0.0))
        if frac_norm <= _BINARY_TOL:
            break
        lam *= config.lambda_growth

    x_final = _round_and_repair(scenario, r, x_prev, bound, config.binarize_threshold)
    return MmResult(
        x=x_final,
        fractional=frac_norm > _BINARY_TOL,
        fractional_norm=frac_norm,
        lam=lam,
        iterations=total_iters,
        penalized_trace=penalized_trace,
    )


def solution_residuals(scenario: Scenario, x: np.ndarray, r: np.ndarray, mode: str) -> dict[str, float]:
    """Scaled constraint residuals of an (x, r) pair; all <= 1e-6 means feasible."""
    bound = connectivity_bound(mode)
    delivered = np.sum(x * r * scenario.s, axis=0)
    c1 = float(np.max((scenario.rmin - delivered) / np.maximum(scenario.rmin, 1.0), initial=0.0))
    loads = np.sum(x * r, axis=1)
    c3 = float(np.max((loads - scenario.rmax) / np.maximum(scenario.rmax, 1.0), initial=0.0))
    c4 = float(np.max(np.sum(x, axis=0) - bound, initial=0.0))
    c2 = float(np.max(x[~scenario.eligible], initial=0.0))
    binary = float(np.max(np.abs(x - np.round(x)), initial=0.0))
    nonneg = float(np.max(-r, initial=0.0))
    return {"C1": c1, "C2": c2, "C3": c3, "C4": c4, "binary": binary, "nonneg": nonneg}


def _fallback_rates(scenario: Scenario) -> np.ndarray:
    # Only used when the very first rate solve is infeasible: spread each
    # station's capacity evenly so the association LP sees realistic
    # coefficients.
    r = np.where(scenario.eligible, scenario.rmax[:, None] / scenario.n_qu, 0.0)
    return r


def alternating_optimize(scenario: Scenario, config: AoConfig) -> AoSolution:
    """Outer loop alternating the rate and association subproblems.

    Stops when the recorded objective changes by less than `outer_tol`
    (relative) between consecutive feasible iterations, or at the
    iteration cap; the reported solution is the best feasible iterate.
    """
    x = greedy_initial_association(scenario, config.mode)
    trace: list[TraceRecord] = []
    best_x = best_r = None
    best_obj = -math.inf
    r_last: np.ndarray | None = None
    prev_obj: float | None = None
    lam_last = math.nan
    frac_last = 0.0
    message = ""

    iteration = 0
    for iteration in range(1, config.max_outer_iters + 1):
        r, status = solve_rate_subproblem(scenario, x)
        if status == lp_core.OPTIMAL:
            residuals = solution_residuals(scenario, x, r, config.mode)
            obj = float(np.sum(x * r * scenario.s))
            feasible = max(residuals.values()) <= _RESIDUAL_TOL
            trace.append(TraceRecord(iteration, obj, lam_last, frac_last, feasible))
            if feasible and obj > best_obj:
                best_obj, best_x, best_r = obj, x.copy(), r.copy()
            if feasible:
                if prev_obj is not None and abs(obj - prev_obj) < config.outer_tol * max(1.0, abs(prev_obj)):
                    break
                prev_obj = obj
            r_use = r
        else:
            trace.append(TraceRecord(iteration, math.nan, lam_last, frac_last, False))
            r_use = r_last if r_last is not None else _fallback_rates(scenario)

        r_last = r_use
        mm = solve_association_mm(scenario, r_use, config, x)
        if mm.x is None:
            message = mm.message
            break
        lam_last, frac_last = mm.lam, mm.fractional_norm
        x = mm.x

    if best_x is None:
        return AoSolution(
            x=None,
            r=None,
            objective=math.nan,
            trace=trace,
            feasible=False,
            iterations=iteration,
            mode=config.mode,
            message=message or "no feasible iterate found",
        )
    return AoSolution(
        x=best_x,
        r=best_r,
        objective=best_obj,
        trace=trace,
        feasible=True,
        iterations=iteration,
        mode=config.mode,
        message=message,
    )
