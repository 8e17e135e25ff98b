"""Exact reference solvers for small instances of the joint problem.

Two independent exact routes are provided and cross-checked in the tests:

* `enumerate_optimal` walks the Cartesian product of per-user station
  subsets (sizes up to the connectivity bound), solving the rate LP for
  each and keeping the best feasible combination, with an upper-bound
  prune per combination;
* `milp_reference` linearizes the bilinear terms with per-link big-M
  equal to the station capacity and solves the resulting MILP by plain
  depth-first branch and bound on the association variables.

Both refuse oversized instances loudly instead of approximating.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import lp_core
from .ao_optimizer import connectivity_bound, solve_rate_subproblem
from .scenario import Scenario

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"


class OracleBudgetError(RuntimeError):
    """Instance too large for an exact pass within the configured budget."""


@dataclass
class OracleResult:
    status: str
    objective: float
    x: np.ndarray | None
    r: np.ndarray | None
    evaluations: int  # rate LPs solved (enumeration) or nodes expanded (B&B)


def _per_user_choices(scenario: Scenario, bound: int) -> list[list[tuple[int, ...]]]:
    choices: list[list[tuple[int, ...]]] = []
    for j in range(scenario.n_qu):
        elig = [int(n) for n in np.flatnonzero(scenario.eligible[:, j])]
        subsets: list[tuple[int, ...]] = [] if scenario.rmin[j] > 0 else [()]
        for size in range(1, bound + 1):
            subsets.extend(itertools.combinations(elig, size))
        choices.append(subsets)
    return choices


def enumerate_optimal(
    scenario: Scenario, mode: str = "DC", max_combinations: int = 1_000_000
) -> OracleResult:
    """Exhaustive optimum over all admissible associations.

    Combinations whose capacity upper bound cannot beat the incumbent are
    skipped without an LP solve; users with positive demand never receive
    an empty subset (such combinations cannot be feasible). Raises
    OracleBudgetError when the product of per-user choice counts exceeds
    `max_combinations`.
    """
    bound = connectivity_bound(mode)
    choices = _per_user_choices(scenario, bound)
    counts = [len(c) for c in choices]
    if any(c == 0 for c in counts):
        return OracleResult(INFEASIBLE, math.nan, None, None, 0)
    total = 1
    for c in counts:
        total *= c
        if total > max_combinations:
            raise OracleBudgetError(
                f"instance too large for enumeration: more than {max_combinations} "
                f"association combinations"
            )

    N, U = scenario.n_qbs, scenario.n_qu
    rmax = scenario.rmax
    s = scenario.s

    # Seed the incumbent with a strong heuristic combination so the upper
    # bound prune bites early.
    deliver = rmax[:, None] * s
    seed_combo = []
    for j in range(U):
        pool = choices[j]
        ranked = max(pool, key=lambda sub: sum(deliver[n, j] for n in sub))
        seed_combo.append(ranked)

    best_obj = -math.inf
    best_x = best_r = None
    evaluations = 0

    def evaluate(combo) -> None:
        nonlocal best_obj, best_x, best_r, evaluations
        x = np.zeros((N, U))
        for j, subset in enumerate(combo):
            for n in subset:
                x[n, j] = 1.0
        r, status = solve_rate_subproblem(scenario, x)
        evaluations += 1
        if status == lp_core.OPTIMAL:
            obj = float(np.sum(x * r * s))
            if obj > best_obj:
                best_obj, best_x, best_r = obj, x, r

    evaluate(tuple(seed_combo))
    for combo in itertools.product(*choices):
        cap = np.zeros(N)
        for j, subset in enumerate(combo):
            for n in subset:
                if s[n, j] > cap[n]:
                    cap[n] = s[n, j]
        upper = float(rmax @ cap)
        if upper <= best_obj + 1e-9:
            continue
        evaluate(combo)

    if best_x is None:
        return OracleResult(INFEASIBLE, math.nan, None, None, evaluations)
    return OracleResult(OPTIMAL, best_obj, best_x, best_r, evaluations)


def _milp_relaxation(scenario: Scenario, bound: int):
    """LP data for the big-M linearization y = x*r, y <= rmax * x."""
    links = np.argwhere(scenario.eligible)
    L = links.shape[0]
    N, U = scenario.n_qbs, scenario.n_qu
    nv = 2 * L  # [y..., x...]
    c = np.zeros(nv)
    c[:L] = scenario.s[links[:, 0], links[:, 1]]

    rows = N + U + L + U
    G = np.zeros((rows, nv))
    h = np.zeros(rows)
    for n in range(N):
        G[n, np.flatnonzero(links[:, 0] == n)] = 1.0
        h[n] = scenario.rmax[n]
    for j in range(U):
        k = np.flatnonzero(links[:, 1] == j)
        G[N + j, k] = -scenario.s[links[k, 0], j]
        h[N + j] = -scenario.rmin[j]
    for idx, (n, j) in enumerate(links):
        G[N + U + idx, idx] = 1.0
        G[N + U + idx, L + idx] = -scenario.rmax[n]
        h[N + U + idx] = 0.0
    for j in range(U):
        G[N + U + L + j, L + np.flatnonzero(links[:, 1] == j)] = 1.0
        h[N + U + L + j] = float(bound)

    lower = np.zeros(nv)
    upper = np.concatenate([np.full(L, math.inf), np.ones(L)])
    return links, c, G, h, lower, upper


def milp_reference(
    scenario: Scenario, mode: str = "DC", node_budget: int = 100_000
) -> OracleResult:
    """Proven-optimal solution by branch and bound on the association bits.

    Branches on the most fractional association (ties to the lowest link
    index), exploring the serve-the-link child first, and prunes against
    the incumbent. Raises OracleBudgetError past `node_budget` nodes.
    """
    bound = connectivity_bound(mode)
    links, c, G, h, lower, upper = _milp_relaxation(scenario, bound)
    L = links.shape[0]
    N, U = scenario.n_qbs, scenario.n_qu
    if L == 0:
        # No eligible link at all: feasible only with zero demand.
        if np.all(scenario.rmin <= 0):
            return OracleResult(OPTIMAL, 0.0, np.zeros((N, U)), np.zeros((N, U)), 0)
        return OracleResult(INFEASIBLE, math.nan, None, None, 0)

    best_obj = -math.inf
    best_xy = None
    nodes = 0
    stack = [(lower[L:].copy(), upper[L:].copy())]
    while stack:
        lo_x, hi_x = stack.pop()
        nodes += 1
        if nodes > node_budget:
            raise OracleBudgetError(f"branch-and-bound node budget exceeded ({node_budget})")
        lb = lower.copy()
        ub = upper.copy()
        lb[L:] = lo_x
        ub[L:] = hi_x
        sol = lp_core.solve(lp_core.LpProblem(c=c, G=G, h=h, l=lb, u=ub))
        if sol.status != lp_core.OPTIMAL:
            continue
        if sol.objective_value <= best_obj + 1e-9:
            continue
        x_rel = sol.z[L:]
        frac = np.abs(x_rel - np.round(x_rel))
        if float(frac.max(initial=0.0)) <= 1e-6:
            best_obj = sol.objective_value
            best_xy = sol.z.copy()
            continue
        q = int(np.lexsort((np.arange(L), np.abs(x_rel - 0.5)))[0])
        zero_lo, zero_hi = lo_x.copy(), hi_x.copy()
        zero_hi[q] = 0.0
        one_lo, one_hi = lo_x.copy(), hi_x.copy()
        one_lo[q] = 1.0
        stack.append((zero_lo, zero_hi))  # popped second
        stack.append((one_lo, one_hi))    # explored first

    if best_xy is None:
        return OracleResult(INFEASIBLE, math.nan, None, None, nodes)
    x = np.zeros((N, U))
    r = np.zeros((N, U))
    x[links[:, 0], links[:, 1]] = np.round(best_xy[L:])
    r[links[:, 0], links[:, 1]] = best_xy[:L] * (np.round(best_xy[L:]) > 0.5)
    return OracleResult(OPTIMAL, best_obj, x, r, nodes)
