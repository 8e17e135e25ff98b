"""Dense linear programming: maximize c'z subject to G z <= h and l <= z <= u.

A bounded-variable revised simplex with Dantzig pricing and a Bland
anti-cycling fallback, preceded by max-abs row/column equilibration (the
rate problems mix coefficients spanning 1e3..1e7 pairs/s, where unscaled
pivoting loses precision). Infeasible and unbounded outcomes are reported
as statuses, not exceptions. Sized for dense desk-scale problems (up to a
few thousand variables); no sparse machinery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

_FEAS_TOL = 1e-9
_RED_TOL = 1e-9


@dataclass
class LpProblem:
    """max c'z  s.t.  G z <= h,  l <= z <= u  (u may be +inf, l finite)."""

    c: np.ndarray
    G: np.ndarray
    h: np.ndarray
    l: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.G = np.atleast_2d(np.asarray(self.G, dtype=float))
        self.h = np.asarray(self.h, dtype=float)
        self.l = np.asarray(self.l, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        m, n = self.G.shape
        if self.c.shape != (n,) or self.h.shape != (m,) or self.l.shape != (n,) or self.u.shape != (n,):
            raise ValueError(
                f"inconsistent dimensions: G is {m}x{n}, c {self.c.shape}, "
                f"h {self.h.shape}, l {self.l.shape}, u {self.u.shape}"
            )
        if not np.all(np.isfinite(self.l)):
            raise ValueError("lower bounds must be finite")
        if np.any(self.l > self.u):
            raise ValueError("lower bounds must not exceed upper bounds")

    @property
    def n_rows(self) -> int:
        return self.G.shape[0]

    @property
    def n_vars(self) -> int:
        return self.G.shape[1]


@dataclass
class LpSolution:
    status: str
    z: np.ndarray | None
    objective_value: float
    y: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    iterations: int = 0
    basis: np.ndarray | None = field(default=None, repr=False)


class _Simplex:
    """Bounded-variable simplex over A x = b with l <= x <= u."""

    def __init__(self, A, b, lower, upper, basis, position):
        self.A = A
        self.b = b
        self.lower = lower
        self.upper = upper
        self.basis = basis          # column index per row
        self.position = position    # 0 at lower, 1 at upper, 2 basic
        self.iterations = 0

    def _nonbasic_values(self):
        x = np.where(self.position == 1, self.upper, self.lower)
        x[self.position == 2] = 0.0
        return x

    def solve(self, c, bland_after: int, max_iters: int):
        A, b = self.A, self.b
        m = A.shape[0]
        best_obj = -math.inf
        stall = 0
        bland = False
        x = self._nonbasic_values()

        while True:
            if self.iterations >= max_iters:
                raise RuntimeError(f"simplex iteration limit reached ({max_iters})")
            self.iterations += 1

            B = A[:, self.basis]
            x_nb = self._nonbasic_values()
            rhs = b - A @ x_nb
            x_b = np.linalg.solve(B, rhs)
            x = x_nb
            x[self.basis] = x_b

            obj = float(c @ x)
            if obj > best_obj + 1e-12 * (1.0 + abs(best_obj)):
                best_obj = obj
                stall = 0
            else:
                stall += 1
                if stall > bland_after:
                    bland = True

            y = np.linalg.solve(B.T, c[self.basis])
            red = c - A.T @ y
            at_lower = self.position == 0
            at_upper = self.position == 1
            eligible = (at_lower & (red > _RED_TOL)) | (at_upper & (red < -_RED_TOL))
            if not np.any(eligible):
                return x, y, red, obj

            candidates = np.flatnonzero(eligible)
            if bland:
                q = int(candidates[0])
            else:
                q = int(candidates[np.argmax(np.abs(red[candidates]))])
            direction = 1.0 if self.position[q] == 0 else -1.0

            w = np.linalg.solve(B, A[:, q])
            step = direction * w           # x_b decreases by step * t
            lb = self.lower[self.basis]
            ub = self.upper[self.basis]
            with np.errstate(divide="ignore", invalid="ignore"):
                t_low = np.where(step > _FEAS_TOL, (x_b - lb) / step, math.inf)
                t_high = np.where(step < -_FEAS_TOL, (ub - x_b) / (-step), math.inf)
            ratios = np.minimum(t_low, t_high)
            ratios = np.maximum(ratios, 0.0)
            t_flip = self.upper[q] - self.lower[q]

            r = int(np.argmin(ratios)) if m else 0
            t_basic = float(ratios[r]) if m else math.inf
            if bland and m and np.isfinite(t_basic):
                # smallest variable index among tying rows
                tying = np.flatnonzero(ratios <= t_basic + 1e-15)
                r = int(tying[np.argmin(self.basis[tying])])
                t_basic = float(ratios[r])

            t = min(t_basic, t_flip)
            if not np.isfinite(t):
                return None, y, red, math.inf  # unbounded direction

            if t_flip <= t_basic:
                self.position[q] = 1 - self.position[q]
                continue

            leaving = int(self.basis[r])
            hits_lower = step[r] > 0
            self.position[leaving] = 0 if hits_lower else 1
            self.position[q] = 2
            self.basis[r] = q


def _equilibrate(problem: LpProblem):
    G, h, c = problem.G, problem.h, problem.c
    row = np.max(np.abs(G), axis=1, initial=0.0)
    row[row == 0.0] = 1.0
    G1 = G / row[:, None]
    col = np.max(np.abs(G1), axis=0, initial=0.0)
    col[col == 0.0] = 1.0
    G2 = G1 / col[None, :]
    return G2, h / row, c / col, problem.l * col, problem.u * col, row, col


def solve(problem: LpProblem) -> LpSolution:
    """Solve to a vertex optimum via two-phase bounded simplex.

    Returns a solution whose `status` is one of optimal / infeasible /
    unbounded; on the optimal path `y` holds the row duals and
    `reduced_costs` the bound multipliers c - G'y of the original problem.
    """
    m, n = problem.n_rows, problem.n_vars
    G, h, c, lower_s, upper_s, row_scale, col_scale = _equilibrate(problem)

    if n == 0:
        if m == 0 or np.all(h >= -_FEAS_TOL):
            return LpSolution(OPTIMAL, np.zeros(0), 0.0, np.zeros(m), np.zeros(0))
        return LpSolution(INFEASIBLE, None, math.nan)

    if m == 0:
        take_upper = c > 0
        if np.any(take_upper & ~np.isfinite(upper_s)):
            return LpSolution(UNBOUNDED, None, math.inf)
        z_s = np.where(take_upper, upper_s, lower_s)
        z = z_s / col_scale
        return LpSolution(OPTIMAL, z, float(problem.c @ z), np.zeros(0), problem.c.copy())

    # Standard form: [G I] [z; s] = h with slacks s in [0, inf).
    n_total = n + m
    A = np.hstack([G, np.eye(m)])
    lower = np.concatenate([lower_s, np.zeros(m)])
    upper = np.concatenate([upper_s, np.full(m, math.inf)])

    slack0 = h - G @ lower_s
    bad = slack0 < -_FEAS_TOL
    n_art = int(np.count_nonzero(bad))
    basis = np.arange(n, n_total)
    position = np.zeros(n_total + n_art, dtype=np.int64)
    position[basis] = 2

    iterations = 0
    if n_art:
        art_cols = np.zeros((m, n_art))
        for k, i in enumerate(np.flatnonzero(bad)):
            art_cols[i, k] = -1.0
        A1 = np.hstack([A, art_cols])
        lower1 = np.concatenate([lower, np.zeros(n_art)])
        upper1 = np.concatenate([upper, np.full(n_art, math.inf)])
        basis1 = basis.copy()
        basis1[bad] = n_total + np.arange(n_art)
        position[basis1] = 2
        position[np.flatnonzero(bad) + n] = 0  # displaced slacks sit at lower

        c_phase1 = np.zeros(n_total + n_art)
        c_phase1[n_total:] = -1.0
        sx = _Simplex(A1, h, lower1, upper1, basis1, position)
        bland_after = 5 * (m + n_total + n_art)
        x1, _, _, obj1 = sx.solve(c_phase1, bland_after, max_iters=200 * (m + n_total) + 2000)
        iterations += sx.iterations
        if x1 is None or obj1 < -1e-7:
            return LpSolution(INFEASIBLE, None, math.nan, iterations=iterations)
        # Freeze artificials at zero and keep the basis for phase 2.
        upper1[n_total:] = 0.0
        c_phase2 = np.concatenate([c, np.zeros(m + n_art)])
        sx2 = _Simplex(A1, h, lower1, upper1, sx.basis, sx.position)
        x2, y, red, obj2 = sx2.solve(c_phase2, bland_after, max_iters=200 * (m + n_total) + 2000)
        iterations += sx2.iterations
        if x2 is None:
            return LpSolution(UNBOUNDED, None, math.inf, iterations=iterations)
        x2 = x2[:n_total]
        red = red[:n_total]
        final_basis = sx2.basis
    else:
        c_phase2 = np.concatenate([c, np.zeros(m)])
        sx2 = _Simplex(A, h, lower, upper, basis, position)
        bland_after = 5 * (m + n_total)
        x2, y, red, obj2 = sx2.solve(c_phase2, bland_after, max_iters=200 * (m + n_total) + 2000)
        iterations += sx2.iterations
        if x2 is None:
            return LpSolution(UNBOUNDED, None, math.inf, iterations=iterations)
        final_basis = sx2.basis

    z = x2[:n] / col_scale
    # Clip fp dust so callers see bound-respecting coordinates.
    z = np.minimum(np.maximum(z, problem.l), np.where(np.isfinite(problem.u), problem.u, z))
    y_orig = y / row_scale
    red_orig = (c - G.T @ y) * col_scale
    return LpSolution(
        OPTIMAL,
        z,
        float(problem.c @ z),
        y=y_orig,
        reduced_costs=red_orig,
        iterations=iterations,
        basis=final_basis,
    )


def check_feasible(problem: LpProblem, z: np.ndarray) -> float:
    """Maximum constraint/bound violation of z (0 means feasible)."""
    z = np.asarray(z, dtype=float)
    worst = 0.0
    if problem.n_rows:
        worst = float(np.max(problem.G @ z - problem.h, initial=0.0))
    worst = max(worst, float(np.max(problem.l - z, initial=0.0)))
    finite_u = np.isfinite(problem.u)
    if np.any(finite_u):
        worst = max(worst, float(np.max((z - problem.u)[finite_u], initial=0.0)))
    return max(worst, 0.0)


def verify_optimality(problem: LpProblem, sol: LpSolution, tol: float = 1e-6) -> dict:
    """KKT certificate checks for an optimal solution.

    Returns the individual residuals; every value at or below `tol`
    (scaled by the problem data) certifies vertex optimality.
    """
    if sol.status != OPTIMAL:
        raise ValueError("certificate checks require an optimal solution")
    z, y = sol.z, sol.y
    scale = 1.0 + float(np.max(np.abs(problem.h), initial=0.0))
    primal = check_feasible(problem, z) / scale
    dual_sign = float(np.max(-y, initial=0.0)) if y.size else 0.0
    slack = problem.h - problem.G @ z if problem.n_rows else np.zeros(0)
    comp_slack = float(np.max(np.abs(y * slack), initial=0.0)) / scale

    red = problem.c - (problem.G.T @ y if problem.n_rows else 0.0)
    span = np.where(np.isfinite(problem.u), problem.u - problem.l, 1.0)
    span = np.maximum(span, 1.0)
    at_lower = z <= problem.l + 1e-7 * span
    at_upper = np.isfinite(problem.u) & (z >= problem.u - 1e-7 * span)
    interior = ~(at_lower | at_upper)
    red_scale = 1.0 + float(np.max(np.abs(problem.c), initial=0.0))
    stationarity = 0.0
    if np.any(interior):
        stationarity = float(np.max(np.abs(red[interior]))) / red_scale
    sign_lower = float(np.max(red[at_lower & ~at_upper], initial=0.0)) / red_scale
    sign_upper = float(np.max(-red[at_upper & ~at_lower], initial=0.0)) / red_scale

    dual_obj = float(problem.h @ y) if problem.n_rows else 0.0
    pos = red > 0
    neg = red < 0
    dual_obj += float(np.sum(red[pos] * np.where(np.isfinite(problem.u[pos]), problem.u[pos], 0.0)))
    dual_obj += float(np.sum(red[neg] * problem.l[neg]))
    gap = abs(float(problem.c @ z) - dual_obj) / (1.0 + abs(float(problem.c @ z)))

    return {
        "primal": primal,
        "dual_sign": dual_sign,
        "complementary_slackness": comp_slack,
        "stationarity": stationarity,
        "sign_lower": sign_lower,
        "sign_upper": sign_upper,
        "duality_gap": gap,
        "ok": all(
            v <= tol
            for v in (primal, dual_sign, comp_slack, stationarity, sign_lower, sign_upper, gap)
        ),
    }


def dump_problem(problem: LpProblem) -> str:
    """Plain-text dump for external cross-checking.

    Line format: `lp <rows> <vars>` then one line each for c, the rows of
    G, h, l, u; numbers are %.17g with `inf` for unbounded entries.
    """

    def fmt(vec):
        return " ".join("inf" if math.isinf(v) else f"{v:.17g}" for v in vec)

    lines = [f"lp {problem.n_rows} {problem.n_vars}", f"c {fmt(problem.c)}"]
    lines += [f"G {fmt(row)}" for row in problem.G]
    lines += [f"h {fmt(problem.h)}", f"l {fmt(problem.l)}", f"u {fmt(problem.u)}"]
    return "\n".join(lines) + "\n"
