"""Linear programs and a dense bounded-variable revised simplex solver.

Duals follow the sensitivity convention for minimization: the dual of a row
is d(objective)/d(rhs).  A binding ``<=`` row therefore has a non-positive
dual and a binding ``>=`` row a non-negative one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

INF = math.inf

LE, GE, EQ = "<=", ">=", "=="


class LpError(RuntimeError):
    """Numerical failure of the solver."""


class LinearProgram:
    def __init__(self, name: str = "lp"):
        self.name = name
        self.var_names: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.cost: list[float] = []
        self.con_names: list[str] = []
        self.rows: list[dict[int, float]] = []
        self.sense: list[str] = []
        self.rhs: list[float] = []
        self._vidx: dict[str, int] = {}
        self._cidx: dict[str, int] = {}

    @property
    def num_vars(self) -> int:
        return len(self.var_names)

    @property
    def num_constraints(self) -> int:
        return len(self.con_names)

    def add_variable(self, name: str, lb: float = 0.0, ub: float = INF, cost: float = 0.0) -> int:
        if name in self._vidx:
            raise ValueError(f"duplicate variable {name}")
        if lb > ub:
            raise ValueError(f"variable {name}: lower bound {lb} > upper bound {ub}")
        self._vidx[name] = len(self.var_names)
        self.var_names.append(name)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.cost.append(float(cost))
        return self._vidx[name]

    def var(self, name: str) -> int:
        return self._vidx[name]

    def has_var(self, name: str) -> bool:
        return name in self._vidx

    def con(self, name: str) -> int:
        return self._cidx[name]

    def has_con(self, name: str) -> bool:
        return name in self._cidx

    def add_constraint(self, name: str, coeffs: Mapping, sense: str, rhs: float) -> int:
        if name in self._cidx:
            raise ValueError(f"duplicate constraint {name}")
        if sense not in (LE, GE, EQ):
            raise ValueError(f"bad relation {sense!r}")
        row: dict[int, float] = {}
        for key, val in coeffs.items():
            j = self._vidx.get(key, -1) if isinstance(key, str) else int(key)
            if not 0 <= j < self.num_vars:
                raise ValueError(f"constraint {name} references undeclared variable {key}")
            row[j] = row.get(j, 0.0) + float(val)
        self._cidx[name] = len(self.con_names)
        self.con_names.append(name)
        self.rows.append(row)
        self.sense.append(sense)
        self.rhs.append(float(rhs))
        return self._cidx[name]

    def dense(self) -> np.ndarray:
        A = np.zeros((self.num_constraints, self.num_vars))
        for i, row in enumerate(self.rows):
            for j, v in row.items():
                A[i, j] = v
        return A

    def to_mps(self) -> str:
        """Free-form MPS dump for cross-checking with external solvers."""
        kind = {LE: "L", GE: "G", EQ: "E"}
        out = [f"NAME {self.name}", "ROWS", " N obj"]
        out += [f" {kind[s]} r{i}" for i, s in enumerate(self.sense)]
        cols: dict[int, list[tuple[int, float]]] = {j: [] for j in range(self.num_vars)}
        for i, row in enumerate(self.rows):
            for j, v in row.items():
                cols[j].append((i, v))
        out.append("COLUMNS")
        for j in range(self.num_vars):
            if self.cost[j]:
                out.append(f" x{j} obj {self.cost[j]!r}")
            for i, v in cols[j]:
                out.append(f" x{j} r{i} {v!r}")
        out.append("RHS")
        out += [f" rhs r{i} {b!r}" for i, b in enumerate(self.rhs) if b]
        out.append("BOUNDS")
        for j in range(self.num_vars):
            lo, hi = self.lb[j], self.ub[j]
            if lo == hi:
                out.append(f" FX bnd x{j} {lo!r}")
                continue
            if lo == -INF and hi == INF:
                out.append(f" FR bnd x{j}")
                continue
            if lo == -INF:
                out.append(f" MI bnd x{j}")
            elif lo != 0.0:
                out.append(f" LO bnd x{j} {lo!r}")
            if hi != INF:
                out.append(f" UP bnd x{j} {hi!r}")
        out.append("ENDATA")
        return "\n".join(out) + "\n"


@dataclass
class LpSolution:
    status: str  # optimal | infeasible | unbounded
    x: np.ndarray
    objective: float
    duals: np.ndarray
    reduced_costs: np.ndarray
    iterations: int = 0
    lp: LinearProgram | None = field(default=None, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def value(self, name: str) -> float:
        return float(self.x[self.lp.var(name)])

    def dual(self, name: str) -> float:
        return float(self.duals[self.lp.con(name)])

    def dual_objective(self) -> float:
        """Lagrangian dual value b'y + sum of bound terms of the reduced costs."""
        lp = self.lp
        val = float(np.dot(lp.rhs, self.duals))
        for j, d in enumerate(self.reduced_costs):
            if d > 0 and lp.lb[j] > -INF:
                val += d * lp.lb[j]
            elif d < 0 and lp.ub[j] < INF:
                val += d * lp.ub[j]
            elif d != 0:
                # at a finite bound the variable sits on, use it
                val += d * self.x[j]
        return val


# Nonbasic status codes
_LOWER, _UPPER, _FREE, _BASIC = 0, 1, 2, 3


class _Simplex:
    def __init__(self, A, b, c, lb, ub, *, max_iter=50000, refactor=80):
        self.A, self.b, self.c = A, b, c
        self.lb, self.ub = lb, ub
        self.m, self.n = A.shape
        self.max_iter = max_iter
        self.refactor = refactor
        self.iterations = 0
        scale = max(1.0, float(np.max(np.abs(b))) if b.size else 1.0)
        self.feas_tol = 1e-9 * scale
        self.piv_tol = 1e-9

    def _nonbasic_start(self, j):
        if self.lb[j] > -INF:
            return self.lb[j], _LOWER
        if self.ub[j] < INF:
            return self.ub[j], _UPPER
        return 0.0, _FREE

    def setup(self):
        m, n = self.m, self.n
        x = np.zeros(n)
        status = np.empty(n, dtype=int)
        for j in range(n):
            x[j], status[j] = self._nonbasic_start(j)
        # logicals are the last m structural columns by construction
        r = self.b - self.A @ x
        basis = np.empty(m, dtype=int)
        art_cols = []
        for i in range(m):
            j = self.n_struct + i
            lo, hi = self.lb[j], self.ub[j]
            val = x[j] + r[i]
            if lo - self.feas_tol <= val <= hi + self.feas_tol:
                x[j] = val
                basis[i] = j
                status[j] = _BASIC
            else:
                art_cols.append((i, 1.0 if r[i] >= 0 else -1.0, abs(r[i])))
        if art_cols:
            k = len(art_cols)
            extra = np.zeros((m, k))
            for a, (i, sgn, _) in enumerate(art_cols):
                extra[i, a] = sgn
            self.A = np.hstack([self.A, extra])
            self.c = np.concatenate([self.c, np.zeros(k)])
            self.lb = np.concatenate([self.lb, np.zeros(k)])
            self.ub = np.concatenate([self.ub, np.full(k, INF)])
            x = np.concatenate([x, [v for _, _, v in art_cols]])
            status = np.concatenate([status, np.full(k, _BASIC)])
            for a, (i, _, _) in enumerate(art_cols):
                basis[i] = self.n + a
            self.n += k
        self.x, self.status, self.basis = x, status, basis
        self.n_art = len(art_cols)
        self.Binv = np.linalg.inv(self.A[:, basis])

    def _refactor(self):
        B = self.A[:, self.basis]
        self.Binv = np.linalg.inv(B)
        nb = self.status != _BASIC
        rhs = self.b - self.A[:, nb] @ self.x[nb]
        self.x[self.basis] = np.linalg.solve(B, rhs)

    def run(self, cost):
        """Primal simplex on ``cost``; returns 'optimal' or 'unbounded'."""
        degenerate = 0
        since_refactor = 0
        cost_scale = max(1.0, float(np.max(np.abs(cost))))
        opt_tol = 1e-9 * cost_scale
        while True:
            if self.iterations >= self.max_iter:
                raise LpError(f"iteration limit {self.max_iter} reached")
            if since_refactor >= self.refactor:
                self._refactor()
                since_refactor = 0
            y = cost[self.basis] @ self.Binv
            d = cost - y @ self.A
            st = self.status
            movable = self.lb < self.ub
            can_up = ((st == _LOWER) | (st == _FREE)) & movable & (d < -opt_tol)
            can_dn = ((st == _UPPER) | (st == _FREE)) & movable & (d > opt_tol)
            cand = np.flatnonzero(can_up | can_dn)
            if cand.size == 0:
                return "optimal"
            bland = degenerate > 50
            q = int(cand[0]) if bland else int(cand[np.argmax(np.abs(d[cand]))])
            direction = 1.0 if can_up[q] else -1.0

            w = self.Binv @ self.A[:, q]
            delta = -direction * w
            xb = self.x[self.basis]
            lbb, ubb = self.lb[self.basis], self.ub[self.basis]
            with np.errstate(divide="ignore", invalid="ignore"):
                t_lo = np.where((delta < -self.piv_tol) & np.isfinite(lbb),
                                (xb - lbb) / -delta, INF)
                t_hi = np.where((delta > self.piv_tol) & np.isfinite(ubb),
                                (ubb - xb) / delta, INF)
            t_row = np.maximum(np.minimum(t_lo, t_hi), 0.0)
            t_flip = self.ub[q] - self.lb[q]
            t_min = float(np.min(t_row)) if t_row.size else INF
            if t_flip <= t_min:
                if t_flip == INF:
                    return "unbounded"
                t = t_flip
                r = -1
            else:
                t = t_min
                ties = np.flatnonzero(t_row <= t_min + 1e-12 * max(1.0, t_min))
                if bland:
                    r = int(ties[np.argmin(self.basis[ties])])
                else:
                    r = int(ties[np.argmax(np.abs(w[ties]))])
            self.iterations += 1
            degenerate = degenerate + 1 if t <= 1e-12 else 0

            self.x[q] += direction * t
            self.x[self.basis] += delta * t
            if r < 0:
                self.status[q] = _UPPER if direction > 0 else _LOWER
                self.x[q] = self.ub[q] if direction > 0 else self.lb[q]
                continue
            leave = self.basis[r]
            if delta[r] < 0:
                self.x[leave] = self.lb[leave]
                self.status[leave] = _LOWER
            else:
                self.x[leave] = self.ub[leave]
                self.status[leave] = _UPPER
            self.status[q] = _BASIC
            self.basis[r] = q
            piv = w[r]
            row = self.Binv[r, :] / piv
            self.Binv -= np.outer(w, row)
            self.Binv[r, :] = row
            since_refactor += 1


def _standard_form(lp: LinearProgram):
    A = lp.dense()
    m = lp.num_constraints
    c = np.array(lp.cost)
    lb = np.array(lp.lb)
    ub = np.array(lp.ub)
    log_lb = np.array([0.0 if s == LE else (-INF if s == GE else 0.0) for s in lp.sense])
    log_ub = np.array([INF if s == LE else 0.0 for s in lp.sense])
    A_full = np.hstack([A, np.eye(m)])
    return (A_full, np.array(lp.rhs), np.concatenate([c, np.zeros(m)]),
            np.concatenate([lb, log_lb]), np.concatenate([ub, log_ub]))


def solve_simplex(lp: LinearProgram, max_iter: int = 50000) -> LpSolution:
    n = lp.num_vars
    m = lp.num_constraints
    A, b, c, lb, ub = _standard_form(lp)
    if m == 0:
        # separable: every variable goes to its cheaper bound
        cost = np.array(lp.cost)
        x = np.zeros(n)
        for j in range(n):
            lo, hi = lp.lb[j], lp.ub[j]
            target = lo if cost[j] > 0 else hi if cost[j] < 0 else (lo if lo > -INF else min(hi, 0.0))
            if not math.isfinite(target):
                return LpSolution("unbounded", x, -INF, np.zeros(0), cost, 0, lp)
            x[j] = target
        return LpSolution("optimal", x, float(cost @ x), np.zeros(0), cost, 0, lp)
    sx = _Simplex(A, b, c, lb, ub, max_iter=max_iter)
    sx.n_struct = n
    sx.setup()
    if sx.n_art:
        phase1 = np.zeros(sx.n)
        phase1[-sx.n_art:] = 1.0
        sx.run(phase1)
        sx._refactor()
        infeas = float(np.sum(sx.x[-sx.n_art:]))
        if infeas > 1e-7 * max(1.0, float(np.max(np.abs(b)))):
            return LpSolution("infeasible", sx.x[:n].copy(), INF, np.zeros(m), np.zeros(n),
                              sx.iterations, lp)
        sx.ub[-sx.n_art:] = 0.0
        for j in range(sx.n - sx.n_art, sx.n):
            if sx.status[j] != _BASIC:
                sx.status[j] = _LOWER
                sx.x[j] = 0.0
    status = sx.run(sx.c)
    sx._refactor()
    x = sx.x[:n].copy()
    if status == "unbounded":
        return LpSolution("unbounded", x, -INF, np.zeros(m), np.zeros(n), sx.iterations, lp)
    B = sx.A[:, sx.basis]
    y = np.linalg.solve(B.T, sx.c[sx.basis])
    d = np.array(lp.cost) - y @ A[:, :n]
    obj = float(np.dot(lp.cost, x))
    return LpSolution("optimal", x, obj, y, d, sx.iterations, lp)


def solve_highs(lp: LinearProgram) -> LpSolution:
    """Same contract through scipy's HiGHS; used as an independent cross-check."""
    from scipy.optimize import linprog

    A = lp.dense()
    sense = np.array(lp.sense)
    b = np.array(lp.rhs)
    le, ge, eq = sense == LE, sense == GE, sense == EQ
    A_ub = np.vstack([A[le], -A[ge]])
    b_ub = np.concatenate([b[le], -b[ge]])
    bounds = [(None if lo == -INF else lo, None if hi == INF else hi) for lo, hi in zip(lp.lb, lp.ub)]
    res = linprog(lp.cost, A_ub=A_ub if A_ub.size else None, b_ub=b_ub if A_ub.size else None,
                  A_eq=A[eq] if eq.any() else None, b_eq=b[eq] if eq.any() else None,
                  bounds=bounds, method="highs")
    m = lp.num_constraints
    if res.status == 2:
        return LpSolution("infeasible", np.zeros(lp.num_vars), INF, np.zeros(m), np.zeros(lp.num_vars), 0, lp)
    if res.status == 3:
        return LpSolution("unbounded", np.zeros(lp.num_vars), -INF, np.zeros(m), np.zeros(lp.num_vars), 0, lp)
    if res.status != 0:
        raise LpError(res.message)
    y = np.zeros(m)
    nle = int(le.sum())
    if A_ub.size:
        marg = res.ineqlin.marginals
        y[np.flatnonzero(le)] = marg[:nle]
        y[np.flatnonzero(ge)] = -marg[nle:]
    if eq.any():
        y[np.flatnonzero(eq)] = res.eqlin.marginals
    d = res.lower.marginals + res.upper.marginals
    return LpSolution("optimal", res.x, float(res.fun), y, d, int(res.nit), lp)


BACKENDS = {"simplex": solve_simplex, "highs": solve_highs}


def solve(lp: LinearProgram, backend: str = "simplex") -> LpSolution:
    return BACKENDS[backend](lp)


def check_solution(sol: LpSolution) -> dict[str, float]:
    """Primal residual, duality gap and complementary slackness of an optimal solution."""
    lp = sol.lp
    A = lp.dense()
    ax = A @ sol.x
    b = np.array(lp.rhs)
    scale = 1.0 + float(np.max(np.abs(b))) if b.size else 1.0
    viol = 0.0
    for i, s in enumerate(lp.sense):
        if s == LE:
            viol = max(viol, ax[i] - b[i])
        elif s == GE:
            viol = max(viol, b[i] - ax[i])
        else:
            viol = max(viol, abs(ax[i] - b[i]))
    lbv = np.maximum(np.array(lp.lb) - sol.x, 0.0)
    ubv = np.maximum(sol.x - np.array(lp.ub), 0.0)
    viol = max(viol, float(np.max(lbv, initial=0.0)), float(np.max(ubv, initial=0.0)))
    slack = b - ax
    cs = float(np.sum(np.abs(sol.duals * slack)))
    gap = abs(sol.objective - sol.dual_objective())
    return {"primal_residual": viol / scale,
            "duality_gap": gap / (1.0 + abs(sol.objective)),
            "complementary_slackness": cs / (1.0 + abs(sol.objective))}
