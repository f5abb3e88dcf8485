"""Bounded-variable LP solving with primal and dual solutions.

Thin, contract-enforcing layer over HiGHS (via scipy.optimize.linprog).
Sign conventions under minimization: duals of <= rows are <= 0, duals of
>= rows are >= 0, equality-row duals are unrestricted; lower-bound duals
are >= 0 and upper-bound duals are <= 0. Strong duality:

    objective = dual . rhs + lower_dual . lb + upper_dual . ub
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .errors import NumericalError

LE, EQ, GE = "<", "=", ">"

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration-limit"

_STATUS = {0: OPTIMAL, 1: ITERATION_LIMIT, 2: INFEASIBLE, 3: UNBOUNDED}


@dataclass
class LpControls:
    feas_tol: float = 1e-7
    opt_tol: float = 1e-7
    gap_tol: float = 1e-6
    cs_tol: float = 1e-5
    max_iter: int = 10_000_000


@dataclass
class LpInstance:
    """min c.x  s.t.  A x (sense) rhs,  lb <= x <= ub (ub may be +inf)."""

    c: np.ndarray
    A: sparse.spmatrix  # (m, n)
    senses: np.ndarray  # (m,) of '<', '=', '>'
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray

    def check(self) -> None:
        m, n = self.A.shape
        if not (len(self.c) == len(self.lb) == len(self.ub) == n):
            raise ValueError("variable dimension mismatch")
        if not (len(self.senses) == len(self.rhs) == m):
            raise ValueError("row dimension mismatch")
        if np.any(self.lb > self.ub):
            raise ValueError("lb > ub")
        for arr in (self.c, self.rhs, self.lb):
            if np.any(np.isnan(arr)):
                raise ValueError("NaN in instance data")


@dataclass
class LpSolution:
    status: str
    x: np.ndarray = field(default_factory=lambda: np.array([]))
    dual: np.ndarray = field(default_factory=lambda: np.array([]))
    reduced_costs: np.ndarray = field(default_factory=lambda: np.array([]))
    lower_dual: np.ndarray = field(default_factory=lambda: np.array([]))
    upper_dual: np.ndarray = field(default_factory=lambda: np.array([]))
    objective: float = np.nan


def solve_lp(instance: LpInstance, controls: LpControls | None = None) -> LpSolution:
    """Solve an LpInstance; optimal solutions carry duals and reduced costs.

    Deterministic for identical inputs. Raises NumericalError on solver
    breakdown; infeasible/unbounded/iteration-limit come back as statuses.
    """
    controls = controls or LpControls()
    instance.check()
    A = instance.A.tocsr()
    senses = np.asarray(instance.senses)
    is_eq = senses == EQ
    is_ge = senses == GE
    is_le = senses == LE
    if not np.all(is_eq | is_ge | is_le):
        raise ValueError("senses must be one of '<', '=', '>'")

    A_eq = A[is_eq] if is_eq.any() else None
    b_eq = instance.rhs[is_eq] if is_eq.any() else None
    # fold >= rows in as negated <= rows
    ineq = ~is_eq
    A_ub = None
    b_ub = None
    if ineq.any():
        sign = np.where(is_ge[ineq], -1.0, 1.0)
        A_ub = sparse.diags(sign) @ A[ineq]
        b_ub = sign * instance.rhs[ineq]

    res = linprog(
        instance.c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
        bounds=np.column_stack([instance.lb, instance.ub]),
        method="highs",
        options={"presolve": True,
                 "primal_feasibility_tolerance": controls.feas_tol,
                 "dual_feasibility_tolerance": controls.opt_tol,
                 "maxiter": controls.max_iter})
    if res.status == 4:
        raise NumericalError(f"LP solver breakdown: {res.message}")
    status = _STATUS.get(res.status, INFEASIBLE)
    if status != OPTIMAL:
        return LpSolution(status=status)

    m = A.shape[0]
    dual = np.zeros(m)
    if is_eq.any():
        dual[is_eq] = res.eqlin.marginals
    if ineq.any():
        sign = np.where(is_ge[ineq], -1.0, 1.0)
        dual[ineq] = sign * res.ineqlin.marginals
    lower_dual = res.lower.marginals
    upper_dual = res.upper.marginals
    return LpSolution(
        status=OPTIMAL, x=res.x, dual=dual,
        reduced_costs=lower_dual + upper_dual,
        lower_dual=lower_dual, upper_dual=upper_dual,
        objective=float(res.fun))


def dual_objective(instance: LpInstance, sol: LpSolution) -> float:
    """Dual objective value; equals the primal objective at optimality."""
    finite_ub = np.where(np.isfinite(instance.ub), instance.ub, 0.0)
    finite_lb = np.where(np.isfinite(instance.lb), instance.lb, 0.0)
    return float(sol.dual @ instance.rhs + sol.lower_dual @ finite_lb
                 + sol.upper_dual @ finite_ub)


def write_lp_debug(instance: LpInstance, path: str) -> None:
    """Dump an instance in LP interchange text format for external checks."""
    A = instance.A.tocsr()
    lines = ["Minimize", " obj: " + " + ".join(
        f"{c:.17g} x{j}" for j, c in enumerate(instance.c) if c != 0.0)]
    lines.append("Subject To")
    op = {LE: "<=", EQ: "=", GE: ">="}
    for i in range(A.shape[0]):
        row = A.getrow(i)
        terms = " + ".join(f"{v:.17g} x{j}"
                           for j, v in zip(row.indices, row.data))
        lines.append(f" r{i}: {terms} {op[instance.senses[i]]} "
                     f"{instance.rhs[i]:.17g}")
    lines.append("Bounds")
    for j, (lo, hi) in enumerate(zip(instance.lb, instance.ub)):
        hi_s = "+inf" if np.isinf(hi) else f"{hi:.17g}"
        lines.append(f" {lo:.17g} <= x{j} <= {hi_s}")
    lines.append("End")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
