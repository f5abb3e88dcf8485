"""Second-stage load-shedding LP and its conversion to affine cuts.

Canonical variable order (T = horizon, G/R/S = unit class counts):

    LS_t                      t = 0..T-1
    p_{g,t}                   g-major, then t
    p_{r,t}                   r-major, then t
    pc_{s,t} (charge)         s-major, then t
    pd_{s,t} (discharge)      s-major, then t
    e_{s,t}                   s-major, t = 0..T (state of charge, T+1 entries)

Canonical row order:

    balance_t (=)             LS_t + sum_g p + sum_r p + sum_s (pd - pc) = load_t
    dyn_{s,t} (=)             e_{s,t+1} - e_{s,t} - eta+ pc + pd/eta- = 0
    budget rows (<=)          per conventional unit: all days, then all
                              weeks, then all months; units in order

Everything x-dependent lives in the RHS/bounds: unit power upper bounds
carry availability (times capacity factor for renewables) times x_i,
storage energy upper bounds carry H_s x_s, budget rows carry
K * |block| * x_g.  The optimal dual of this LP therefore reduces, for
cut purposes, to four numbers per scenario-independent slot:

    s     = balance duals . base load profile   (scales with load factor)
    c0    = fixed state-of-charge dual contribution (initial_soc terms)
    w     = per-(unit, t) bound duals whose bound is bound_factor * x_i
    bfix  = per-unit scenario-independent slope (budgets, energy bounds)

and the cut identity is  a + b.x = theta.(h - T x)  with
a = s * load_factor + c0,  b_i = sum_t w[i,t] * F[i,t] + bfix_i.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import NumericalError
from .lp import EQ, LE, OPTIMAL, LpControls, LpInstance, solve_lp
from .model import SystemModel
from .scenario import Scenario

SHED_EPS = 1e-6  # MWh; a day "has shed" when its total exceeds this


@dataclass(frozen=True)
class DispatchLayout:
    """Index bookkeeping for the canonical variable and row order."""

    T: int
    nG: int
    nR: int
    nS: int
    n_budget: int

    @property
    def n_vars(self) -> int:
        T = self.T
        return T + (self.nG + self.nR + 2 * self.nS) * T + self.nS * (T + 1)

    def ls(self, t):
        return t

    def pg(self, g, t):
        return self.T + g * self.T + t

    def pr(self, r, t):
        return self.T + (self.nG + r) * self.T + t

    def pc(self, s, t):
        return self.T + (self.nG + self.nR + s) * self.T + t

    def pd(self, s, t):
        return self.T + (self.nG + self.nR + self.nS + s) * self.T + t

    def e(self, s, t):
        return (self.T + (self.nG + self.nR + 2 * self.nS) * self.T
                + s * (self.T + 1) + t)


def make_layout(system: SystemModel) -> DispatchLayout:
    cal = system.calendar
    n_budget = len(system.conventional) * (cal.n_days + cal.n_weeks
                                           + cal.n_months)
    return DispatchLayout(T=cal.horizon_hours, nG=len(system.conventional),
                          nR=len(system.renewable),
                          nS=len(system.storage), n_budget=n_budget)


def _structure(system: SystemModel, layout: DispatchLayout):
    """The x- and scenario-independent constraint matrix (cached on system)."""
    cached = getattr(system, "_dispatch_structure", None)
    if cached is not None:
        return cached
    T, nG, nR, nS = layout.T, layout.nG, layout.nR, layout.nS
    rows, cols, vals = [], [], []
    r = 0
    for t in range(T):
        rows += [r] * (1 + nG + nR + 2 * nS)
        cols += ([layout.ls(t)]
                 + [layout.pg(g, t) for g in range(nG)]
                 + [layout.pr(j, t) for j in range(nR)]
                 + [layout.pd(s, t) for s in range(nS)]
                 + [layout.pc(s, t) for s in range(nS)])
        vals += [1.0] * (1 + nG + nR + nS) + [-1.0] * nS
        r += 1
    for s, unit in enumerate(system.storage):
        for t in range(T):
            rows += [r] * 4
            cols += [layout.e(s, t + 1), layout.e(s, t),
                     layout.pc(s, t), layout.pd(s, t)]
            vals += [1.0, -1.0, -unit.eta_charge, 1.0 / unit.eta_discharge]
            r += 1
    budget_meta = []  # (unit index g, K, block length)
    for g, unit in enumerate(system.conventional):
        blocks = ([(unit.k_day, h) for h in system.calendar.days]
                  + [(unit.k_week, h) for h in system.calendar.weeks]
                  + [(unit.k_month, h) for h in system.calendar.months])
        for K, hours in blocks:
            for t in hours:
                rows.append(r)
                cols.append(layout.pg(g, int(t)))
                vals.append(1.0)
            budget_meta.append((g, K, len(hours)))
            r += 1
    A = sparse.coo_matrix((vals, (rows, cols)),
                          shape=(r, layout.n_vars)).tocsr()
    senses = np.array([EQ] * (T + nS * T) + [LE] * layout.n_budget)
    object.__setattr__(system, "_dispatch_structure", (A, senses, budget_meta))
    return A, senses, budget_meta


def build_dispatch(system: SystemModel, x: np.ndarray,
                   scen: Scenario) -> LpInstance:
    """Assemble the load-shedding LP at capacity x under scenario scen."""
    layout = make_layout(system)
    if len(x) != system.n_units:
        raise ValueError(f"x has {len(x)} entries, system has "
                         f"{system.n_units} units")
    A, senses, budget_meta = _structure(system, layout)
    T, nG, nR, nS = layout.T, layout.nG, layout.nR, layout.nS
    F = scen.bound_factor(system)

    rhs = np.zeros(A.shape[0])
    rhs[:T] = scen.load
    for j, (g, K, blen) in enumerate(budget_meta):
        rhs[T + nS * T + j] = K * blen * x[g]

    lb = np.zeros(layout.n_vars)
    ub = np.empty(layout.n_vars)
    ub[:T] = np.inf  # LS
    for i in range(nG + nR + nS):
        cap = x[i] * F[i]
        if i < nG:
            ub[layout.pg(i, 0):layout.pg(i, 0) + T] = cap
        elif i < nG + nR:
            ub[layout.pr(i - nG, 0):layout.pr(i - nG, 0) + T] = cap
        else:
            s = i - nG - nR
            ub[layout.pc(s, 0):layout.pc(s, 0) + T] = cap
            ub[layout.pd(s, 0):layout.pd(s, 0) + T] = cap
    for s, unit in enumerate(system.storage):
        e0 = layout.e(s, 0)
        ub[e0:e0 + T + 1] = unit.duration * x[nG + nR + s]
        lb[e0] = unit.initial_soc
        ub[e0] = unit.initial_soc
    c = np.zeros(layout.n_vars)
    c[:T] = 1.0
    return LpInstance(c=c, A=A, senses=senses, rhs=rhs, lb=lb, ub=ub)


@dataclass
class DualVertex:
    """Reduced form of an optimal dispatch dual, sufficient for cuts."""

    s: float  # balance duals . base load profile
    c0: float  # initial-soc dual contribution (x- and scenario-independent)
    w: np.ndarray  # (n_units, T) duals of bounds scaling with bound_factor*x
    bfix: np.ndarray  # (n_units,) scenario-independent slope

    def key(self, digits: int = 9) -> bytes:
        """Rounded-coefficient hash key for deduplication."""
        parts = np.concatenate([[round(self.s, digits), round(self.c0, digits)],
                                np.round(self.w.ravel(), digits),
                                np.round(self.bfix, digits)])
        return parts.tobytes()

    @classmethod
    def zero(cls, n_units: int, T: int) -> "DualVertex":
        return cls(0.0, 0.0, np.zeros((n_units, T)), np.zeros(n_units))


@dataclass
class DispatchOutcome:
    unserved: float  # MWh
    load_shed: np.ndarray  # (T,)
    generation: np.ndarray  # (nG + nR, T)
    charge: np.ndarray  # (nS, T)
    discharge: np.ndarray  # (nS, T)
    soc: np.ndarray  # (nS, T+1)
    theta: DualVertex
    budget_duals: np.ndarray  # (n_budget,) duals of fuel-budget rows
    day_shed: np.ndarray  # (n_days,) bool, shed above SHED_EPS


def _extract_vertex(system: SystemModel, layout, sol,
                    budget_meta) -> DualVertex:
    T, nG, nR, nS = layout.T, layout.nG, layout.nR, layout.nS
    n_units = nG + nR + nS
    bal = sol.dual[:T]
    s = float(bal @ np.asarray(system.load, dtype=float))
    w = np.zeros((n_units, T))
    for g in range(nG):
        w[g] = sol.upper_dual[layout.pg(g, 0):layout.pg(g, 0) + T]
    for r in range(nR):
        w[nG + r] = sol.upper_dual[layout.pr(r, 0):layout.pr(r, 0) + T]
    for z in range(nS):
        w[nG + nR + z] = (sol.upper_dual[layout.pc(z, 0):layout.pc(z, 0) + T]
                          + sol.upper_dual[layout.pd(z, 0):layout.pd(z, 0) + T])
    bfix = np.zeros(n_units)
    bd = sol.dual[T + nS * T:]
    for j, (g, K, blen) in enumerate(budget_meta):
        bfix[g] += bd[j] * K * blen
    c0 = 0.0
    for z, unit in enumerate(system.storage):
        e0 = layout.e(z, 0)
        # e_{s,1} is fixed (lb = ub = initial_soc); SoC upper bounds for the
        # remaining steps carry duration * x_s
        c0 += (sol.lower_dual[e0] + sol.upper_dual[e0]) * unit.initial_soc
        bfix[nG + nR + z] += unit.duration * float(
            np.sum(sol.upper_dual[e0 + 1:e0 + T + 1]))
    return DualVertex(s=s, c0=c0, w=w, bfix=bfix)


def solve_dispatch(system: SystemModel, x: np.ndarray, scen: Scenario,
                   controls: LpControls | None = None) -> DispatchOutcome:
    """Solve the dispatch LP; always optimal (relatively complete recourse)."""
    layout = make_layout(system)
    inst = build_dispatch(system, x, scen)
    sol = solve_lp(inst, controls)
    if sol.status != OPTIMAL:
        raise NumericalError(f"dispatch LP ended with status {sol.status}; "
                             "recourse guarantees optimality")
    T, nG, nR, nS = layout.T, layout.nG, layout.nR, layout.nS
    v = sol.x
    ls = v[:T]
    gen = v[T:T + (nG + nR) * T].reshape(nG + nR, T) if nG + nR else \
        np.zeros((0, T))
    base = T + (nG + nR) * T
    charge = v[base:base + nS * T].reshape(nS, T) if nS else np.zeros((0, T))
    discharge = v[base + nS * T:base + 2 * nS * T].reshape(nS, T) if nS else \
        np.zeros((0, T))
    soc = v[base + 2 * nS * T:].reshape(nS, T + 1) if nS else \
        np.zeros((0, T + 1))
    _, _, budget_meta = _structure(system, layout)
    theta = _extract_vertex(system, layout, sol, budget_meta)
    day_shed = np.array([float(ls[h].sum()) > SHED_EPS
                         for h in system.calendar.days])
    return DispatchOutcome(
        unserved=float(sol.objective), load_shed=ls, generation=gen,
        charge=charge, discharge=discharge, soc=soc, theta=theta,
        budget_duals=sol.dual[T + nS * T:], day_shed=day_shed)


def cut_affine(theta: DualVertex, scen: Scenario, system: SystemModel):
    """Affine minorant (a, b) with a + b.x = theta.(h - T x) exactly.

    For the optimal dual at (x, scen) this equals U(x, scen); for any other
    cached vertex it is a valid lower bound on U(., scen) (weak duality).
    """
    a = theta.s * scen.load_factor + theta.c0
    F = scen.bound_factor(system)
    b = np.einsum("ut,ut->u", theta.w, F) + theta.bfix
    return float(a), b


def eval_dual(theta: DualVertex, scen: Scenario, system: SystemModel,
              x: np.ndarray) -> float:
    """theta.(h(scen) - T(scen) x), the cached-dual bound at x."""
    a, b = cut_affine(theta, scen, system)
    return a + float(b @ x)


def dispatch_trace(system: SystemModel, outcome: DispatchOutcome,
                   scen: Scenario) -> list:
    """Per-hour rows (hour, load, shed, conventional, renewable, discharge,
    charge, soc) for shed-distribution exports."""
    nG = len(system.conventional)
    rows = []
    for t in range(system.calendar.horizon_hours):
        rows.append({
            "hour": t,
            "load": float(scen.load[t]),
            "shed": float(outcome.load_shed[t]),
            "conventional": float(outcome.generation[:nG, t].sum()),
            "renewable": float(outcome.generation[nG:, t].sum()),
            "discharge": float(outcome.discharge[:, t].sum()),
            "charge": float(outcome.charge[:, t].sum()),
            "soc": float(outcome.soc[:, t].sum()) if outcome.soc.size else 0.0,
        })
    return rows
