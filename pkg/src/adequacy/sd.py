"""Stabilized stochastic decomposition with dual caching and cut decay.

Each iteration: draw a batch of fresh scenarios, solve the dispatch LP for
every new scenario at the current iterate and at the incumbent, grow the
dual-vertex cache, rebuild the two active cuts (iterate + incumbent) via
the cache argmax over *all* scenarios so far, decay every other cut by
(k-1)/k, run the incumbent descent test, and solve the proximal master QP.

Cuts are stored in MWh units; VOLL enters only the master objective and
reported values, so cut-validity checks stay unit-free.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from .dispatch import DualVertex, cut_affine, solve_dispatch
from .errors import AdequacyError
from .model import SystemModel
from .scenario import Scenario, sample_indexed

ZERO_U_TOL = 1e-9  # below this unserved energy the zero dual is optimal
CUT_DROP_TOL = 1e-12


@dataclass
class SDConfig:
    batch_size: int = 32
    rho: float | None = None  # default: 1e-2 * median unit cost
    incumbent_ratio: float = 0.2
    master_tol: float = 1e-7
    max_samples: int = 20_000
    eue_se_target: float = 0.25  # relative EUE standard-error stopping target
    gap_threshold: float = 1e-4  # relative model gap
    gap_patience: int = 20  # consecutive small-gap iterations required
    master_seed: int = 0
    threads: int = 1
    cache_budget_floats: int = 150_000_000  # ~600 MB of f32 score cache

    def __post_init__(self):
        if not (0.0 < self.incumbent_ratio < 1.0):
            raise ValueError("incumbent_ratio must be in (0,1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.rho is not None and self.rho <= 0:
            raise ValueError("rho must be > 0")


@dataclass
class Cut:
    alpha: float
    beta: np.ndarray
    born_at: int
    kind: str  # 'candidate' | 'incumbent'
    last_refresh: int


@dataclass
class SDResult:
    x_star: np.ndarray
    objective: float  # model objective at the incumbent, $
    status: str  # 'converged' | 'max-samples'
    history: list
    iterations: int
    n_samples: int
    scenarios: list
    incumbent_U: np.ndarray  # per-scenario unserved at incumbent solves, MWh
    dual_cache_size: int
    config: SDConfig
    cuts: dict = field(default_factory=dict)  # live cuts at termination


class DualCache:
    """Growing, deduplicated set of dispatch dual vertices (reduced form)."""

    def __init__(self, n_units: int, T: int):
        self.n_units = n_units
        self.T = T
        self._index: dict = {}
        cap = 64
        self.S = np.zeros(cap)
        self.C0 = np.zeros(cap)
        self.W = np.zeros((cap, n_units, T))
        self.Bfix = np.zeros((cap, n_units))
        self.n = 0

    def __len__(self):
        return self.n

    def _grow(self):
        cap = self.S.shape[0] * 2
        for name in ("S", "C0", "W", "Bfix"):
            arr = getattr(self, name)
            new = np.zeros((cap,) + arr.shape[1:])
            new[: self.n] = arr[: self.n]
            setattr(self, name, new)

    def add(self, theta: DualVertex) -> int:
        key = theta.key()
        hit = self._index.get(key)
        if hit is not None:
            return hit
        if self.n == self.S.shape[0]:
            self._grow()
        p = self.n
        self.S[p] = theta.s
        self.C0[p] = theta.c0
        self.W[p] = theta.w
        self.Bfix[p] = theta.bfix
        self._index[key] = p
        self.n += 1
        return p

    def get(self, p: int) -> DualVertex:
        return DualVertex(float(self.S[p]), float(self.C0[p]),
                          self.W[p].copy(), self.Bfix[p].copy())


class ScenarioPool:
    """Scenario list plus stacked bound-factor tensor for fast cut math."""

    def __init__(self, system: SystemModel):
        self.system = system
        self.scenarios: list = []
        self.F = np.zeros((0, system.n_units, system.calendar.horizon_hours))
        self.lf = np.zeros(0)

    def __len__(self):
        return len(self.scenarios)

    def extend(self, scens: list):
        Fs = np.stack([s.bound_factor(self.system) for s in scens])
        self.F = np.concatenate([self.F, Fs]) if len(self.F) else Fs
        self.lf = np.concatenate([self.lf, [s.load_factor for s in scens]])
        self.scenarios.extend(scens)


class ScoreCache:
    """Memoized per-(vertex, scenario) slope-times-x building blocks.

    Entry [p, n, :] is the unit-slope vector of vertex p against scenario n,
    so the argmax score at x is a single matrix product. Bounded in memory;
    vertices past the budget are evaluated fresh each refresh.
    """

    def __init__(self, cache: DualCache, pool: ScenarioPool,
                 budget_floats: int, n_max: int):
        self.cache = cache
        self.pool = pool
        self.n_units = cache.n_units
        self.p_max = max(8, budget_floats // max(1, n_max * cache.n_units))
        self.M = np.zeros((8, 0, cache.n_units), dtype=np.float32)
        self.filled = np.zeros(8, dtype=np.int64)

    def _ensure_shape(self, P: int, N: int):
        P_alloc, N_alloc = self.M.shape[0], self.M.shape[1]
        if P <= P_alloc and N <= N_alloc:
            return
        newP = max(P_alloc, 1 << int(np.ceil(np.log2(max(P, 1)))))
        newN = max(N_alloc, 1 << int(np.ceil(np.log2(max(N, 1)))))
        newP = min(newP, self.p_max)
        M = np.zeros((newP, newN, self.n_units), dtype=np.float32)
        M[:P_alloc, :N_alloc] = self.M
        self.M = M
        f = np.zeros(newP, dtype=np.int64)
        f[:P_alloc] = self.filled
        self.filled = f

    def slopes(self) -> np.ndarray:
        """(P, N, n_units) slope tensor, cached part filled, rest computed
        fresh. Returned as (cached_view, fresh_array, split_point)."""
        P, N = self.cache.n, len(self.pool)
        Pc = min(P, self.p_max)
        self._ensure_shape(Pc, N)
        F32 = self.pool.F.astype(np.float32, copy=False)
        for p in range(Pc):
            done = self.filled[p]
            if done < N:
                self.M[p, done:N] = np.einsum(
                    "ut,nut->nu", self.cache.W[p].astype(np.float32),
                    F32[done:N])
                self.filled[p] = N
        fresh = None
        if P > Pc:
            Wo = self.cache.W[Pc:P].astype(np.float32)
            fresh = np.einsum("put,nut->pnu", Wo, F32)
        return self.M[:Pc, :N], fresh, Pc


def argmax_scores(cache: DualCache, pool: ScenarioPool, score_cache: ScoreCache,
                  x: np.ndarray):
    """Per scenario, the cache vertex maximizing theta.(h - T x) and the
    score matrix pieces needed to assemble cuts."""
    P, N = cache.n, len(pool)
    cached, fresh, Pc = score_cache.slopes()
    x32 = x.astype(np.float32)
    parts = [cached @ x32]
    if fresh is not None:
        parts.append(fresh @ x32)
    Mx = np.concatenate(parts, axis=0)  # (P, N)
    base = (np.outer(cache.S[:P], pool.lf)
            + cache.C0[:P, None]
            + (cache.Bfix[:P] @ x)[:, None])
    scores = base + Mx
    return scores.argmax(axis=0)  # ties: lowest vertex id


def build_cut_from_winners(cache: DualCache, pool: ScenarioPool,
                           winners: np.ndarray):
    """Exact (f64) average of the winning affine forms across all scenarios."""
    N = len(pool)
    n_units = cache.n_units
    sum_a = 0.0
    sum_b = np.zeros(n_units)
    for p in np.unique(winners):
        idx = np.flatnonzero(winners == p)
        sum_a += cache.S[p] * float(pool.lf[idx].sum()) + cache.C0[p] * len(idx)
        slopes = np.einsum("ut,nut->nu", cache.W[p], pool.F[idx])
        sum_b += slopes.sum(axis=0) + cache.Bfix[p] * len(idx)
    return sum_a / N, sum_b / N


def refresh_cut(cache: DualCache, pool: ScenarioPool, score_cache: ScoreCache,
                x: np.ndarray, born_at: int, kind: str, k: int) -> Cut:
    """Rebuild a cut at x: cache-argmax per scenario, then average."""
    winners = argmax_scores(cache, pool, score_cache, x)
    alpha, beta = build_cut_from_winners(cache, pool, winners)
    return Cut(alpha=alpha, beta=beta, born_at=born_at, kind=kind,
               last_refresh=k)


def decay_cuts(cuts: dict, k: int, skip: tuple = ()) -> None:
    """Scale every cut not refreshed this iteration by (k-1)/k, in place."""
    factor = (k - 1) / k
    for j, cut in cuts.items():
        if j in skip:
            continue
        cut.alpha *= factor
        cut.beta = cut.beta * factor


def incumbent_test(f_new_cand: float, f_new_inc: float, f_old_cand: float,
                   f_old_inc: float, r: float) -> bool:
    """True iff the fresh model confirms at least an r-fraction of the
    descent the previous model predicted (non-strict inequality)."""
    return (f_new_cand - f_new_inc) <= r * (f_old_cand - f_old_inc)


def model_value(cuts_alpha: np.ndarray, cuts_beta: np.ndarray,
                x: np.ndarray) -> float:
    """Piecewise-linear model of the sample-average recourse, MWh."""
    if len(cuts_alpha) == 0:
        return 0.0
    return float(np.max(cuts_alpha + cuts_beta @ x))


def solve_master(cuts_alpha, cuts_beta, c_total, voll, rho, x_bar, system,
                 tol: float = 1e-8):
    """Proximal master QP:

        min c.x + VOLL*eta + rho/2 |x - x_bar|^2
        s.t. eta >= alpha_j + beta_j.x, 0 <= x <= cap, A x <= b

    Strictly convex in x, so the minimizer is unique.
    """
    n = system.n_units
    x = cp.Variable(n)
    eta = cp.Variable()
    cons = [x >= 0, x <= system.capacity_upper(),
            eta >= cuts_alpha + cuts_beta @ x]
    if system.constraint_matrix is not None:
        cons.append(system.constraint_matrix @ x <= system.constraint_rhs)
    obj = cp.Minimize(c_total @ x + voll * eta
                      + (rho / 2.0) * cp.sum_squares(x - x_bar))
    prob = cp.Problem(obj, cons)
    try:
        prob.solve(solver=cp.CLARABEL)
    except cp.error.SolverError as e:
        raise AdequacyError(f"master QP failed: {e}") from e
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise AdequacyError(f"master QP status {prob.status} "
                            "(is the feasible set empty?)")
    xv = np.clip(np.asarray(x.value, dtype=float), 0.0,
                 system.capacity_upper())
    return xv


def master_kkt_residual(cuts_alpha, cuts_beta, c_total, voll, rho, x_bar,
                        system, x_opt) -> float:
    """Stationarity residual of the master at x_opt, via the subgradient of
    the max-of-cuts term (uniform weights over active cuts as a certificate
    candidate is not used; instead we measure the projected gradient gap)."""
    vals = cuts_alpha + cuts_beta @ x_opt
    active = vals >= vals.max() - 1e-9
    # any convex combination of active cut slopes is a subgradient of eta
    g_lo = c_total + voll * cuts_beta[active].min(axis=0) + rho * (x_opt - x_bar)
    g_hi = c_total + voll * cuts_beta[active].max(axis=0) + rho * (x_opt - x_bar)
    ub = system.capacity_upper()
    res = 0.0
    for i in range(len(x_opt)):
        lo, hi = min(g_lo[i], g_hi[i]), max(g_lo[i], g_hi[i])
        at_tol = 1e-6 * (1.0 + ub[i])
        if x_opt[i] <= at_tol:
            viol = max(0.0, -hi)  # need some subgradient >= 0
        elif x_opt[i] >= ub[i] - at_tol:
            viol = max(0.0, lo)  # need some subgradient <= 0
        else:
            viol = lo if lo > 0 else (-hi if hi < 0 else 0.0)
        res = max(res, abs(viol))
    return res


def _dispatch_many(system, x, scens, threads):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(lambda s: solve_dispatch(system, x, s), scens))
    return [solve_dispatch(system, x, s) for s in scens]


def run_sd(system: SystemModel, config: SDConfig) -> SDResult:
    """Execute stabilized stochastic decomposition until the statistical
    stopping rule fires or the sample budget is exhausted."""
    c_total = system.cost_vector()
    voll = system.voll
    rho = config.rho
    if rho is None:
        med = float(np.median(c_total)) if len(c_total) else 1.0
        rho = 1e-2 * max(med, 1.0)
    n_units = system.n_units
    T = system.calendar.horizon_hours

    cache = DualCache(n_units, T)
    pool = ScenarioPool(system)
    score_cache = ScoreCache(cache, pool, config.cache_budget_floats,
                             config.max_samples)

    x0 = np.zeros(n_units)
    if not system.feasible(x0):
        raise AdequacyError("x = 0 violates A x <= b; feasible set invalid")
    iterates = {0: x0, 1: x0}
    cuts: dict = {}
    i_prev = 0  # incumbent index; x_bar = iterates[max(i_prev, 1)]
    history = []
    incumbent_U: list = []
    gap_streak = 0
    status = "max-samples"
    t_start = time.perf_counter()

    def zero_snap(outcome):
        if outcome.unserved <= ZERO_U_TOL:
            return DualVertex.zero(n_units, T)
        return outcome.theta

    k = 0
    while len(pool) < config.max_samples:
        k += 1
        x_k = iterates[k]
        x_bar = iterates[max(i_prev, 1)]
        # --- sample a fresh batch
        n0 = len(pool)
        batch = [sample_indexed(system, config.master_seed, n0 + j)
                 for j in range(config.batch_size)]
        pool.extend(batch)
        # --- dispatch at iterate and incumbent, grow the dual cache
        out_k = _dispatch_many(system, x_k, batch, config.threads)
        same_point = np.array_equal(x_k, x_bar)
        out_bar = out_k if same_point else _dispatch_many(
            system, x_bar, batch, config.threads)
        for o in out_k:
            cache.add(zero_snap(o))
        if not same_point:
            for o in out_bar:
                cache.add(zero_snap(o))

        # --- snapshot old model for the incumbent test
        old_alpha = np.array([c.alpha for c in cuts.values()])
        old_beta = (np.array([c.beta for c in cuts.values()])
                    if cuts else np.zeros((0, n_units)))

        # --- refresh the two active cuts, decay the rest
        inc_j = max(i_prev, 1)
        cuts[k] = refresh_cut(cache, pool, score_cache, x_k, k, "candidate", k)
        decay_cuts(cuts, k, skip=(k, inc_j))
        if inc_j != k:
            cuts[inc_j] = refresh_cut(cache, pool, score_cache, x_bar,
                                      cuts[inc_j].born_at if inc_j in cuts
                                      else inc_j, "incumbent", k)
        # drop decayed-to-nothing cuts (dominated by U >= 0)
        for j in [j for j, c in cuts.items()
                  if j not in (k, inc_j)
                  and max(abs(c.alpha), np.abs(c.beta).max()) < CUT_DROP_TOL]:
            del cuts[j]

        new_alpha = np.array([c.alpha for c in cuts.values()])
        new_beta = np.array([c.beta for c in cuts.values()])

        def full_obj(alpha, beta, x):
            return float(c_total @ x) + voll * model_value(alpha, beta, x)

        # --- incumbent test on the full master objective model
        if k == 1:
            accepted = True
        else:
            accepted = incumbent_test(
                full_obj(new_alpha, new_beta, x_k),
                full_obj(new_alpha, new_beta, x_bar),
                full_obj(old_alpha, old_beta, x_k),
                full_obj(old_alpha, old_beta, x_bar),
                config.incumbent_ratio)
        i_k = k if accepted else i_prev
        x_bar_k = iterates[max(i_k, 1)]
        if accepted and i_k != inc_j:
            cuts[i_k].kind = "incumbent"
        # running U sample at the *current* incumbent: restart the tally
        # when the incumbent moves to a new point
        if accepted and not np.array_equal(x_bar_k, x_bar):
            incumbent_U = [o.unserved for o in out_k]
        else:
            incumbent_U.extend(o.unserved for o in out_bar)

        # --- proximal master
        x_next = solve_master(new_alpha, new_beta, c_total, voll, rho,
                              x_bar_k, system, config.master_tol)
        iterates[k + 1] = x_next

        # --- model gap (full objective, relative normalization)
        f_inc = full_obj(new_alpha, new_beta, x_bar_k)
        f_next = full_obj(new_alpha, new_beta, x_next)
        gap_abs = f_inc - f_next
        gap_rel = gap_abs / (1.0 + abs(f_inc))
        gap_streak = gap_streak + 1 if gap_rel <= config.gap_threshold else 0

        U_arr = np.asarray(incumbent_U)
        eue = float(U_arr.mean())
        se = float(U_arr.std(ddof=1) / np.sqrt(len(U_arr))) if len(U_arr) > 1 \
            else np.inf
        se_ratio = (se / eue) if eue > 0 else (0.0 if se == 0.0 else np.inf)

        history.append({
            "k": k, "n_samples": len(pool), "gap_rel": gap_rel,
            "gap_abs": gap_abs, "objective_incumbent": f_inc,
            "eue_incumbent": eue, "eue_se_ratio": se_ratio,
            "incumbent_updated": int(accepted),
            "dual_cache": cache.n,
            "walltime": time.perf_counter() - t_start,
        })
        i_prev = i_k

        if se_ratio <= config.eue_se_target and gap_streak >= config.gap_patience:
            status = "converged"
            break

    x_star = iterates[max(i_prev, 1)]
    final_alpha = np.array([c.alpha for c in cuts.values()])
    final_beta = np.array([c.beta for c in cuts.values()])
    objective = float(c_total @ x_star) + voll * model_value(
        final_alpha, final_beta, x_star)
    return SDResult(
        x_star=x_star, objective=objective, status=status, history=history,
        iterations=k, n_samples=len(pool), scenarios=pool.scenarios,
        incumbent_U=np.asarray(incumbent_U), dual_cache_size=cache.n,
        config=config, cuts=cuts)
