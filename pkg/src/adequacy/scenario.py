"""Uncertainty sampling: outage chains, profile draws, load factor, clustering.

Scenario generation is a pure function of (system, master_seed, index):
each scenario ordinal gets its own counter-based substream, so scenario
sets are reproducible regardless of evaluation order or worker count.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import ParseError
from .model import OutageModel, SystemModel


def scenario_stream(master_seed: int, index: int) -> np.random.Generator:
    """Independent substream fully determined by (master_seed, index)."""
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(index,))
    return np.random.Generator(np.random.Philox(ss))


def sample_availability(outage: OutageModel, T: int,
                        rng: np.random.Generator) -> np.ndarray:
    """Length-T 0/1 path of the two-state availability chain.

    The initial state is drawn from the stationary distribution
    (up with probability 1-FOR); transitions follow the chain exactly.
    """
    lam, mu = outage.lam, outage.mu
    u = rng.random(T).tolist()
    path = np.empty(T, dtype=np.uint8)
    state = 1 if u[0] < 1.0 - outage.forced_outage_rate else 0
    path[0] = state
    for t in range(1, T):
        if state == 1:
            state = 0 if u[t] < mu else 1
        else:
            state = 1 if u[t] < lam else 0
        path[t] = state
    return path


@dataclass
class Scenario:
    """One realized uncertainty trajectory over the horizon.

    ``availability`` is (n_units, T) with units in system order
    (conventional, renewable, storage). ``profile_choice`` is
    (n_renewable, n_days) profile indices. ``load`` is the realized
    hourly load, load_factor * base profile.
    """

    availability: np.ndarray
    profile_choice: np.ndarray
    load_factor: float
    load: np.ndarray
    seed_id: tuple  # (master_seed, index) or (-1, -1) when hand-built

    def capacity_factors(self, system: SystemModel) -> np.ndarray:
        """(n_renewable, T) realized capacity factors from the daily choices."""
        T = system.calendar.horizon_hours
        out = np.zeros((len(system.renewable), T))
        for r, unit in enumerate(system.renewable):
            for d, hours in enumerate(system.calendar.days):
                prof = unit.profiles[self.profile_choice[r, d]]
                out[r, hours] = prof[: len(hours)]
        return out

    def bound_factor(self, system: SystemModel) -> np.ndarray:
        """(n_units, T) multiplier on x_i in every unit power bound.

        Availability for conventional and storage units; availability times
        capacity factor for renewables.
        """
        F = self.availability.astype(float)
        nG = len(system.conventional)
        nR = len(system.renewable)
        if nR:
            F[nG:nG + nR] *= self.capacity_factors(system)
        return F


def sample_scenario(system: SystemModel,
                    stream: np.random.Generator,
                    seed_id: tuple = (-1, -1)) -> Scenario:
    """Draw one scenario: independent outage paths for every unit (all three
    classes), one profile index per renewable per day, and a uniform load
    factor on the configured interval.
    """
    T = system.calendar.horizon_hours
    n_days = system.calendar.n_days
    avail = np.empty((system.n_units, T), dtype=np.uint8)
    for i, unit in enumerate(system.units):
        avail[i] = sample_availability(unit.outage, T, stream)
    nR = len(system.renewable)
    choice = np.zeros((nR, n_days), dtype=np.int16)
    for r, unit in enumerate(system.renewable):
        cum = np.cumsum(unit.probabilities)
        choice[r] = np.searchsorted(cum, stream.random(n_days), side="right")
        np.clip(choice[r], 0, len(unit.probabilities) - 1, out=choice[r])
    lo, hi = system.load_factor_range
    lf = float(stream.uniform(lo, hi)) if hi > lo else float(lo)
    return Scenario(availability=avail, profile_choice=choice, load_factor=lf,
                    load=lf * np.asarray(system.load, dtype=float),
                    seed_id=seed_id)


def sample_indexed(system: SystemModel, master_seed: int,
                   index: int) -> Scenario:
    """Scenario for a given ordinal under a master seed (replayable)."""
    return sample_scenario(system, scenario_stream(master_seed, index),
                           seed_id=(master_seed, index))


# ---------------------------------------------------------------------------
# Representative-day clustering (PAM k-medoids)


def _pam(dist: np.ndarray, k: int, rng: np.random.Generator):
    """Classic PAM: greedy BUILD then steepest-descent SWAP to a local
    optimum (no single medoid/non-medoid swap improves the objective).

    Ties are broken by lowest index for determinism; ``rng`` only breaks
    exact ties among equally good initial medoids by a fixed shuffle.
    """
    n = dist.shape[0]
    order = np.arange(n)
    # BUILD: first medoid minimizes total distance, then greedy additions
    medoids = [int(np.argmin(dist.sum(axis=1)))]
    while len(medoids) < k:
        cur = dist[:, medoids].min(axis=1)
        gains = np.maximum(cur[None, :] - dist, 0.0).sum(axis=1)
        gains[medoids] = -np.inf
        medoids.append(int(np.argmax(gains)))
    medoids = sorted(medoids)
    # SWAP
    while True:
        cur = dist[:, medoids]
        assign = cur.argmin(axis=1)
        cost = cur[order, assign].sum()
        best = (0.0, None)
        for mi in range(len(medoids)):
            trial = list(medoids)
            for h in range(n):
                if h in medoids:
                    continue
                trial[mi] = h
                new_cost = dist[:, trial].min(axis=1).sum()
                delta = new_cost - cost
                if delta < best[0] - 1e-12:
                    best = (delta, (mi, h))
        if best[1] is None:
            break
        mi, h = best[1]
        medoids[mi] = h
        medoids = sorted(medoids)
    cur = dist[:, medoids]
    assign = cur.argmin(axis=1)
    return medoids, assign, float(cur[order, assign].sum())


def cluster_profiles(daily_series: np.ndarray, k: int,
                     stream: np.random.Generator | None = None):
    """k-medoids over historical days (rows), Euclidean distance.

    Returns (medoids, probabilities, assignment): medoids are actual
    historical rows, probability of medoid j is |cluster j| / n_days.
    """
    daily = np.asarray(daily_series, dtype=float)
    if daily.ndim != 2 or daily.size == 0:
        raise ValueError("daily_series must be a nonempty 2-D array")
    n = daily.shape[0]
    if not (1 <= k <= n):
        raise ValueError(f"need 1 <= k <= {n} historical days, got k={k}")
    if stream is None:
        stream = np.random.default_rng(0)
    diff = daily[:, None, :] - daily[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=2))
    medoid_idx, assign, _ = _pam(dist, k, stream)
    counts = np.bincount(assign, minlength=k)
    return daily[medoid_idx], counts / n, assign


@dataclass
class ProfileLibrary:
    """Clustered representative daily profiles with empirical probabilities."""

    medoids: np.ndarray  # (K, hours_per_day)
    probabilities: np.ndarray  # (K,)
    cluster_sizes: np.ndarray  # (K,) ints
    source_hash: str
    k: int

    def to_json(self, path: str) -> None:
        doc = {
            "medoids": [[float(v) for v in row] for row in self.medoids],
            "probabilities": [float(v) for v in self.probabilities],
            "provenance": {"source_hash": self.source_hash, "k": self.k,
                           "cluster_sizes": [int(c) for c in self.cluster_sizes]},
        }
        with open(path, "w") as f:
            json.dump(doc, f, indent=1)

    @classmethod
    def from_json(cls, path: str) -> "ProfileLibrary":
        try:
            with open(path) as f:
                doc = json.load(f)
            prov = doc["provenance"]
            return cls(medoids=np.array(doc["medoids"], dtype=float),
                       probabilities=np.array(doc["probabilities"], dtype=float),
                       cluster_sizes=np.array(prov["cluster_sizes"], dtype=int),
                       source_hash=prov["source_hash"], k=int(prov["k"]))
        except (OSError, KeyError, json.JSONDecodeError) as e:
            raise ParseError(f"bad profile library {path!r}: {e}") from e


def build_profile_library(daily_series: np.ndarray, k: int, seed: int,
                          source_bytes: bytes = b"") -> ProfileLibrary:
    medoids, probs, assign = cluster_profiles(
        daily_series, k, np.random.default_rng(seed))
    counts = np.bincount(assign, minlength=k)
    return ProfileLibrary(
        medoids=medoids, probabilities=probs, cluster_sizes=counts,
        source_hash=hashlib.sha256(source_bytes).hexdigest(), k=k)
