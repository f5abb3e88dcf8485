"""Deterministic problem data: fleet, calendar, load, economics, feasible set.

File format (version 1)
-----------------------
A system description is a single JSON document::

    {
      "format": 1,
      "calendar": {"horizon_hours": 168, "hours_per_day": 24,
                   "days_per_week": 7, "days_per_month": 30},
      "load": [...T values, MW...]   // or a relative CSV path, one value/line
      "conventional": [{"id": "...", "capacity_max": MW, "bid": $/kW-month,
                        "for": p, "mttr": hours,
                        "k_day": 1.0, "k_week": 1.0, "k_month": 1.0}, ...],
      "renewable":    [{"id", "capacity_max", "bid", "for", "mttr",
                        "profiles": [[..hours/day..], ...] or CSV path,
                        "probabilities": [...]}, ...],
      "storage":      [{"id", "capacity_max", "bid", "for", "mttr",
                        "duration": hours, "eta_charge", "eta_discharge",
                        "initial_soc": MWh (optional, default 0)}, ...],
      "economics": {"voll": $/MWh, "bid_cap": $/kW-month,
                    "load_factor_min": 0.8, "load_factor_max": 1.2},
      "constraints": [{"coefficients": {"unit_id": a_i, ...}, "rhs": b}, ...]
    }

Bids above ``bid_cap`` are clipped at ingestion with a warning record.

Capacity payments: bids are $/kW-month and capacity is MW, so the objective
coefficient per MW over the horizon is ``bid * 1000 * n_months`` where
``n_months`` is the number of month blocks in the calendar.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, PartitionError, ValidationError

DEFAULT_BID_CAP = 14.5  # $/kW-month
DEFAULT_VOLL = 100_000.0  # $/MWh


@dataclass(frozen=True)
class Calendar:
    """Nested ragged hour partitions: days within weeks within months.

    Hour indices are 0-based internally. Each day has at most
    ``hours_per_day`` hours; the final day/week/month may be short.
    """

    horizon_hours: int
    days: tuple  # tuple of np.ndarray of hour indices
    weeks: tuple
    months: tuple

    @property
    def n_days(self) -> int:
        return len(self.days)

    @property
    def n_weeks(self) -> int:
        return len(self.weeks)

    @property
    def n_months(self) -> int:
        return len(self.months)

    def day_of_hour(self) -> np.ndarray:
        """Length-T array mapping hour index -> day index."""
        out = np.empty(self.horizon_hours, dtype=np.int64)
        for d, hours in enumerate(self.days):
            out[hours] = d
        return out


def build_calendar(T: int, hours_per_day: int = 24, days_per_week: int = 7,
                   days_per_month: int = 30) -> Calendar:
    """Partition hours 0..T-1 into nested ragged days, weeks, and months.

    Weeks are groups of ``days_per_week`` consecutive days; months are groups
    of whole weeks (``round(days_per_month / days_per_week)`` of them, at
    least one) so that every week lies inside exactly one month.
    """
    if T < 1:
        raise PartitionError(f"horizon_hours must be >= 1, got {T}")
    if min(hours_per_day, days_per_week, days_per_month) < 1:
        raise PartitionError("all calendar block sizes must be >= 1")
    days = [np.arange(lo, min(lo + hours_per_day, T))
            for lo in range(0, T, hours_per_day)]
    weeks = [np.concatenate(days[i:i + days_per_week])
             for i in range(0, len(days), days_per_week)]
    weeks_per_month = max(1, round(days_per_month / days_per_week))
    months = [np.concatenate(weeks[i:i + weeks_per_month])
              for i in range(0, len(weeks), weeks_per_month)]
    return Calendar(T, tuple(days), tuple(weeks), tuple(months))


@dataclass(frozen=True)
class OutageModel:
    """Two-state availability chain parameterized by FOR and MTTR.

    Per-period repair probability lam = 1/MTTR, failure probability
    mu = FOR / ((1-FOR) * MTTR). Stationary up-probability is 1-FOR.
    """

    forced_outage_rate: float
    mttr: float

    def __post_init__(self):
        f, m = self.forced_outage_rate, self.mttr
        if not (0.0 < f < 1.0):
            raise ValidationError("forced_outage_rate", f"must be in (0,1), got {f}")
        if m < 1.0:
            raise ValidationError("mttr", f"must be >= 1 hour, got {m}")
        if self.mu >= 1.0:
            raise ValidationError(
                "outage", f"failure probability mu={self.mu:.4g} >= 1 "
                          f"(FOR={f}, MTTR={m} is not a valid chain)")

    @property
    def lam(self) -> float:
        return 1.0 / self.mttr

    @property
    def mu(self) -> float:
        f = self.forced_outage_rate
        return f / ((1.0 - f) * self.mttr)

    def transition_matrix(self) -> np.ndarray:
        """Rows/cols ordered (down, up)."""
        lam, mu = self.lam, self.mu
        return np.array([[1 - lam, lam], [mu, 1 - mu]])


@dataclass(frozen=True)
class ConventionalUnit:
    id: str
    capacity_max: float
    bid: float
    outage: OutageModel
    k_day: float = 1.0
    k_week: float = 1.0
    k_month: float = 1.0


@dataclass(frozen=True)
class RenewableUnit:
    id: str
    capacity_max: float
    bid: float
    outage: OutageModel
    profiles: np.ndarray  # (K, hours_per_day) capacity factors in [0,1]
    probabilities: np.ndarray  # (K,) simplex weights


@dataclass(frozen=True)
class StorageUnit:
    id: str
    capacity_max: float
    bid: float
    outage: OutageModel
    duration: float  # hours; energy bound is duration * x_s
    eta_charge: float = 1.0
    eta_discharge: float = 1.0
    initial_soc: float = 0.0  # MWh, fixed state of charge at hour 1


@dataclass(frozen=True)
class SystemModel:
    """Immutable deterministic half of the problem.

    Units are ordered conventional, then renewable, then storage; the
    capacity vector x follows that order everywhere.
    """

    calendar: Calendar
    conventional: tuple
    renewable: tuple
    storage: tuple
    load: np.ndarray  # (T,) MW
    voll: float = DEFAULT_VOLL
    bid_cap: float = DEFAULT_BID_CAP
    load_factor_range: tuple = (0.8, 1.2)
    # optional general rows A x <= b on top of per-unit boxes
    constraint_matrix: np.ndarray | None = None
    constraint_rhs: np.ndarray | None = None
    ingest_warnings: tuple = field(default=(), compare=False)

    @property
    def units(self) -> tuple:
        return self.conventional + self.renewable + self.storage

    @property
    def n_units(self) -> int:
        return len(self.conventional) + len(self.renewable) + len(self.storage)

    @property
    def unit_ids(self) -> list:
        return [u.id for u in self.units]

    def capacity_upper(self) -> np.ndarray:
        return np.array([u.capacity_max for u in self.units], dtype=float)

    def cost_vector(self) -> np.ndarray:
        """$/MW over the horizon: bid * 1000 * number of month blocks."""
        months = self.calendar.n_months
        return np.array([u.bid * 1000.0 * months for u in self.units])

    def feasible(self, x: np.ndarray, tol: float = 1e-7) -> bool:
        ub = self.capacity_upper()
        if np.any(x < -tol) or np.any(x > ub + tol):
            return False
        if self.constraint_matrix is not None:
            if np.any(self.constraint_matrix @ x > self.constraint_rhs + tol):
                return False
        return True


def validate_system(system: SystemModel) -> list:
    """Return a list of human-readable invariant violations (empty iff valid)."""
    out = []
    cal = system.calendar
    T = cal.horizon_hours
    for name, parts in (("days", cal.days), ("weeks", cal.weeks),
                        ("months", cal.months)):
        covered = np.concatenate(parts) if parts else np.array([], dtype=int)
        if len(covered) != T or len(np.unique(covered)) != T:
            out.append(f"calendar.{name}: partition does not cover 0..{T - 1} "
                       f"exactly once")
    for d, hours in enumerate(cal.days):
        if len(hours) > 24:
            out.append(f"calendar.days[{d}]: {len(hours)} hours > 24")
    if len(system.load) != T:
        out.append(f"load: length {len(system.load)} != horizon {T}")
    neg = np.flatnonzero(np.asarray(system.load) < 0)
    for t in neg[:5]:
        out.append(f"load[{t}]: negative value {system.load[t]}")
    for u in system.units:
        prefix = f"unit {u.id}"
        if u.capacity_max < 0:
            out.append(f"{prefix}.capacity_max: negative")
        if u.bid < 0:
            out.append(f"{prefix}.bid: negative")
        if u.bid > system.bid_cap + 1e-12:
            out.append(f"{prefix}.bid: {u.bid} exceeds bid_cap {system.bid_cap}")
    for u in system.conventional:
        for fld in ("k_day", "k_week", "k_month"):
            v = getattr(u, fld)
            if not (0.0 <= v <= 1.0):
                out.append(f"unit {u.id}.{fld}: {v} outside [0,1]")
    for u in system.renewable:
        s = float(np.sum(u.probabilities))
        if abs(s - 1.0) > 1e-12:
            out.append(f"unit {u.id}.probabilities: sum {s!r} != 1")
        if np.any(u.probabilities < 0):
            out.append(f"unit {u.id}.probabilities: negative weight")
        if np.any(u.profiles < 0) or np.any(u.profiles > 1):
            out.append(f"unit {u.id}.profiles: entries outside [0,1]")
    for u in system.storage:
        if u.duration <= 0:
            out.append(f"unit {u.id}.duration: must be > 0")
        for fld in ("eta_charge", "eta_discharge"):
            v = getattr(u, fld)
            if not (0.0 < v <= 1.0):
                out.append(f"unit {u.id}.{fld}: {v} outside (0,1]")
    if system.constraint_matrix is not None:
        A, b = system.constraint_matrix, system.constraint_rhs
        if A.shape[0] != len(b):
            out.append("constraints: matrix/rhs dimension mismatch")
        elif np.any(b < 0):
            out.append("constraints: x=0 violates A x <= b (feasible set "
                       "must contain the origin)")
    lo, hi = system.load_factor_range
    if not (lo <= hi):
        out.append(f"load_factor_range: {lo} > {hi}")
    return out


def _read_column_csv(path: str) -> np.ndarray:
    try:
        with open(path) as f:
            vals = [float(row[0]) for row in csv.reader(f) if row]
    except (OSError, ValueError, IndexError) as e:
        raise ParseError(f"cannot read load CSV {path!r}: {e}") from e
    return np.array(vals)


def _read_matrix_csv(path: str) -> np.ndarray:
    try:
        with open(path) as f:
            rows = [[float(v) for v in row] for row in csv.reader(f) if row]
    except (OSError, ValueError) as e:
        raise ParseError(f"cannot read profile CSV {path!r}: {e}") from e
    return np.array(rows)


def _outage(d: dict, where: str) -> OutageModel:
    try:
        return OutageModel(float(d["for"]), float(d["mttr"]))
    except KeyError as e:
        raise ParseError(f"{where}: missing outage field {e}") from e


def load_system(path: str) -> SystemModel:
    """Read, validate, and derive a SystemModel from a JSON system file."""
    try:
        with open(path) as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ParseError(f"cannot parse {path!r}: {e}") from e
    if doc.get("format") != 1:
        raise ParseError(f"{path!r}: missing or unsupported 'format' "
                         f"(expected 1, got {doc.get('format')!r})")
    base = os.path.dirname(os.path.abspath(path))

    try:
        cal_spec = doc["calendar"]
        cal = build_calendar(int(cal_spec["horizon_hours"]),
                             int(cal_spec.get("hours_per_day", 24)),
                             int(cal_spec.get("days_per_week", 7)),
                             int(cal_spec.get("days_per_month", 30)))
    except KeyError as e:
        raise ParseError(f"calendar: missing field {e}") from e

    load = doc.get("load")
    if isinstance(load, str):
        load = _read_column_csv(os.path.join(base, load))
    elif isinstance(load, list):
        load = np.array(load, dtype=float)
    else:
        raise ParseError("load: must be an inline array or a CSV path")

    econ = doc.get("economics", {})
    voll = float(econ.get("voll", DEFAULT_VOLL))
    bid_cap = float(econ.get("bid_cap", DEFAULT_BID_CAP))
    lf_range = (float(econ.get("load_factor_min", 0.8)),
                float(econ.get("load_factor_max", 1.2)))

    warnings = []

    def clipped_bid(d, uid):
        bid = float(d["bid"])
        if bid > bid_cap:
            warnings.append(f"unit {uid}: bid {bid} clipped to cap {bid_cap}")
            return bid_cap
        return bid

    conv = []
    for d in doc.get("conventional", []):
        uid = str(d["id"])
        conv.append(ConventionalUnit(
            id=uid, capacity_max=float(d["capacity_max"]),
            bid=clipped_bid(d, uid), outage=_outage(d, f"unit {uid}"),
            k_day=float(d.get("k_day", 1.0)),
            k_week=float(d.get("k_week", 1.0)),
            k_month=float(d.get("k_month", 1.0))))

    renew = []
    for d in doc.get("renewable", []):
        uid = str(d["id"])
        profiles = d["profiles"]
        if isinstance(profiles, str):
            profiles = _read_matrix_csv(os.path.join(base, profiles))
        else:
            profiles = np.array(profiles, dtype=float)
        renew.append(RenewableUnit(
            id=uid, capacity_max=float(d["capacity_max"]),
            bid=clipped_bid(d, uid), outage=_outage(d, f"unit {uid}"),
            profiles=profiles,
            probabilities=np.array(d["probabilities"], dtype=float)))

    stor = []
    for d in doc.get("storage", []):
        uid = str(d["id"])
        stor.append(StorageUnit(
            id=uid, capacity_max=float(d["capacity_max"]),
            bid=clipped_bid(d, uid), outage=_outage(d, f"unit {uid}"),
            duration=float(d["duration"]),
            eta_charge=float(d.get("eta_charge", 1.0)),
            eta_discharge=float(d.get("eta_discharge", 1.0)),
            initial_soc=float(d.get("initial_soc", 0.0))))

    A = b = None
    cons = doc.get("constraints", [])
    if cons:
        ids = [u.id for u in conv + renew + stor]
        idx = {uid: i for i, uid in enumerate(ids)}
        A = np.zeros((len(cons), len(ids)))
        b = np.zeros(len(cons))
        for r, row in enumerate(cons):
            for uid, coef in row["coefficients"].items():
                if uid not in idx:
                    raise ParseError(f"constraints[{r}]: unknown unit id {uid!r}")
                A[r, idx[uid]] = float(coef)
            b[r] = float(row["rhs"])

    system = SystemModel(
        calendar=cal, conventional=tuple(conv), renewable=tuple(renew),
        storage=tuple(stor), load=load, voll=voll, bid_cap=bid_cap,
        load_factor_range=lf_range, constraint_matrix=A, constraint_rhs=b,
        ingest_warnings=tuple(warnings))

    violations = validate_system(system)
    if violations:
        raise ValidationError(violations[0].split(":")[0],
                              "; ".join(violations))
    return system


def write_system(system: SystemModel, path: str) -> None:
    """Serialize a SystemModel to the version-1 JSON format (all inline)."""
    cal = system.calendar
    hours_per_day = len(cal.days[0]) if cal.days else 24
    days_per_week = (len(cal.weeks[0]) + hours_per_day - 1) // hours_per_day \
        if cal.weeks else 7
    weeks_per_month = max(1, math.ceil(len(cal.months[0]) / max(1, len(cal.weeks[0])))) \
        if cal.months and cal.weeks else 1
    doc = {
        "format": 1,
        "calendar": {"horizon_hours": cal.horizon_hours,
                     "hours_per_day": hours_per_day,
                     "days_per_week": days_per_week,
                     "days_per_month": days_per_week * weeks_per_month},
        "load": [float(v) for v in system.load],
        "economics": {"voll": system.voll, "bid_cap": system.bid_cap,
                      "load_factor_min": system.load_factor_range[0],
                      "load_factor_max": system.load_factor_range[1]},
        "conventional": [
            {"id": u.id, "capacity_max": u.capacity_max, "bid": u.bid,
             "for": u.outage.forced_outage_rate, "mttr": u.outage.mttr,
             "k_day": u.k_day, "k_week": u.k_week, "k_month": u.k_month}
            for u in system.conventional],
        "renewable": [
            {"id": u.id, "capacity_max": u.capacity_max, "bid": u.bid,
             "for": u.outage.forced_outage_rate, "mttr": u.outage.mttr,
             "profiles": [[float(v) for v in row] for row in u.profiles],
             "probabilities": [float(v) for v in u.probabilities]}
            for u in system.renewable],
        "storage": [
            {"id": u.id, "capacity_max": u.capacity_max, "bid": u.bid,
             "for": u.outage.forced_outage_rate, "mttr": u.outage.mttr,
             "duration": u.duration, "eta_charge": u.eta_charge,
             "eta_discharge": u.eta_discharge, "initial_soc": u.initial_soc}
            for u in system.storage],
    }
    if system.constraint_matrix is not None:
        ids = system.unit_ids
        doc["constraints"] = [
            {"coefficients": {ids[i]: float(a) for i, a in enumerate(row)
                              if a != 0.0},
             "rhs": float(r)}
            for row, r in zip(system.constraint_matrix, system.constraint_rhs)]
    with open(path, "w") as f:
        json.dump(doc, f, indent=1)
