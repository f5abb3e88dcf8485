import numpy as np
import pytest

from adequacy.model import (ConventionalUnit, OutageModel, RenewableUnit,
                            StorageUnit, SystemModel, build_calendar)
from adequacy.scenario import Scenario


def make_scenario(system, lf=1.0, availability=None, profile_choice=None):
    """Hand-built scenario; defaults to everything available."""
    T = system.calendar.horizon_hours
    if availability is None:
        availability = np.ones((system.n_units, T), dtype=np.uint8)
    nR = len(system.renewable)
    if profile_choice is None:
        profile_choice = np.zeros((nR, system.calendar.n_days), dtype=np.int16)
    return Scenario(availability=np.asarray(availability, dtype=np.uint8),
                    profile_choice=profile_choice, load_factor=float(lf),
                    load=float(lf) * np.asarray(system.load, dtype=float),
                    seed_id=(-1, -1))


def random_small_system(rng, n_units_max=3, T_max=6, force_storage=False):
    """Small random system (T <= 6, <= 3 units) for oracle cross-checks."""
    T = int(rng.integers(2, T_max + 1))
    cal = build_calendar(T, hours_per_day=int(rng.integers(2, T + 1)),
                         days_per_week=2, days_per_month=2)
    n_units = int(rng.integers(1, n_units_max + 1))
    conv, renew, stor = [], [], []
    kinds = ["conv"] * n_units
    if force_storage or (n_units > 1 and rng.random() < 0.5):
        kinds[-1] = "stor"
    if n_units > 1 and rng.random() < 0.4:
        kinds[0] = "renew"
    for i, kind in enumerate(kinds):
        cap = float(rng.uniform(5, 30))
        om = OutageModel(float(rng.uniform(0.02, 0.2)),
                         float(rng.uniform(4, 20)))
        if kind == "conv":
            conv.append(ConventionalUnit(
                f"g{i}", cap, float(rng.uniform(1, 10)), om,
                k_day=float(rng.uniform(0.3, 1.0)),
                k_week=float(rng.uniform(0.5, 1.0))))
        elif kind == "renew":
            hpd = len(cal.days[0])
            profiles = rng.uniform(0, 1, size=(2, hpd))
            renew.append(RenewableUnit(
                f"r{i}", cap, float(rng.uniform(1, 10)), om,
                profiles=profiles, probabilities=np.array([0.6, 0.4])))
        else:
            stor.append(StorageUnit(
                f"s{i}", cap, float(rng.uniform(1, 10)), om,
                duration=float(rng.uniform(1, 4)),
                eta_charge=float(rng.uniform(0.8, 1.0)),
                eta_discharge=float(rng.uniform(0.8, 1.0))))
    load = rng.uniform(5, 40, size=T)
    return SystemModel(calendar=cal, conventional=tuple(conv),
                       renewable=tuple(renew), storage=tuple(stor),
                       load=load, voll=10_000.0)


def random_scenario(system, rng):
    T = system.calendar.horizon_hours
    avail = (rng.random((system.n_units, T)) > 0.25).astype(np.uint8)
    nR = len(system.renewable)
    choice = rng.integers(0, 2, size=(nR, system.calendar.n_days),
                          dtype=np.int16)
    lf = float(rng.uniform(0.8, 1.2))
    return Scenario(availability=avail, profile_choice=choice, load_factor=lf,
                    load=lf * np.asarray(system.load, dtype=float),
                    seed_id=(-1, -1))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
