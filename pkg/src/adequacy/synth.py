"""Synthetic desk-scale systems for demos, tests, and benchmarks."""

from __future__ import annotations

import numpy as np

from .model import ConventionalUnit, OutageModel, RenewableUnit, StorageUnit, \
    SystemModel, build_calendar

NEAR_ZERO_FOR = 1e-9  # disables the outage chain in practice


def _daily_load_shape(hours: int) -> np.ndarray:
    t = np.arange(hours)
    base = 0.72 + 0.2 * np.exp(-((t - 18.5) % 24 - 0.0) ** 2 / 8.0) \
        + 0.12 * np.exp(-((t - 8.0) ** 2) / 10.0)
    return base / base.max()


def _solar_profiles(hours: int) -> np.ndarray:
    t = np.arange(hours)
    clear = np.clip(np.sin((t - 6) / 12 * np.pi), 0, None) ** 1.2
    hazy = 0.6 * clear
    overcast = 0.15 * clear
    return np.stack([clear, hazy, overcast])


def _wind_profiles(hours: int, rng) -> np.ndarray:
    t = np.arange(hours)
    windy = np.clip(0.7 + 0.2 * np.sin(t / 24 * 2 * np.pi + 1.0), 0, 1)
    mild = np.clip(0.35 + 0.15 * np.sin(t / 24 * 2 * np.pi + 2.0), 0, 1)
    calm = np.full(hours, 0.08)
    return np.stack([windy, mild, calm])


def small_system(T: int = 48, deterministic: bool = False,
                 voll: float = 20_000.0) -> SystemModel:
    """4 conventional units + 1 storage, sized for fast test runs.

    ``deterministic=True`` collapses all randomness: near-zero outage rates
    and a degenerate load-factor interval.
    """
    cal = build_calendar(T)
    f = NEAR_ZERO_FOR if deterministic else 0.05
    conv = tuple(
        ConventionalUnit(f"g{i}", cap, bid, OutageModel(f, 10.0))
        for i, (cap, bid) in enumerate(
            [(50, 2.0), (40, 3.0), (35, 4.5), (30, 6.0)]))
    stor = (StorageUnit("s0", 20, 1.5, OutageModel(
        NEAR_ZERO_FOR if deterministic else 0.02, 8.0),
        duration=4.0, eta_charge=0.92, eta_discharge=0.92),)
    load = 110.0 * np.tile(_daily_load_shape(24), T // 24 + 1)[:T]
    return SystemModel(
        calendar=cal, conventional=conv, renewable=(), storage=stor,
        load=load, voll=voll,
        load_factor_range=(1.0, 1.0) if deterministic else (0.8, 1.2))


def medium_system(T: int = 168, voll: float = 100_000.0) -> SystemModel:
    """20-unit synthetic system: 15 conventional, 3 renewable, 2 storage."""
    cal = build_calendar(T)
    rng = np.random.default_rng(20_24)
    caps = [180, 160, 150, 140, 130, 120, 110, 100, 90, 80,
            70, 60, 50, 45, 40]
    bids = [2.0, 2.2, 2.5, 2.8, 3.0, 3.4, 3.8, 4.2, 4.6, 5.0,
            5.5, 6.0, 7.0, 8.0, 9.0]
    fors = [0.03, 0.04, 0.05, 0.04, 0.06, 0.05, 0.04, 0.07, 0.05, 0.06,
            0.04, 0.08, 0.05, 0.06, 0.07]
    mttrs = [12, 10, 14, 8, 16, 10, 12, 20, 10, 14, 8, 24, 12, 10, 16]
    conv = []
    for i in range(15):
        k_day = 0.5 if i in (13, 14) else 1.0  # fuel-limited peakers
        conv.append(ConventionalUnit(
            f"g{i:02d}", caps[i], bids[i], OutageModel(fors[i], mttrs[i]),
            k_day=k_day))
    hours = 24
    solar = _solar_profiles(hours)
    wind = _wind_profiles(hours, rng)
    renew = (
        RenewableUnit("solar0", 120, 1.0, OutageModel(0.02, 6.0),
                      profiles=solar,
                      probabilities=np.array([0.5, 0.3, 0.2])),
        RenewableUnit("solar1", 80, 1.2, OutageModel(0.02, 6.0),
                      profiles=solar,
                      probabilities=np.array([0.45, 0.35, 0.2])),
        RenewableUnit("wind0", 100, 1.5, OutageModel(0.03, 8.0),
                      profiles=wind,
                      probabilities=np.array([0.4, 0.4, 0.2])),
    )
    stor = (
        StorageUnit("es0", 60, 1.8, OutageModel(0.01, 6.0), duration=4.0,
                    eta_charge=0.92, eta_discharge=0.92),
        StorageUnit("es1", 40, 2.0, OutageModel(0.01, 6.0), duration=4.0,
                    eta_charge=0.92, eta_discharge=0.92),
    )
    day = _daily_load_shape(24)
    weekly = np.concatenate([day * w for w in
                             (1.0, 1.02, 1.04, 1.03, 1.01, 0.9, 0.85)])
    load = 1_200.0 * np.tile(weekly, T // len(weekly) + 1)[:T]
    return SystemModel(calendar=cal, conventional=tuple(conv),
                       renewable=renew, storage=stor, load=load, voll=voll)
