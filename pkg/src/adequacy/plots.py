"""Figure rendering for run reports (file output only, Agg backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_gap_history(ks, gaps, path):
    fig, ax = plt.subplots(figsize=(5, 3.2))
    pos = np.maximum(np.asarray(gaps, dtype=float), 1e-16)
    ax.semilogy(ks, pos, lw=1.2)
    ax.axhline(1e-4, color="grey", ls="--", lw=0.8)
    ax.set_xlabel("iteration")
    ax.set_ylabel("model gap (relative)")
    _save(fig, path)


def plot_objective_history(ks, objs, path):
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(ks, objs, lw=1.2)
    ax.set_xlabel("iteration")
    ax.set_ylabel("incumbent objective [$]")
    _save(fig, path)


def plot_eue_cost_history(ks, eue_costs, path):
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(ks, eue_costs, lw=1.2)
    ax.set_xlabel("iteration")
    ax.set_ylabel("expected cost of unserved energy [$]")
    _save(fig, path)


def plot_capacity_mix(classes, cleared, available, path):
    fig, ax = plt.subplots(figsize=(5, 3.2))
    idx = np.arange(len(classes))
    ax.bar(idx - 0.2, cleared, width=0.4, label="cleared")
    ax.bar(idx + 0.2, available, width=0.4, label="available")
    ax.set_xticks(idx, classes)
    ax.set_ylabel("capacity [MW]")
    ax.legend()
    _save(fig, path)


def plot_shed_histogram(hours, shed_by_hour, scenario_totals, path):
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.2))
    axes[0].bar(hours, shed_by_hour)
    axes[0].set_xlabel("hour of day")
    axes[0].set_ylabel("total shed [MWh]")
    if len(scenario_totals):
        axes[1].hist(scenario_totals, bins=min(30, max(5, len(scenario_totals))))
    axes[1].set_xlabel("scenario total shed [MWh]")
    axes[1].set_ylabel("scenarios")
    _save(fig, path)
