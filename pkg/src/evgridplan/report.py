"""Figure rendering for the report path (PNG next to the CSV output)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def charging_profiles_figure(profiles: dict, path: str | Path) -> None:
    """Stacked per-station charging load over the day."""
    sids = sorted(profiles)
    minutes = np.arange(1440) / 60.0
    series = [profiles[sid].series_kw for sid in sids]
    fig, ax = plt.subplots(figsize=(9, 4))
    if sids:
        ax.stackplot(minutes, series, labels=[f"station {sid}" for sid in sids])
        if len(sids) <= 12:
            ax.legend(loc="upper left", ncol=2, fontsize=8)
    ax.set_xlabel("hour of day")
    ax.set_ylabel("charging load (kW)")
    ax.set_xlim(0, 24)
    ax.set_title("Station charging load profiles")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def bus_load_figure(bus_series: list, step_min: float, path: str | Path) -> None:
    """Aggregated per-bus EV load at the evaluation resolution."""
    fig, ax = plt.subplots(figsize=(9, 4))
    for series in bus_series:
        t = np.arange(len(series.series_mw)) * step_min / 60.0
        ax.step(t, series.series_mw, where="post", label=f"bus {series.bus_id}")
    if bus_series and len(bus_series) <= 12:
        ax.legend(fontsize=8)
    ax.set_xlabel("hour of day")
    ax.set_ylabel("EV load (MW)")
    ax.set_title("Substation EV load")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def convergence_figure(history, path: str | Path) -> None:
    """Best and mean objective per generation."""
    gens = np.arange(1, len(history.best_fitness) + 1)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(gens, history.best_fitness, label="best")
    ax.plot(gens, history.mean_fitness, label="population mean", alpha=0.7)
    if history.mean_fitness and max(history.mean_fitness) > 10 * max(
        1e-12, min(history.best_fitness)
    ):
        ax.set_yscale("log")
    ax.set_xlabel("generation")
    ax.set_ylabel("objective ($)")
    ax.set_title("GA convergence")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
