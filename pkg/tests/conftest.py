from __future__ import annotations

import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from evgridplan.matpower import (
    BranchRecord,
    BusKind,
    BusRecord,
    GenRecord,
    GridCase,
    parse_matpower_case,
)

FIXTURES = Path(__file__).parent / "fixtures"

# compact EVs keep desk-scale charge events well inside one day
DESK_FLEET = [
    {
        "name": "Compact A",
        "mass_kg": 1100,
        "cd": 0.3,
        "frontal_area_m2": 2.1,
        "rolling_coeff": 0.013,
        "rotating_mass_coeff": 1.05,
        "powertrain_eff": 0.9,
        "battery_kwh": 8.0,
    },
    {
        "name": "Compact B",
        "mass_kg": 1350,
        "cd": 0.32,
        "frontal_area_m2": 2.3,
        "rolling_coeff": 0.014,
        "rotating_mass_coeff": 1.05,
        "powertrain_eff": 0.88,
        "battery_kwh": 12.0,
    },
]


def write_desk_fixture(root: Path, pop_size: int = 200, max_gen: int = 100, seed: int = 7) -> Path:
    """Desk-scale pipeline fixture: 12-node grid, 8 stations, 100 trips,
    the 30-bus case, and a planner config. Returns the config path."""
    from evgridplan.roadnet import place_stations, save_network, save_stations, synthetic_grid
    from evgridplan.tripsim import random_trips, save_station_bus_map, save_trips

    root.mkdir(parents=True, exist_ok=True)
    net = synthetic_grid(3, 4, spacing_m=2000.0, seed=5)
    save_network(net, root / "nodes.csv", root / "links.csv")
    stations = place_stations(net, 8, seed=9, power_kw=7.2, plugs=4)
    save_stations(stations, root / "stations.csv")
    trips = random_trips(
        net, 100, seed=11, depart_window=(300.0, 1000.0), soc_range=(0.05, 0.6)
    )
    save_trips(trips, root / "trips.csv")
    mapping = {s.id: bus for s, bus in zip(stations, [7, 8, 10, 12, 15, 21, 24, 30])}
    save_station_bus_map(mapping, root / "station_bus_map.csv")
    shutil.copy(FIXTURES / "case30.m", root / "case30.m")
    (root / "fleet.json").write_text(json.dumps(DESK_FLEET, indent=2))

    config = {
        "paths": {
            "case": str(root / "case30.m"),
            "nodes": str(root / "nodes.csv"),
            "links": str(root / "links.csv"),
            "stations": str(root / "stations.csv"),
            "trips": str(root / "trips.csv"),
            "station_bus_map": str(root / "station_bus_map.csv"),
            "fleet": str(root / "fleet.json"),
        },
        "ev_fraction": 1.0,
        "seed": seed,
        "workers": 1,
        "ga": {"pop_size": pop_size, "max_gen": max_gen, "seed": seed},
        "output_dir": str(root / "out"),
    }
    config_path = root / "config.json"
    config_path.write_text(json.dumps(config, indent=2))
    return config_path


@pytest.fixture(scope="session")
def case30_text() -> str:
    return (FIXTURES / "case30.m").read_text()


@pytest.fixture(scope="session")
def case30(case30_text) -> GridCase:
    return parse_matpower_case(case30_text)


@pytest.fixture(scope="session")
def case6() -> GridCase:
    return parse_matpower_case((FIXTURES / "case6.m").read_text())


def make_two_bus_case(
    r: float = 0.0,
    x: float = 0.1,
    b_total: float = 0.0,
    pd_mw: float = 0.0,
    qd_mvar: float = 0.0,
) -> GridCase:
    """Slack generator at bus 1, a single line, and a load at bus 2."""
    return GridCase(
        base_mva=100.0,
        buses=(
            BusRecord(1, BusKind.SLACK, 0.0, 0.0, 0.0, 0.0, 0.95, 1.05, 135.0),
            BusRecord(2, BusKind.LOAD, pd_mw, qd_mvar, 0.0, 0.0, 0.95, 1.05, 135.0),
        ),
        gens=(GenRecord(bus=1, pmin_mw=0, pmax_mw=100, qmin_mvar=-50, qmax_mvar=50, a=0.01, b=2.0, c=0.0),),
        branches=(BranchRecord(1, 2, r, x, b_total),),
    )


def make_random_case(n: int, rng: np.random.Generator, charging: bool = True) -> GridCase:
    """Connected random case: a ring plus a few chords, slack at bus 1."""
    buses = [
        BusRecord(
            i + 1,
            BusKind.SLACK if i == 0 else BusKind.LOAD,
            pd_mw=float(rng.uniform(0, 20)) if i else 0.0,
            qd_mvar=float(rng.uniform(0, 8)) if i else 0.0,
            gs_mw=0.0,
            bs_mvar=0.0,
            vmin=0.95,
            vmax=1.05,
            base_kv=135.0,
        )
        for i in range(n)
    ]
    pairs = [(i + 1, (i + 1) % n + 1) for i in range(n)]
    for _ in range(max(0, n - 3)):
        f, t = rng.choice(np.arange(1, n + 1), size=2, replace=False)
        if (int(f), int(t)) not in pairs and (int(t), int(f)) not in pairs:
            pairs.append((int(f), int(t)))
    branches = tuple(
        BranchRecord(
            f,
            t,
            r=float(rng.uniform(0.01, 0.05)),
            x=float(rng.uniform(0.05, 0.2)),
            b_total=float(rng.uniform(0.0, 0.04)) if charging else 0.0,
        )
        for f, t in pairs
    )
    gens = (GenRecord(bus=1, pmin_mw=0, pmax_mw=200, qmin_mvar=-100, qmax_mvar=100, a=0.01, b=2.0, c=0.0),)
    return GridCase(base_mva=100.0, buses=tuple(buses), gens=gens, branches=branches)
