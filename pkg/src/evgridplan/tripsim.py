"""Trip-level charging simulation and load-profile generation.

Each trip is routed, its energy need computed, and one of three actions
taken: no charging, a mid-trip stop at the best station on the route,
or charging at the origin before departure. Station profiles are
1-minute kW series over one day; events may start and end at fractional
minutes and are binned by exact overlap so energy is conserved.
"""

from __future__ import annotations

import csv
import enum
import math
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import InputError
from .roadnet import (
    RoadNetwork,
    Route,
    StationSite,
    filter_nearest_stations,
    nearest_station,
    select_station,
)
from .vehicle import VehicleSpec

HORIZON_MIN = 1440


class EmptyFleet(InputError):
    """Vehicle assignment needs at least one vehicle model."""


class EventPastHorizon(InputError):
    """A charging event would extend past the end of the day."""


class UnmappedStation(InputError):
    """A station with load has no bus in the station-bus map."""


class Action(enum.Enum):
    NO_CHARGE = "no_charge"
    MID_TRIP = "mid_trip"
    AT_ORIGIN = "at_origin"


@dataclass(frozen=True)
class Trip:
    id: int
    origin: int
    destination: int
    depart_min: float
    initial_soc_frac: float = 1.0
    vehicle: VehicleSpec | None = None
    initial_soc_kwh: float = 0.0

    def __post_init__(self):
        if not 0 <= self.depart_min < HORIZON_MIN:
            raise InputError(f"trip {self.id}: depart_min outside [0, 1440)")
        if not 0 <= self.initial_soc_frac <= 1:
            raise InputError(f"trip {self.id}: initial_soc_frac outside [0, 1]")

    @property
    def is_ev(self) -> bool:
        return self.vehicle is not None


@dataclass(frozen=True)
class ChargingEvent:
    station_id: int
    start_min: float
    duration_min: float
    power_kw: float


@dataclass(frozen=True)
class ChargingProfile:
    station_id: int
    series_kw: np.ndarray  # length 1440, average kW within each minute

    def energy_kwh(self) -> float:
        return float(self.series_kw.sum()) / 60.0


@dataclass(frozen=True)
class BusLoadSeries:
    bus_id: int
    series_mw: np.ndarray

    def energy_mwh(self, step_min: float) -> float:
        return float(self.series_mw.sum()) * step_min / 60.0


@dataclass(frozen=True)
class TripResult:
    trip: Trip
    action: Action | None
    events: tuple[ChargingEvent, ...]
    feasible: bool
    trip_energy_kwh: float


def assign_vehicles(
    trips: list[Trip],
    fleet: tuple[VehicleSpec, ...] | list[VehicleSpec],
    ev_fraction: float,
    rng: np.random.Generator,
) -> list[Trip]:
    """Mark a seeded ev_fraction of trips as EVs with uniform fleet draws."""
    if not 0 <= ev_fraction <= 1:
        raise InputError("ev_fraction must lie in [0, 1]")
    if not fleet:
        raise EmptyFleet("fleet is empty")
    n_ev = int(round(ev_fraction * len(trips)))
    chosen = set(rng.choice(len(trips), size=n_ev, replace=False).tolist()) if n_ev else set()
    picks = rng.integers(0, len(fleet), size=n_ev)
    out = []
    k = 0
    for i, trip in enumerate(trips):
        if i in chosen:
            vehicle = fleet[int(picks[k])]
            k += 1
            out.append(
                replace(
                    trip,
                    vehicle=vehicle,
                    initial_soc_kwh=trip.initial_soc_frac * vehicle.battery_kwh,
                )
            )
        else:
            out.append(replace(trip, vehicle=None, initial_soc_kwh=0.0))
    return out


def decide_action(soc_kwh: float, trip_energy_kwh: float, factor: float = 0.8) -> Action:
    """Three-way charging decision; the (soc, E) plane is partitioned exactly."""
    if not 0 < factor < 1:
        raise InputError("factor must lie in (0, 1)")
    if soc_kwh > trip_energy_kwh:
        return Action.NO_CHARGE
    if soc_kwh > factor * trip_energy_kwh:
        return Action.MID_TRIP
    return Action.AT_ORIGIN


def leg_soc_profile(
    net: RoadNetwork,
    route: Route,
    vehicle: VehicleSpec,
    soc0_kwh: float,
    g: float = 9.81,
    regen_eff: float = 0.0,
) -> list[float]:
    """SOC at every route node, capped at capacity (regen cannot overfill)."""
    if route.per_link_energy_kwh is None:
        route = net.route_with_energy(route, vehicle, g, regen_eff)
    soc = soc0_kwh
    trajectory = [soc]
    for e in route.per_link_energy_kwh:
        soc = min(soc - e, vehicle.battery_kwh)
        trajectory.append(soc)
    return trajectory


def simulate_trip(
    trip: Trip,
    net: RoadNetwork,
    stations: list[StationSite],
    factor: float = 0.8,
    filter_n: int = 20,
    g: float = 9.81,
    regen_eff: float = 0.0,
) -> TripResult:
    """Run the routing / charger-selection strategy for one EV trip."""
    if trip.vehicle is None:
        raise InputError(f"trip {trip.id} has no vehicle assigned")
    vehicle = trip.vehicle
    route = net.route_with_energy(
        net.shortest_path(trip.origin, trip.destination), vehicle, g, regen_eff
    )
    energy = sum(route.per_link_energy_kwh)
    action = decide_action(trip.initial_soc_kwh, energy, factor)

    if action is Action.NO_CHARGE:
        trajectory = leg_soc_profile(net, route, vehicle, trip.initial_soc_kwh, g, regen_eff)
        return TripResult(trip, action, (), min(trajectory) >= 0, energy)

    if action is Action.MID_TRIP:
        candidates = filter_nearest_stations(net, route, stations, filter_n)
        station = select_station(net, trip.origin, trip.destination, candidates)
        leg1 = net.route_with_energy(
            net.shortest_path(trip.origin, station.node), vehicle, g, regen_eff
        )
        leg2 = net.route_with_energy(
            net.shortest_path(station.node, trip.destination), vehicle, g, regen_eff
        )
        traj1 = leg_soc_profile(net, leg1, vehicle, trip.initial_soc_kwh, g, regen_eff)
        soc_at_station = traj1[-1]
        events = []
        soc_after = soc_at_station
        if soc_at_station < vehicle.battery_kwh:
            charge_kwh = vehicle.battery_kwh - soc_at_station
            events.append(
                ChargingEvent(
                    station_id=station.id,
                    start_min=trip.depart_min + net.route_travel_minutes(leg1),
                    duration_min=charge_kwh / station.power_kw * 60.0,
                    power_kw=station.power_kw,
                )
            )
            soc_after = vehicle.battery_kwh
        traj2 = leg_soc_profile(net, leg2, vehicle, soc_after, g, regen_eff)
        feasible = min(traj1) >= 0 and min(traj2) >= 0
        return TripResult(trip, action, tuple(events), feasible, energy)

    # AT_ORIGIN: charge to full before (a delayed) departure
    station = nearest_station(net, trip.origin, stations)
    events = []
    if trip.initial_soc_kwh < vehicle.battery_kwh:
        charge_kwh = vehicle.battery_kwh - trip.initial_soc_kwh
        events.append(
            ChargingEvent(
                station_id=station.id,
                start_min=trip.depart_min,
                duration_min=charge_kwh / station.power_kw * 60.0,
                power_kw=station.power_kw,
            )
        )
    trajectory = leg_soc_profile(net, route, vehicle, vehicle.battery_kwh, g, regen_eff)
    return TripResult(trip, action, tuple(events), min(trajectory) >= 0, energy)


def simulate_trips(
    trips: list[Trip],
    net: RoadNetwork,
    stations: list[StationSite],
    factor: float = 0.8,
    filter_n: int = 20,
    g: float = 9.81,
    regen_eff: float = 0.0,
) -> tuple[list[TripResult], Counter]:
    """Simulate every EV trip; non-EV trips pass through with no action."""
    results = []
    actions: Counter = Counter()
    for trip in trips:
        if not trip.is_ev:
            results.append(TripResult(trip, None, (), True, 0.0))
            continue
        result = simulate_trip(trip, net, stations, factor, filter_n, g, regen_eff)
        actions[result.action.value] += 1
        results.append(result)
    return results, actions


def _add_event(series: np.ndarray, event: ChargingEvent) -> None:
    start = event.start_min
    end = event.start_min + event.duration_min
    if end > HORIZON_MIN + 1e-9:
        raise EventPastHorizon(
            f"event at station {event.station_id} ends at minute {end:.1f}"
        )
    first = int(math.floor(start))
    last = min(int(math.ceil(end)), HORIZON_MIN)
    for m in range(first, last):
        overlap = min(end, m + 1) - max(start, m)
        if overlap > 0:
            series[m] += event.power_kw * overlap


def profiles_from_results(
    results: list[TripResult], stations: list[StationSite]
) -> dict[int, ChargingProfile]:
    """Superpose all charging events into per-station minute series."""
    series = {s.id: np.zeros(HORIZON_MIN) for s in stations}
    for result in results:
        for event in result.events:
            _add_event(series[event.station_id], event)
    return {sid: ChargingProfile(sid, arr) for sid, arr in sorted(series.items())}


def generate_profiles(
    trips: list[Trip],
    net: RoadNetwork,
    stations: list[StationSite],
    factor: float = 0.8,
    filter_n: int = 20,
    g: float = 9.81,
    regen_eff: float = 0.0,
) -> dict[int, ChargingProfile]:
    results, _ = simulate_trips(trips, net, stations, factor, filter_n, g, regen_eff)
    return profiles_from_results(results, stations)


def aggregate_to_buses(
    profiles: dict[int, ChargingProfile],
    station_bus_map: dict[int, int],
    step_min: int = 60,
) -> list[BusLoadSeries]:
    """Sum station series per bus, block-average to step_min, kW -> MW."""
    if HORIZON_MIN % step_min != 0:
        raise InputError(f"step_min {step_min} must divide {HORIZON_MIN}")
    per_bus: dict[int, np.ndarray] = {}
    for sid, profile in profiles.items():
        if sid not in station_bus_map:
            raise UnmappedStation(f"station {sid} missing from station-bus map")
        bus = station_bus_map[sid]
        per_bus.setdefault(bus, np.zeros(HORIZON_MIN))
        per_bus[bus] += profile.series_kw
    out = []
    steps = HORIZON_MIN // step_min
    for bus in sorted(per_bus):
        blocks = per_bus[bus].reshape(steps, step_min).mean(axis=1) / 1000.0
        out.append(BusLoadSeries(bus, blocks))
    return out


# ---------------------------------------------------------------------------
# file formats and fixture generation

def _data_rows(path: str | Path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def load_trips(path: str | Path) -> list[Trip]:
    """Trip table CSV: id, origin, destination, depart_min, initial_soc_frac."""
    return [
        Trip(
            id=int(r["id"]),
            origin=int(r["origin"]),
            destination=int(r["destination"]),
            depart_min=float(r["depart_min"]),
            initial_soc_frac=float(r["initial_soc_frac"]),
        )
        for r in _data_rows(path)
    ]


def save_trips(trips: list[Trip], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "origin", "destination", "depart_min", "initial_soc_frac"])
        for t in trips:
            w.writerow([t.id, t.origin, t.destination, t.depart_min, t.initial_soc_frac])


def load_station_bus_map(path: str | Path) -> dict[int, int]:
    return {int(r["station_id"]): int(r["bus_id"]) for r in _data_rows(path)}


def save_station_bus_map(mapping: dict[int, int], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["station_id", "bus_id"])
        for sid in sorted(mapping):
            w.writerow([sid, mapping[sid]])


def write_profile_csv(
    profiles: dict[int, ChargingProfile], path: str | Path, header_comment: str | None = None
) -> None:
    """Per-station 1-minute kW series: minute, station_<id>, ..."""
    sids = sorted(profiles)
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh)
        w.writerow(["minute"] + [f"station_{sid}" for sid in sids])
        for m in range(HORIZON_MIN):
            w.writerow([m] + [repr(float(profiles[sid].series_kw[m])) for sid in sids])


def random_trips(
    net: RoadNetwork,
    count: int,
    seed: int = 0,
    depart_window: tuple[float, float] = (300.0, 1140.0),
    soc_range: tuple[float, float] = (0.3, 1.0),
) -> list[Trip]:
    """Seeded synthetic trip table over the network's nodes."""
    rng = np.random.default_rng(seed)
    node_ids = sorted(net.nodes)
    trips = []
    for i in range(count):
        o, d = rng.choice(node_ids, size=2, replace=False)
        trips.append(
            Trip(
                id=i + 1,
                origin=int(o),
                destination=int(d),
                depart_min=float(np.round(rng.uniform(*depart_window), 1)),
                initial_soc_frac=float(np.round(rng.uniform(*soc_range), 4)),
            )
        )
    return trips
