"""Trip-simulation tests: the three-action decision, event scheduling,
profile superposition, and energy conservation through aggregation."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from evgridplan.roadnet import RoadLink, RoadNode, RoadNetwork, StationSite, synthetic_grid
from evgridplan.tripsim import (
    Action,
    ChargingEvent,
    EmptyFleet,
    EventPastHorizon,
    Trip,
    UnmappedStation,
    _add_event,
    aggregate_to_buses,
    assign_vehicles,
    decide_action,
    generate_profiles,
    leg_soc_profile,
    load_station_bus_map,
    load_trips,
    profiles_from_results,
    random_trips,
    save_station_bus_map,
    save_trips,
    simulate_trip,
    simulate_trips,
)
from evgridplan.vehicle import VehicleSpec

SMALL_EV = VehicleSpec(
    name="small",
    mass_kg=1500,
    cd=0.3,
    frontal_area_m2=2.2,
    rolling_coeff=0.015,
    rotating_mass_coeff=1.05,
    powertrain_eff=0.9,
    battery_kwh=10.0,
)


def line_network(n: int = 5, link_m: float = 2000.0, speed: float = 50.0) -> RoadNetwork:
    nodes = [RoadNode(i, 37.0 + 0.002 * i, -122.0, 0.0) for i in range(1, n + 1)]
    links = []
    for i in range(1, n):
        links.append(RoadLink(i, i + 1, link_m, speed))
        links.append(RoadLink(i + 1, i, link_m, speed))
    return RoadNetwork(nodes, links)


def trip_energy(net: RoadNetwork, o: int, d: int, vehicle=SMALL_EV) -> float:
    route = net.route_with_energy(net.shortest_path(o, d), vehicle)
    return sum(route.per_link_energy_kwh)


class TestAssignVehicles:
    def test_zero_fraction(self):
        trips = [Trip(i, 1, 2, 100.0, 0.5) for i in range(10)]
        out = assign_vehicles(trips, [SMALL_EV], 0.0, np.random.default_rng(1))
        assert all(not t.is_ev for t in out)

    def test_full_fraction_single_model(self):
        trips = [Trip(i, 1, 2, 100.0, 0.5) for i in range(10)]
        out = assign_vehicles(trips, [SMALL_EV], 1.0, np.random.default_rng(1))
        assert all(t.vehicle is SMALL_EV for t in out)
        assert all(t.initial_soc_kwh == pytest.approx(5.0) for t in out)

    def test_exact_quarter(self):
        trips = [Trip(i, 1, 2, 100.0, 0.5) for i in range(100)]
        out = assign_vehicles(trips, [SMALL_EV], 0.25, np.random.default_rng(3))
        assert sum(t.is_ev for t in out) == 25

    def test_empty_fleet(self):
        with pytest.raises(EmptyFleet):
            assign_vehicles([Trip(1, 1, 2, 0.0, 1.0)], [], 1.0, np.random.default_rng(0))

    def test_deterministic(self):
        trips = [Trip(i, 1, 2, 100.0, 0.5) for i in range(50)]
        a = assign_vehicles(trips, [SMALL_EV], 0.4, np.random.default_rng(9))
        b = assign_vehicles(trips, [SMALL_EV], 0.4, np.random.default_rng(9))
        assert [t.is_ev for t in a] == [t.is_ev for t in b]


class TestDecideAction:
    def test_paper_branches(self):
        assert decide_action(50, 40) is Action.NO_CHARGE
        assert decide_action(36, 40) is Action.MID_TRIP  # 36 > 0.8 * 40 = 32
        assert decide_action(20, 40) is Action.AT_ORIGIN

    def test_boundaries(self):
        assert decide_action(40, 40) is Action.MID_TRIP  # soc == E
        assert decide_action(32, 40) is Action.AT_ORIGIN  # soc == factor * E

    @given(
        soc=st.floats(0, 100, allow_nan=False),
        energy=st.floats(0.01, 100, allow_nan=False),
        factor=st.floats(0.01, 0.99),
    )
    def test_partition_is_exact(self, soc, energy, factor):
        action = decide_action(soc, energy, factor)
        in_no = soc > energy
        in_mid = factor * energy < soc <= energy
        in_origin = soc <= factor * energy
        assert [in_no, in_mid, in_origin].count(True) == 1
        assert {
            Action.NO_CHARGE: in_no,
            Action.MID_TRIP: in_mid,
            Action.AT_ORIGIN: in_origin,
        }[action]

    def test_mid_trip_band_vanishes_as_factor_approaches_one(self):
        energy = 40.0
        assert decide_action(energy * 0.99, energy, factor=0.995) is Action.AT_ORIGIN


class TestSimulateTrip:
    def test_full_battery_no_events(self):
        net = line_network()
        trip = Trip(1, 1, 5, 480.0, 1.0, vehicle=SMALL_EV, initial_soc_kwh=10.0)
        result = simulate_trip(trip, net, [StationSite(1, 3)])
        assert result.action is Action.NO_CHARGE
        assert result.events == ()
        assert result.feasible

    def test_mid_trip_stop_at_unique_on_route_station(self):
        """soc = 0.9 E forces a mid-trip stop; the node-3 station is the
        only zero-detour candidate on the 1 -> 5 line."""
        net = line_network()
        energy = trip_energy(net, 1, 5)
        soc = 0.9 * energy
        trip = Trip(1, 1, 5, 480.0, 0.5, vehicle=SMALL_EV, initial_soc_kwh=soc)
        on_route = StationSite(1, 3)
        off_route = StationSite(2, 1)
        result = simulate_trip(trip, net, [off_route, on_route])
        assert result.action is Action.MID_TRIP
        assert len(result.events) == 1
        event = result.events[0]
        assert event.station_id == 1
        # arrives after two 2 km links at 50 km/h = 4.8 min
        assert event.start_min == pytest.approx(480.0 + 4.8)
        soc_at_station = soc - trip_energy(net, 1, 3)
        assert event.duration_min == pytest.approx(
            (SMALL_EV.battery_kwh - soc_at_station) / 7.2 * 60.0
        )
        assert result.feasible

    def test_at_origin_duration_is_charge_to_full(self):
        net = line_network()
        energy = trip_energy(net, 1, 5)
        soc = 0.5 * energy
        trip = Trip(1, 1, 5, 480.0, 0.5, vehicle=SMALL_EV, initial_soc_kwh=soc)
        result = simulate_trip(trip, net, [StationSite(1, 2)])
        assert result.action is Action.AT_ORIGIN
        event = result.events[0]
        assert event.start_min == 480.0
        assert event.duration_min == pytest.approx((10.0 - soc) / 7.2 * 60.0)
        assert event.power_kw == 7.2

    def test_soc_trajectory_stays_in_bounds(self):
        net = synthetic_grid(3, 4, seed=5)
        stations = [StationSite(i, n, plugs=4) for i, n in enumerate([2, 6, 11], 1)]
        trips = assign_vehicles(
            random_trips(net, 100, seed=11), [SMALL_EV], 1.0, np.random.default_rng(4)
        )
        results, actions = simulate_trips(trips, net, stations)
        assert sum(actions.values()) == 100
        for result in results:
            if not result.feasible:
                continue
            trip = result.trip
            soc0 = (
                trip.vehicle.battery_kwh
                if result.action is Action.AT_ORIGIN
                else trip.initial_soc_kwh
            )
            route = net.shortest_path(trip.origin, trip.destination)
            trajectory = leg_soc_profile(net, route, trip.vehicle, soc0)
            if result.action is not Action.MID_TRIP:
                assert min(trajectory) >= 0
            assert max(trajectory) <= trip.vehicle.battery_kwh + 1e-12


class TestProfiles:
    def test_no_ev_trips_zero_profiles(self):
        net = line_network()
        trips = [Trip(1, 1, 5, 480.0, 0.5)]  # no vehicle
        profiles = generate_profiles(trips, net, [StationSite(1, 3)])
        assert np.all(profiles[1].series_kw == 0)

    def test_overlap_superposes(self):
        series = np.zeros(1440)
        _add_event(series, ChargingEvent(1, 100.0, 30.0, 7.2))
        _add_event(series, ChargingEvent(1, 120.0, 30.0, 7.2))
        assert np.allclose(series[120:130], 14.4)
        assert np.allclose(series[100:120], 7.2)
        assert np.allclose(series[130:150], 7.2)

    def test_fractional_minutes_conserve_energy(self):
        series = np.zeros(1440)
        event = ChargingEvent(1, 100.3, 17.77, 7.2)
        _add_event(series, event)
        assert series.sum() / 60 == pytest.approx(7.2 * 17.77 / 60, rel=1e-12)

    def test_event_past_horizon(self):
        series = np.zeros(1440)
        with pytest.raises(EventPastHorizon):
            _add_event(series, ChargingEvent(1, 1430.0, 30.0, 7.2))

    def test_seeded_scenario_energy_identity(self):
        """Total profile energy equals the sum over events of P * dt."""
        net = synthetic_grid(3, 4, seed=5)
        stations = [StationSite(i, n, plugs=4) for i, n in enumerate([2, 6, 11], 1)]
        trips = assign_vehicles(
            random_trips(net, 100, seed=11), [SMALL_EV], 1.0, np.random.default_rng(4)
        )
        results, _ = simulate_trips(trips, net, stations)
        profiles = profiles_from_results(results, stations)
        event_kwh = sum(
            e.power_kw * e.duration_min / 60 for r in results for e in r.events
        )
        profile_kwh = sum(p.energy_kwh() for p in profiles.values())
        assert profile_kwh == pytest.approx(event_kwh, rel=1e-9)

    def test_determinism_bit_for_bit(self):
        net = synthetic_grid(3, 4, seed=5)
        stations = [StationSite(i, n) for i, n in enumerate([2, 6, 11], 1)]

        def run():
            trips = assign_vehicles(
                random_trips(net, 60, seed=2), [SMALL_EV], 0.5, np.random.default_rng(6)
            )
            return generate_profiles(trips, net, stations)

        a, b = run(), run()
        for sid in a:
            assert np.array_equal(a[sid].series_kw, b[sid].series_kw)


class TestAggregation:
    def test_constant_station_hourly_average(self):
        profiles = {1: _const_profile(1, 7.2)}
        buses = aggregate_to_buses(profiles, {1: 5}, step_min=60)
        assert buses[0].bus_id == 5
        assert np.allclose(buses[0].series_mw, 0.0072)

    def test_two_stations_one_bus_sum(self):
        profiles = {1: _const_profile(1, 7.2), 2: _const_profile(2, 7.2)}
        buses = aggregate_to_buses(profiles, {1: 3, 2: 3}, step_min=60)
        assert np.allclose(buses[0].series_mw, 0.0144)

    def test_energy_conserved_through_resampling(self):
        net = synthetic_grid(3, 4, seed=5)
        stations = [StationSite(i, n, plugs=4) for i, n in enumerate([2, 6, 11], 1)]
        trips = assign_vehicles(
            random_trips(net, 100, seed=11), [SMALL_EV], 1.0, np.random.default_rng(4)
        )
        profiles = generate_profiles(trips, net, stations)
        mapping = {1: 7, 2: 7, 3: 12}
        for step in (15, 60):
            buses = aggregate_to_buses(profiles, mapping, step_min=step)
            bus_mwh = sum(b.energy_mwh(step) for b in buses)
            station_mwh = sum(p.energy_kwh() for p in profiles.values()) / 1000
            assert bus_mwh == pytest.approx(station_mwh, rel=1e-9)

    def test_unmapped_station(self):
        with pytest.raises(UnmappedStation):
            aggregate_to_buses({1: _const_profile(1, 7.2)}, {2: 3})


def _const_profile(sid: int, kw: float):
    from evgridplan.tripsim import ChargingProfile

    return ChargingProfile(sid, np.full(1440, kw))


def test_trip_table_roundtrip(tmp_path):
    net = synthetic_grid(3, 3, seed=1)
    trips = random_trips(net, 20, seed=7)
    save_trips(trips, tmp_path / "trips.csv")
    assert load_trips(tmp_path / "trips.csv") == trips


def test_station_bus_map_roundtrip(tmp_path):
    mapping = {1: 5, 2: 12, 3: 30}
    save_station_bus_map(mapping, tmp_path / "map.csv")
    assert load_station_bus_map(tmp_path / "map.csv") == mapping
