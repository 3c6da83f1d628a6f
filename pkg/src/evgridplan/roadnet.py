"""Directed road network: geodesy, shortest paths, station filtering.

The routing metric is link length in metres. Ties between equal-length
paths are broken deterministically in favour of the lexicographically
smallest node-id sequence, which the heap provides for free when
entries carry the partial path.
"""

from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import InputError

EARTH_RADIUS_M = 6_371_000.0


class Unreachable(InputError):
    """No directed path exists between the requested nodes."""


class NoReachableCandidate(InputError):
    """No candidate station has both subtrips routable."""


@dataclass(frozen=True)
class RoadNode:
    id: int
    lat: float
    lon: float
    elev_m: float = 0.0

    def __post_init__(self):
        if not (-90 <= self.lat <= 90 and -180 <= self.lon <= 180):
            raise InputError(f"node {self.id}: coordinates out of range")


@dataclass(frozen=True)
class RoadLink:
    from_node: int
    to_node: int
    length_m: float
    speed_kmh: float

    def __post_init__(self):
        if self.length_m <= 0 or self.speed_kmh <= 0:
            raise InputError(
                f"link {self.from_node}->{self.to_node}: length and speed must be positive"
            )


@dataclass(frozen=True)
class StationSite:
    id: int
    node: int
    power_kw: float = 7.2
    plugs: int = 1

    def __post_init__(self):
        if self.power_kw <= 0 or self.plugs < 1:
            raise InputError(f"station {self.id}: power must be > 0 and plugs >= 1")


@dataclass(frozen=True)
class Route:
    node_seq: tuple[int, ...]
    total_length_m: float
    per_link_energy_kwh: tuple[float, ...] | None = None


def haversine(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in metres."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(math.sqrt(a))


class RoadNetwork:
    """Immutable directed graph; queries are safe to run concurrently."""

    def __init__(self, nodes: list[RoadNode], links: list[RoadLink]):
        self.nodes: dict[int, RoadNode] = {n.id: n for n in nodes}
        if len(self.nodes) != len(nodes):
            raise InputError("node ids are not unique")
        self._out: dict[int, list[RoadLink]] = {n.id: [] for n in nodes}
        self._by_pair: dict[tuple[int, int], RoadLink] = {}
        for link in links:
            if link.from_node not in self.nodes or link.to_node not in self.nodes:
                raise InputError(
                    f"link {link.from_node}->{link.to_node} references an unknown node"
                )
            pair = (link.from_node, link.to_node)
            # keep the shortest of parallel links
            if pair not in self._by_pair or link.length_m < self._by_pair[pair].length_m:
                self._by_pair[pair] = link
        for link in self._by_pair.values():
            self._out[link.from_node].append(link)
        for out in self._out.values():
            out.sort(key=lambda l: l.to_node)

    @property
    def links(self) -> list[RoadLink]:
        return list(self._by_pair.values())

    def link(self, from_node: int, to_node: int) -> RoadLink:
        return self._by_pair[(from_node, to_node)]

    def link_grade_rad(self, link: RoadLink) -> float:
        rise = self.nodes[link.to_node].elev_m - self.nodes[link.from_node].elev_m
        ratio = max(-1.0, min(1.0, rise / link.length_m))
        return math.asin(ratio)

    def shortest_path(self, origin: int, destination: int) -> Route:
        """Minimum total length; lexicographic node sequence on ties."""
        if origin not in self.nodes or destination not in self.nodes:
            raise InputError(f"unknown node in query {origin}->{destination}")
        if origin == destination:
            return Route((origin,), 0.0)

        best: dict[int, float] = {origin: 0.0}
        done: set[int] = set()
        heap: list[tuple[float, tuple[int, ...]]] = [(0.0, (origin,))]
        while heap:
            dist, path = heapq.heappop(heap)
            node = path[-1]
            if node in done:
                continue
            done.add(node)
            if node == destination:
                return Route(path, dist)
            for link in self._out[node]:
                alt = dist + link.length_m
                if link.to_node not in done and alt <= best.get(link.to_node, math.inf):
                    best[link.to_node] = alt
                    heapq.heappush(heap, (alt, path + (link.to_node,)))
        raise Unreachable(f"no path from {origin} to {destination}")

    def distance(self, origin: int, destination: int) -> float:
        return self.shortest_path(origin, destination).total_length_m

    def route_travel_minutes(self, route: Route) -> float:
        """Free-flow travel time over the route in minutes."""
        total_h = 0.0
        for f, t in zip(route.node_seq, route.node_seq[1:]):
            link = self.link(f, t)
            total_h += link.length_m / 1000.0 / link.speed_kmh
        return total_h * 60.0

    def route_with_energy(self, route: Route, vehicle, g: float = 9.81, regen_eff: float = 0.0) -> Route:
        """Fill per-link battery energies for a vehicle (kWh per link)."""
        from .vehicle import link_energy

        energies = []
        for f, t in zip(route.node_seq, route.node_seq[1:]):
            link = self.link(f, t)
            energies.append(
                link_energy(vehicle, link.length_m, link.speed_kmh, self.link_grade_rad(link), g, regen_eff)
            )
        return replace(route, per_link_energy_kwh=tuple(energies))


def station_route_distance(net: RoadNetwork, route: Route, station: StationSite) -> float:
    """Great-circle distance from the station to the nearest route node."""
    s = net.nodes[station.node]
    return min(
        haversine(s.lat, s.lon, net.nodes[nid].lat, net.nodes[nid].lon)
        for nid in route.node_seq
    )


def filter_nearest_stations(
    net: RoadNetwork, route: Route, stations: list[StationSite], n: int = 20
) -> list[StationSite]:
    """The (at most) n stations closest to the route, ascending distance.

    Ties break on station id; with fewer than n stations all are returned.
    """
    if n < 1:
        raise InputError("n must be >= 1")
    ranked = sorted(
        stations, key=lambda s: (station_route_distance(net, route, s), s.id)
    )
    return ranked[:n]


def select_station(
    net: RoadNetwork, origin: int, destination: int, candidates: list[StationSite]
) -> StationSite:
    """Pick the candidate with minimal routed detour through its node.

    detour = dist(o -> M) + dist(M -> d) - dist(o -> d)
    """
    if not candidates:
        raise InputError("candidate list is empty")
    direct = net.distance(origin, destination)
    best: tuple[float, int] | None = None
    best_station = None
    for station in candidates:
        try:
            via = net.distance(origin, station.node) + net.distance(station.node, destination)
        except Unreachable:
            continue
        key = (via - direct, station.id)
        if best is None or key < best:
            best = key
            best_station = station
    if best_station is None:
        raise NoReachableCandidate(
            f"no candidate station routable between {origin} and {destination}"
        )
    return best_station


def nearest_station(net: RoadNetwork, node: int, stations: list[StationSite]) -> StationSite:
    """Station nearest a node by great-circle distance, id on ties."""
    if not stations:
        raise InputError("station list is empty")
    origin = net.nodes[node]
    return min(
        stations,
        key=lambda s: (
            haversine(origin.lat, origin.lon, net.nodes[s.node].lat, net.nodes[s.node].lon),
            s.id,
        ),
    )


# ---------------------------------------------------------------------------
# file formats and the synthetic stand-in network

def load_network(nodes_path: str | Path, links_path: str | Path) -> RoadNetwork:
    nodes = [
        RoadNode(int(r["id"]), float(r["lat"]), float(r["lon"]), float(r["elev_m"]))
        for r in csv.DictReader(open(nodes_path, newline=""))
    ]
    links = [
        RoadLink(int(r["from"]), int(r["to"]), float(r["length_m"]), float(r["speed_kmh"]))
        for r in csv.DictReader(open(links_path, newline=""))
    ]
    return RoadNetwork(nodes, links)


def load_stations(path: str | Path) -> list[StationSite]:
    return [
        StationSite(int(r["id"]), int(r["node"]), float(r["power_kw"]), int(r["plugs"]))
        for r in csv.DictReader(open(path, newline=""))
    ]


def save_network(net: RoadNetwork, nodes_path: str | Path, links_path: str | Path) -> None:
    with open(nodes_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "lat", "lon", "elev_m"])
        for node in sorted(net.nodes.values(), key=lambda n: n.id):
            w.writerow([node.id, node.lat, node.lon, node.elev_m])
    with open(links_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["from", "to", "length_m", "speed_kmh"])
        for link in sorted(net.links, key=lambda l: (l.from_node, l.to_node)):
            w.writerow([link.from_node, link.to_node, link.length_m, link.speed_kmh])


def save_stations(stations: list[StationSite], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "node", "power_kw", "plugs"])
        for s in sorted(stations, key=lambda s: s.id):
            w.writerow([s.id, s.node, s.power_kw, s.plugs])


def synthetic_grid(
    rows: int,
    cols: int,
    spacing_m: float = 500.0,
    seed: int = 0,
    anchor_lat: float = 37.6,
    anchor_lon: float = -122.1,
    speed_kmh: tuple[float, float] = (30.0, 60.0),
    elev_amplitude_m: float = 40.0,
) -> RoadNetwork:
    """Deterministic grid network standing in for a real road dataset.

    Nodes are numbered row-major from 1; every grid edge becomes a pair
    of directed links with a common random speed and a small random
    length jitter. Elevation is a smooth random surface.
    """
    rng = np.random.default_rng(seed)
    dlat = spacing_m / EARTH_RADIUS_M * 180 / math.pi
    dlon = dlat / math.cos(math.radians(anchor_lat))

    ex = rng.uniform(0, 2 * math.pi, 3)
    ey = rng.uniform(0, 2 * math.pi, 3)

    def elevation(r, c):
        return elev_amplitude_m * sum(
            math.sin(0.9 * (k + 1) * r * 0.7 + ex[k]) * math.cos((k + 1) * c * 0.5 + ey[k])
            for k in range(3)
        ) / 3.0

    nodes = []
    for r in range(rows):
        for c in range(cols):
            nodes.append(
                RoadNode(
                    id=r * cols + c + 1,
                    lat=anchor_lat + r * dlat,
                    lon=anchor_lon + c * dlon,
                    elev_m=round(elevation(r, c), 3),
                )
            )

    links = []

    def add_edge(a, b):
        length = spacing_m * float(rng.uniform(1.0, 1.15))
        speed = float(rng.uniform(*speed_kmh))
        links.append(RoadLink(a, b, round(length, 3), round(speed, 3)))
        links.append(RoadLink(b, a, round(length, 3), round(speed, 3)))

    for r in range(rows):
        for c in range(cols):
            nid = r * cols + c + 1
            if c + 1 < cols:
                add_edge(nid, nid + 1)
            if r + 1 < rows:
                add_edge(nid, nid + cols)

    return RoadNetwork(nodes, links)


def place_stations(
    net: RoadNetwork,
    count: int,
    seed: int = 0,
    power_kw: float = 7.2,
    plugs: int = 4,
) -> list[StationSite]:
    """Seed-deterministic station placement on distinct network nodes."""
    rng = np.random.default_rng(seed)
    node_ids = sorted(net.nodes)
    if count > len(node_ids):
        raise InputError("more stations than nodes")
    chosen = rng.choice(node_ids, size=count, replace=False)
    return [
        StationSite(id=i + 1, node=int(n), power_kw=power_kw, plugs=plugs)
        for i, n in enumerate(sorted(chosen))
    ]
