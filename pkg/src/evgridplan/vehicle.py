"""Vehicle longitudinal dynamics: tractive force, power, link energy.

Speed stays in km/h through the force terms (the aerodynamic constant
21.15 assumes it) and is converted to m/s only where force becomes
power. Mixing the two regimes is the classic mistake here.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import NamedTuple

from .errors import InputError

G_DEFAULT = 9.81  # m/s^2


@dataclass(frozen=True)
class VehicleSpec:
    name: str
    mass_kg: float
    cd: float
    frontal_area_m2: float
    rolling_coeff: float
    rotating_mass_coeff: float  # delta >= 1
    powertrain_eff: float  # eta in (0, 1]
    battery_kwh: float
    transmission_ratio: float = 1.0
    wheel_radius_m: float = 0.3

    def __post_init__(self):
        if self.mass_kg <= 0 or self.cd <= 0 or self.frontal_area_m2 <= 0:
            raise InputError(f"vehicle {self.name}: mass, CD and area must be positive")
        if self.battery_kwh <= 0:
            raise InputError(f"vehicle {self.name}: battery capacity must be positive")
        if not 0 < self.powertrain_eff <= 1:
            raise InputError(f"vehicle {self.name}: efficiency must be in (0, 1]")


@dataclass(frozen=True)
class DriveState:
    speed_kmh: float
    accel_ms2: float = 0.0
    grade_rad: float = 0.0

    def __post_init__(self):
        if self.speed_kmh < 0:
            raise InputError("speed must be >= 0")


class ForceComponents(NamedTuple):
    rolling_n: float
    grade_n: float
    aero_n: float
    inertia_n: float

    @property
    def total_n(self) -> float:
        return self.rolling_n + self.grade_n + self.aero_n + self.inertia_n


def force_components(spec: VehicleSpec, state: DriveState, g: float = G_DEFAULT) -> ForceComponents:
    """The four tractive-force terms, individually retrievable."""
    rolling = spec.mass_kg * g * math.cos(state.grade_rad) * spec.rolling_coeff
    grade = spec.mass_kg * g * math.sin(state.grade_rad)
    aero = spec.cd * spec.frontal_area_m2 * state.speed_kmh**2 / 21.15
    inertia = spec.rotating_mass_coeff * spec.mass_kg * state.accel_ms2
    return ForceComponents(rolling, grade, aero, inertia)


def tractive_force(spec: VehicleSpec, state: DriveState, g: float = G_DEFAULT) -> float:
    """Total tractive force in N."""
    return force_components(spec, state, g).total_n


def tractive_power(
    spec: VehicleSpec,
    state: DriveState,
    g: float = G_DEFAULT,
    regen_eff: float = 0.0,
) -> tuple[float, float]:
    """(wheel W, battery W). Wheel power is force times speed in m/s.

    Positive wheel power is drawn from the battery through the
    powertrain efficiency; negative wheel power recovers energy only
    through the optional regeneration efficiency (0 disables it).
    """
    wheel = tractive_force(spec, state, g) * state.speed_kmh / 3.6
    if wheel > 0:
        battery = wheel / spec.powertrain_eff
    else:
        battery = wheel * regen_eff
    return wheel, battery


def link_energy(
    spec: VehicleSpec,
    length_m: float,
    speed_kmh: float,
    grade_rad: float = 0.0,
    g: float = G_DEFAULT,
    regen_eff: float = 0.0,
) -> float:
    """Battery energy in kWh for a steady-speed traversal of one link."""
    if length_m <= 0 or speed_kmh <= 0:
        raise InputError("link length and speed must be positive")
    _, battery_w = tractive_power(
        spec, DriveState(speed_kmh=speed_kmh, grade_rad=grade_rad), g, regen_eff
    )
    seconds = length_m / (speed_kmh / 3.6)
    return battery_w * seconds / 3.6e6


def load_fleet(path: str | Path | None = None) -> tuple[VehicleSpec, ...]:
    """Read a fleet file (JSON array of vehicle specs).

    With no path, the bundled default fleet of popular EV models is
    returned; its figures are plausible public numbers, not ground truth.
    """
    if path is None:
        text = resources.files("evgridplan.data").joinpath("default_fleet.json").read_text()
    else:
        text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"fleet file is not valid JSON: {exc}") from exc
    return tuple(VehicleSpec(**entry) for entry in raw)
