"""EV charging demand simulation and grid-side charger placement.

Library layout mirrors the pipeline: MATPOWER case parsing and Y-bus
assembly, a Newton power-flow kernel, the EV-augmented dispatch-cost
fitness, the mixed-integer GA, the road network with charger-selection
logic, the trip simulator, and a CLI that ties them together.
"""

from .dispatch import DecisionVector, EvLoadSet, FitnessReport, PenaltyWeights, fitness
from .matpower import GridCase, parse_matpower_case
from .miga import GaConfig, GeneBounds, run_ga
from .powerflow import InjectionSpec, PowerFlowSolution, solve_newton
from .roadnet import RoadNetwork, StationSite, haversine, synthetic_grid
from .tripsim import Trip, decide_action, generate_profiles, simulate_trip
from .vehicle import DriveState, VehicleSpec, link_energy, tractive_force
from .ybus import AdmittanceMatrix, build_ybus

__version__ = "0.1.0"

__all__ = [
    "AdmittanceMatrix",
    "DecisionVector",
    "DriveState",
    "EvLoadSet",
    "FitnessReport",
    "GaConfig",
    "GeneBounds",
    "GridCase",
    "InjectionSpec",
    "PenaltyWeights",
    "PowerFlowSolution",
    "RoadNetwork",
    "StationSite",
    "Trip",
    "VehicleSpec",
    "build_ybus",
    "decide_action",
    "fitness",
    "generate_profiles",
    "haversine",
    "link_energy",
    "parse_matpower_case",
    "run_ga",
    "simulate_trip",
    "solve_newton",
    "synthetic_grid",
    "tractive_force",
    "__version__",
]
