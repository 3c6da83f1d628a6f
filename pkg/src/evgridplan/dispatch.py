"""EV-augmented injections, generation cost, and the penalized fitness.

A candidate fixes non-slack generator dispatch (constant across the
horizon) and a bus assignment for every charging station; the slack
generator absorbs all temporal variation. Each horizon step is an
independent power-flow solve, so infeasibility shows up as data
(penalty terms), never as an exception.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError
from .matpower import GridCase
from .powerflow import InjectionSpec, SingularJacobian, solve_newton
from .ybus import AdmittanceMatrix


class BusOutOfRange(InputError):
    """A station assignment references a bus id not present in the case."""


@dataclass(frozen=True)
class DecisionVector:
    """Non-slack generator dispatch plus station bus assignments.

    ``pg_mw`` and ``qg_mvar`` follow the case's non-slack generator
    order; ``stations`` holds one bus id per charging station.
    """

    pg_mw: np.ndarray
    qg_mvar: np.ndarray
    stations: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pg_mw", np.asarray(self.pg_mw, dtype=float))
        object.__setattr__(self, "qg_mvar", np.asarray(self.qg_mvar, dtype=float))
        object.__setattr__(self, "stations", np.asarray(self.stations, dtype=int))
        if self.pg_mw.shape != self.qg_mvar.shape:
            raise InputError("pg and qg must have the same length")


@dataclass(frozen=True)
class EvLoadSet:
    """Station active-power time series (MW) on a shared timestep."""

    profiles_mw: np.ndarray  # shape (M, T)
    step_min: float
    station_ids: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "profiles_mw", np.atleast_2d(np.asarray(self.profiles_mw, dtype=float)))
        if self.profiles_mw.size and self.profiles_mw.min() < 0:
            raise InputError("EV load profiles must be non-negative")
        if not self.station_ids:
            object.__setattr__(self, "station_ids", tuple(range(1, self.n_stations + 1)))

    @property
    def n_stations(self) -> int:
        return self.profiles_mw.shape[0]

    @property
    def n_steps(self) -> int:
        return self.profiles_mw.shape[1]

    def resampled(self, step_min: float) -> "EvLoadSet":
        """Block-average onto a coarser step; energy is preserved."""
        if step_min == self.step_min:
            return self
        factor = step_min / self.step_min
        if abs(factor - round(factor)) > 1e-12 or factor < 1:
            raise InputError(
                f"step {step_min} must be an integer multiple of {self.step_min}"
            )
        factor = int(round(factor))
        if self.n_steps % factor:
            raise InputError("profile length is not divisible by the resampling factor")
        blocks = self.profiles_mw.reshape(self.n_stations, self.n_steps // factor, factor)
        return EvLoadSet(blocks.mean(axis=2), step_min, self.station_ids)

    @classmethod
    def from_profile_csv(cls, path: str | Path) -> "EvLoadSet":
        """Read the per-station minute CSV (columns minute, station_<id>, kW)."""
        with open(path, newline="") as fh:
            reader = csv.reader(line for line in fh if not line.startswith("#"))
            header = next(reader)
            if header[0] != "minute" or any(not c.startswith("station_") for c in header[1:]):
                raise InputError(f"{path}: expected header minute, station_<id>, ...")
            ids = tuple(int(c.split("_", 1)[1]) for c in header[1:])
            rows = [[float(v) for v in row[1:]] for row in reader]
        kw = np.array(rows).T if rows else np.zeros((len(ids), 0))
        return cls(kw / 1000.0, step_min=1.0, station_ids=ids)


@dataclass(frozen=True)
class PenaltyWeights:
    voltage: float = 1e6  # $/pu^2
    slack: float = 1e4  # $/MW^2
    divergence: float = 1e9  # $ per diverged step


@dataclass(frozen=True)
class FitnessReport:
    total_cost: float
    penalty: float
    feasible: bool
    per_step_slack_mw: tuple[float | None, ...]
    worst_voltage_pu: float

    @property
    def objective(self) -> float:
        return self.total_cost + self.penalty


def generator_cost(a: float, b: float, c: float, p_mw: float) -> float:
    """Quadratic fuel cost in $/h."""
    return a * p_mw * p_mw + b * p_mw + c


def apply_ev_load(
    case: GridCase, stations: np.ndarray, ev_loads: EvLoadSet, t: int
) -> tuple[np.ndarray, np.ndarray]:
    """Base bus loads (MW, MVAr) plus the step-t station loads.

    EV charging is pure active power: reactive load is untouched.
    """
    if t >= ev_loads.n_steps:
        raise InputError(f"step {t} beyond horizon of {ev_loads.n_steps}")
    pos = case.bus_positions()
    pd = np.array([b.pd_mw for b in case.buses])
    qd = np.array([b.qd_mvar for b in case.buses])
    for j, bus_id in enumerate(np.asarray(stations, dtype=int)):
        if int(bus_id) not in pos:
            raise BusOutOfRange(f"station {j + 1} assigned to unknown bus {bus_id}")
        pd[pos[int(bus_id)]] += ev_loads.profiles_mw[j, t]
    return pd, qd


@dataclass
class FitnessEvaluator:
    """Reusable, picklable fitness context with memoisation.

    The cache is sound because fitness is a pure function of the
    decision vector given fixed case/profiles/weights.
    """

    case: GridCase
    y: AdmittanceMatrix
    ev_loads: EvLoadSet
    weights: PenaltyWeights = PenaltyWeights()
    tol: float = 1e-8
    max_iter: int = 20
    use_cache: bool = True
    _cache: dict = field(default_factory=dict, repr=False)

    def report(self, x: DecisionVector) -> FitnessReport:
        if not self.use_cache:
            return fitness(x, self.case, self.y, self.ev_loads, self.weights, self.tol, self.max_iter)
        key = (x.pg_mw.tobytes(), x.qg_mvar.tobytes(), x.stations.tobytes())
        hit = self._cache.get(key)
        if hit is None:
            hit = fitness(x, self.case, self.y, self.ev_loads, self.weights, self.tol, self.max_iter)
            self._cache[key] = hit
        return hit

    def objective(self, real_genes: np.ndarray, int_genes: np.ndarray) -> float:
        return self.report(self.decision_vector(real_genes, int_genes)).objective

    def decision_vector(self, real_genes: np.ndarray, int_genes: np.ndarray) -> DecisionVector:
        k = len(self.case.nonslack_gens())
        return DecisionVector(
            pg_mw=np.asarray(real_genes[:k], dtype=float),
            qg_mvar=np.asarray(real_genes[k:], dtype=float),
            stations=np.asarray(int_genes, dtype=int),
        )


def fitness(
    x: DecisionVector,
    case: GridCase,
    y: AdmittanceMatrix,
    ev_loads: EvLoadSet,
    weights: PenaltyWeights = PenaltyWeights(),
    tol: float = 1e-8,
    max_iter: int = 20,
) -> FitnessReport:
    """Horizon cost of a candidate plus penalties for violated limits.

    Per step: assemble injections, solve the power flow, price the
    slack generator at the recovered injection and the fixed non-slack
    dispatch at its scheduled output. Diverged steps contribute the
    divergence penalty and a ``None`` slack entry.
    """
    pos = case.bus_positions()
    slack_bus = case.slack_bus()
    slack_idx = pos[slack_bus.id]
    slack_gen = case.slack_gen()
    nonslack = case.nonslack_gens()
    if len(x.pg_mw) != len(nonslack):
        raise InputError(
            f"decision vector has {len(x.pg_mw)} dispatch entries for {len(nonslack)} generators"
        )

    gen_p = np.zeros(case.n)
    gen_q = np.zeros(case.n)
    for gen, pg, qg in zip(nonslack, x.pg_mw, x.qg_mvar):
        gen_p[pos[gen.bus]] += pg
        gen_q[pos[gen.bus]] += qg

    vmin = np.array([b.vmin for b in case.buses])
    vmax = np.array([b.vmax for b in case.buses])
    fixed_cost_per_h = sum(
        generator_cost(g.a, g.b, g.c, pg) for g, pg in zip(nonslack, x.pg_mw)
    )
    step_h = ev_loads.step_min / 60.0

    total_cost = 0.0
    penalty = 0.0
    slack_series: list[float | None] = []
    worst_voltage = float("nan")
    worst_excursion = -np.inf
    solved: dict[bytes, object] = {}
    warm = None

    for t in range(ev_loads.n_steps):
        pd, qd = apply_ev_load(case, x.stations, ev_loads, t)
        key = ev_loads.profiles_mw[:, t].tobytes()
        sol = solved.get(key)
        if sol is None:
            p_spec = (gen_p - pd) / case.base_mva
            q_spec = (gen_q - qd) / case.base_mva
            p_spec[slack_idx] = 0.0
            q_spec[slack_idx] = 0.0
            spec = InjectionSpec(p_pu=p_spec, q_pu=q_spec, slack=slack_idx)
            try:
                if warm is not None and warm.converged:
                    sol = solve_newton(y, spec, tol, max_iter, flat_start=False, vm0=warm.vm, va0=warm.va)
                else:
                    sol = solve_newton(y, spec, tol, max_iter)
            except SingularJacobian:
                sol = None
            solved[key] = sol
            warm = sol

        if sol is None or not sol.converged:
            penalty += weights.divergence
            slack_series.append(None)
            continue

        slack_gen_mw = (
            sol.slack_p_pu * case.base_mva + pd[slack_idx]
        )  # injection plus local load = generator output
        slack_series.append(float(slack_gen_mw))
        total_cost += (
            generator_cost(slack_gen.a, slack_gen.b, slack_gen.c, slack_gen_mw)
            + fixed_cost_per_h
        ) * step_h

        v_viol = np.maximum(0.0, np.maximum(vmin - sol.vm, sol.vm - vmax))
        penalty += weights.voltage * float((v_viol**2).sum())
        excursion = np.maximum(vmin - sol.vm, sol.vm - vmax)
        i_worst = int(np.argmax(excursion))
        if excursion[i_worst] > worst_excursion:
            worst_excursion = float(excursion[i_worst])
            worst_voltage = float(sol.vm[i_worst])

        s_viol = max(0.0, slack_gen_mw - slack_gen.pmax_mw, slack_gen.pmin_mw - slack_gen_mw)
        penalty += weights.slack * s_viol * s_viol

    return FitnessReport(
        total_cost=total_cost,
        penalty=penalty,
        feasible=penalty == 0.0,
        per_step_slack_mw=tuple(slack_series),
        worst_voltage_pu=worst_voltage,
    )
