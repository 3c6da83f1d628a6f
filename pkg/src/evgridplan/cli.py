"""Command-line pipeline: demand simulation, power-flow checks, and the
GA-driven charger placement, with figures rendered next to the CSV/JSON
outputs.

Exit codes: 0 success, 1 input error, 2 numerical failure.
"""

from __future__ import annotations

import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import click
import numpy as np

from . import dispatch as dp
from . import report, roadnet, tripsim
from .config import PlannerConfig, load_config
from .errors import EvGridPlanError, InputError, NumericalError
from .matpower import case_to_dict, parse_matpower_case
from .miga import Chromosome, GaHistory, GeneBounds, run_ga
from .powerflow import InjectionSpec, solve_newton
from .vehicle import DriveState, force_components, link_energy, load_fleet, tractive_power
from .ybus import build_ybus


def _write_json(path: Path, payload) -> None:
    def clean(obj):
        if isinstance(obj, dict):
            return {k: clean(v) for k, v in obj.items()}
        if isinstance(obj, (list, tuple)):
            return [clean(v) for v in obj]
        if isinstance(obj, np.ndarray):
            return clean(obj.tolist())
        if isinstance(obj, (np.integer,)):
            return int(obj)
        if isinstance(obj, (np.floating,)):
            obj = float(obj)
        if isinstance(obj, float) and not math.isfinite(obj):
            return None
        return obj

    path.write_text(json.dumps(clean(payload), sort_keys=True, indent=2) + "\n")


def _load_case(path: Path):
    case = parse_matpower_case(Path(path).read_text())
    return case, build_ybus(case)


def base_injections(case) -> InjectionSpec:
    """Net injections with all generators at their case dispatch."""
    pos = case.bus_positions()
    p = np.zeros(case.n)
    q = np.zeros(case.n)
    for bus in case.buses:
        p[pos[bus.id]] -= bus.pd_mw / case.base_mva
        q[pos[bus.id]] -= bus.qd_mvar / case.base_mva
    for gen in case.nonslack_gens():
        p[pos[gen.bus]] += gen.pg0_mw / case.base_mva
        q[pos[gen.bus]] += gen.qg0_mvar / case.base_mva
    return InjectionSpec(p_pu=p, q_pu=q, slack=pos[case.slack_bus().id])


# ---------------------------------------------------------------------------
# GA plumbing: positional station genes, master-side cache, worker pool

@dataclass
class _OpfObjective:
    """Maps positional integer genes onto bus ids before evaluating."""

    evaluator: dp.FitnessEvaluator
    bus_ids: np.ndarray

    def decision(self, real_genes, int_genes) -> dp.DecisionVector:
        return self.evaluator.decision_vector(real_genes, self.bus_ids[int_genes])

    def __call__(self, real_genes, int_genes) -> float:
        return self.evaluator.report(self.decision(real_genes, int_genes)).objective

    def report(self, real_genes, int_genes) -> dp.FitnessReport:
        return self.evaluator.report(self.decision(real_genes, int_genes))


_WORKER_OBJECTIVE: _OpfObjective | None = None


def _init_worker(objective: _OpfObjective) -> None:
    global _WORKER_OBJECTIVE
    _WORKER_OBJECTIVE = objective


def _worker_eval(genes: tuple[np.ndarray, np.ndarray]) -> float:
    return _WORKER_OBJECTIVE(genes[0], genes[1])


class _BatchEval:
    """Deduplicating batch evaluator with an optional process pool.

    Results are keyed by gene bytes; the cache is sound because fitness
    is pure, and pooled evaluation never touches the evolution RNG.
    """

    def __init__(self, objective: _OpfObjective, workers: int | None):
        self.objective = objective
        self.cache: dict = {}
        self.pool = None
        if workers is not None and workers > 1:
            self.pool = ProcessPoolExecutor(
                max_workers=workers, initializer=_init_worker, initargs=(objective,)
            )

    def __call__(self, chromosomes: list[Chromosome]) -> list[float]:
        keys = [(c.real_genes.tobytes(), c.int_genes.tobytes()) for c in chromosomes]
        todo: list[tuple] = []
        todo_genes = []
        seen = set()
        for key, c in zip(keys, chromosomes):
            if key not in self.cache and key not in seen:
                seen.add(key)
                todo.append(key)
                todo_genes.append((c.real_genes, c.int_genes))
        if todo:
            if self.pool is not None:
                chunk = max(1, len(todo_genes) // (4 * self.pool._max_workers))
                values = list(self.pool.map(_worker_eval, todo_genes, chunksize=chunk))
            else:
                values = [self.objective(r, i) for r, i in todo_genes]
            self.cache.update(zip(todo, values))
        return [self.cache[k] for k in keys]

    def close(self) -> None:
        if self.pool is not None:
            self.pool.shutdown()


def _decision_bounds(case, config: PlannerConfig, n_stations: int):
    """Gene bounds for [Pg | Qg] and the positional station genes."""
    gens = case.nonslack_gens()
    fixed = config.raw.get("fixed_dispatch")
    if fixed is not None:
        pg = np.asarray(fixed["pg"], dtype=float)
        qg = np.asarray(fixed["qg"], dtype=float)
        if len(pg) != len(gens) or len(qg) != len(gens):
            raise InputError(
                f"fixed_dispatch must list {len(gens)} non-slack generator values"
            )
        real_lo = np.concatenate([pg, qg])
        real_hi = real_lo.copy()
    else:
        real_lo = np.array([g.pmin_mw for g in gens] + [g.qmin_mvar for g in gens])
        real_hi = np.array([g.pmax_mw for g in gens] + [g.qmax_mvar for g in gens])

    bus_ids = np.array(sorted(b.id for b in case.buses))
    rng_cfg = config.raw.get("station_bus_range")
    if rng_cfg is not None:
        lo_id, hi_id = int(rng_cfg[0]), int(rng_cfg[1])
        allowed = np.flatnonzero((bus_ids >= lo_id) & (bus_ids <= hi_id))
        if len(allowed) == 0:
            raise InputError(f"station_bus_range {rng_cfg} matches no bus")
        int_lo = np.full(n_stations, int(allowed[0]))
        int_hi = np.full(n_stations, int(allowed[-1]))
    else:
        int_lo = np.zeros(n_stations, dtype=int)
        int_hi = np.full(n_stations, len(bus_ids) - 1)
    return GeneBounds(real_lo, real_hi, int_lo, int_hi), bus_ids


# ---------------------------------------------------------------------------
# pipeline stages (also importable for tests)

def run_simulate_demand(config: PlannerConfig, outdir: Path) -> dict:
    net = roadnet.load_network(config.path("nodes"), config.path("links"))
    stations = roadnet.load_stations(config.path("stations"))
    trips = tripsim.load_trips(config.path("trips"))
    fleet = load_fleet(config.path("fleet", required=False))
    mapping = tripsim.load_station_bus_map(config.path("station_bus_map"))

    rng = np.random.default_rng([config.seed, 0x5EED])
    trips = tripsim.assign_vehicles(trips, fleet, config.ev_fraction, rng)
    results, actions = tripsim.simulate_trips(
        trips,
        net,
        stations,
        factor=config.factor,
        filter_n=config.station_filter_n,
        g=config.gravity,
        regen_eff=config.regen_efficiency,
    )
    profiles = tripsim.profiles_from_results(results, stations)
    bus_series = tripsim.aggregate_to_buses(profiles, mapping, config.step_min)

    outdir.mkdir(parents=True, exist_ok=True)
    stamp = f"config={config.config_hash()} seed={config.seed}"
    profiles_path = outdir / "profiles.csv"
    tripsim.write_profile_csv(profiles, profiles_path, header_comment=stamp)

    bus_path = outdir / "bus_series.csv"
    with open(bus_path, "w", newline="") as fh:
        fh.write(f"# {stamp}\n")
        fh.write("step," + ",".join(f"bus_{b.bus_id}" for b in bus_series) + "\n")
        steps = len(bus_series[0].series_mw) if bus_series else 0
        for t in range(steps):
            fh.write(
                f"{t}," + ",".join(repr(float(b.series_mw[t])) for b in bus_series) + "\n"
            )

    artifacts = [profiles_path, bus_path]
    if config.figures:
        fig1 = outdir / "profiles.png"
        fig2 = outdir / "bus_load.png"
        report.charging_profiles_figure(profiles, fig1)
        report.bus_load_figure(bus_series, config.step_min, fig2)
        artifacts += [fig1, fig2]

    ev_trips = sum(1 for t in trips if t.is_ev)
    summary = {
        "trips": len(trips),
        "ev_trips": ev_trips,
        "actions": dict(sorted(actions.items())),
        "infeasible_trips": sum(1 for r in results if not r.feasible),
        "total_energy_kwh": sum(p.energy_kwh() for p in profiles.values()),
        "profiles_csv": str(profiles_path),
        "artifacts": [str(p) for p in artifacts],
    }
    return summary


def run_solve_opf(
    config: PlannerConfig,
    profiles_path: Path,
    outdir: Path,
    ga_overrides: dict | None = None,
) -> dict:
    case, y = _load_case(config.path("case"))
    ev_minute = dp.EvLoadSet.from_profile_csv(profiles_path)
    ev = ev_minute.resampled(config.step_min)

    bounds, bus_ids = _decision_bounds(case, config, ev.n_stations)
    evaluator = dp.FitnessEvaluator(
        case, y, ev, config.penalty_weights(), config.pf_tol, config.pf_max_iter
    )
    objective = _OpfObjective(evaluator, bus_ids)
    ga_cfg = config.ga_config(**(ga_overrides or {}))
    batch = _BatchEval(objective, config.workers)
    try:
        best, history = run_ga(ga_cfg, objective, bounds, batch_eval=batch)
    finally:
        batch.close()

    # self-check: one fresh, uncached evaluation of the returned optimum
    best_decision = objective.decision(best.real_genes, best.int_genes)
    fresh = dp.fitness(
        best_decision, case, y, ev, config.penalty_weights(), config.pf_tol, config.pf_max_iter
    )
    if not math.isclose(fresh.objective, best.fitness, rel_tol=1e-12, abs_tol=1e-9):
        raise NumericalError(
            f"stored best fitness {best.fitness} disagrees with re-evaluation {fresh.objective}"
        )

    outdir.mkdir(parents=True, exist_ok=True)
    stamp = f"config={config.config_hash()} seed={ga_cfg.seed}"
    history_path = outdir / "ga_history.csv"
    history.write_csv(history_path, header_comment=stamp)

    result = {
        "best_placement": best_decision.stations.tolist(),
        "best_dispatch": {
            "pg_mw": best_decision.pg_mw.tolist(),
            "qg_mvar": best_decision.qg_mvar.tolist(),
        },
        "total_cost": fresh.total_cost,
        "penalty": fresh.penalty,
        "objective": fresh.objective,
        "feasible": fresh.feasible,
        "per_step_slack_mw": list(fresh.per_step_slack_mw),
        "worst_voltage_pu": fresh.worst_voltage_pu,
        "generations": len(history.best_fitness),
        "evaluations_cached": len(batch.cache),
        "ga_history_csv": history_path.name,
        "config_hash": config.config_hash(),
        "seed": ga_cfg.seed,
    }
    result_path = outdir / "plan_result.json"
    _write_json(result_path, result)

    artifacts = [history_path, result_path]
    if config.figures:
        fig = outdir / "convergence.png"
        report.convergence_figure(history, fig)
        artifacts.append(fig)
    result["artifacts"] = [str(p) for p in artifacts]
    return result


def verify_plan_result(result_path: Path, config: PlannerConfig, profiles_path: Path) -> bool:
    """Load-time tamper check: re-evaluate the stored decision vector."""
    stored = json.loads(Path(result_path).read_text())
    case, y = _load_case(config.path("case"))
    ev = dp.EvLoadSet.from_profile_csv(profiles_path).resampled(config.step_min)
    x = dp.DecisionVector(
        pg_mw=np.array(stored["best_dispatch"]["pg_mw"]),
        qg_mvar=np.array(stored["best_dispatch"]["qg_mvar"]),
        stations=np.array(stored["best_placement"], dtype=int),
    )
    fresh = dp.fitness(
        x, case, y, ev, config.penalty_weights(), config.pf_tol, config.pf_max_iter
    )
    return math.isclose(fresh.total_cost, stored["total_cost"], rel_tol=1e-12, abs_tol=1e-9)


def run_plan(config: PlannerConfig, outdir: Path) -> dict:
    """simulate-demand then solve-opf, plus the linking manifest."""
    import hashlib

    iterations = int(config.feedback_iterations)
    stage_dir = outdir
    summary = run_simulate_demand(config, stage_dir)
    result = run_solve_opf(config, Path(summary["profiles_csv"]), stage_dir)

    # optional feedback hook (off by default): restrict the station set
    # to stations whose mapped bus was chosen, then rerun one pass
    for it in range(2, iterations + 1):
        if config.feedback_mode == "augment":
            break  # documented no-op: the station set is unchanged
        mapping = tripsim.load_station_bus_map(config.path("station_bus_map"))
        chosen = set(result["best_placement"])
        keep = {sid for sid, bus in mapping.items() if bus in chosen}
        if not keep:
            raise InputError("feedback iteration removed every station")
        stations = [s for s in roadnet.load_stations(config.path("stations")) if s.id in keep]
        stage_dir = outdir / f"iter_{it}"
        stage_dir.mkdir(parents=True, exist_ok=True)
        roadnet.save_stations(stations, stage_dir / "stations.csv")
        sub = PlannerConfig(
            raw={**config.raw, "paths": {**config.paths, "stations": str(stage_dir / "stations.csv")}}
        )
        summary = run_simulate_demand(sub, stage_dir)
        result = run_solve_opf(sub, Path(summary["profiles_csv"]), stage_dir)

    artifacts = sorted(
        {Path(p) for p in summary["artifacts"] + result["artifacts"]}, key=str
    )
    manifest = {
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "config": config.raw,
        "artifacts": {
            p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in artifacts
        },
        "best_placement": result["best_placement"],
        "total_cost": result["total_cost"],
    }
    _write_json(outdir / "manifest.json", manifest)
    return manifest


# ---------------------------------------------------------------------------
# click surface

@click.group()
def cli():
    """EV charging demand simulation and grid-side charger placement."""


@cli.command("validate-case")
@click.argument("case_path", type=click.Path(exists=True))
@click.option("--json-out", type=click.Path(), default=None, help="Write the parsed case as JSON.")
def cmd_validate_case(case_path, json_out):
    """Parse a case, build Y, and run the base power flow."""
    case, y = _load_case(Path(case_path))
    sol = solve_newton(y, base_injections(case))
    click.echo(f"buses: {case.n}  generators: {len(case.gens)}  branches: {len(case.branches)}")
    click.echo(
        f"base power flow: converged={sol.converged} iterations={sol.iterations} "
        f"max_mismatch={sol.max_mismatch_pu:.3e} pu"
    )
    click.echo(f"slack injection: {sol.slack_p_pu * case.base_mva:.3f} MW, "
               f"{sol.slack_q_pu * case.base_mva:.3f} MVAr")
    if json_out:
        _write_json(Path(json_out), case_to_dict(case))
    if not sol.converged:
        raise NumericalError("base power flow did not converge")


@cli.command("solve-pf")
@click.argument("case_path", type=click.Path(exists=True))
@click.option("--tol", type=float, default=1e-8, show_default=True)
@click.option("--max-iter", type=int, default=20, show_default=True)
def cmd_solve_pf(case_path, tol, max_iter):
    """One-shot power flow at the case dispatch; solution as JSON."""
    case, y = _load_case(Path(case_path))
    sol = solve_newton(y, base_injections(case), tol=tol, max_iter=max_iter)
    payload = {
        "converged": sol.converged,
        "iterations": sol.iterations,
        "max_mismatch_pu": sol.max_mismatch_pu,
        "vm_pu": sol.vm.tolist(),
        "va_rad": sol.va.tolist(),
        "slack_p_mw": sol.slack_p_pu * case.base_mva,
        "slack_q_mvar": sol.slack_q_pu * case.base_mva,
        "bus_ids": [b.id for b in case.buses],
    }
    click.echo(json.dumps(payload, indent=2, sort_keys=True))
    if not sol.converged:
        raise NumericalError("power flow did not converge")


@cli.command("route")
@click.option("--nodes", "nodes_path", required=True, type=click.Path(exists=True))
@click.option("--links", "links_path", required=True, type=click.Path(exists=True))
@click.argument("origin", type=int)
@click.argument("destination", type=int)
def cmd_route(nodes_path, links_path, origin, destination):
    """Shortest path between two nodes, printed as JSON."""
    net = roadnet.load_network(nodes_path, links_path)
    route = net.shortest_path(origin, destination)
    click.echo(
        json.dumps(
            {
                "nodes": list(route.node_seq),
                "total_length_m": route.total_length_m,
                "travel_minutes": net.route_travel_minutes(route),
            },
            indent=2,
        )
    )


@cli.command("energy")
@click.option("--fleet", "fleet_path", type=click.Path(exists=True), default=None)
@click.option("--vehicle", "vehicle_name", required=True)
@click.option("--speed", type=float, required=True, help="km/h")
@click.option("--grade", type=float, default=0.0, help="road slope in radians")
@click.option("--accel", type=float, default=0.0, help="m/s^2")
@click.option("--length", type=float, default=None, help="link length in m")
@click.option("--gravity", type=float, default=9.81)
def cmd_energy(fleet_path, vehicle_name, speed, grade, accel, length, gravity):
    """Evaluate the energy model for one vehicle and drive state."""
    fleet = load_fleet(fleet_path)
    matches = [v for v in fleet if v.name.lower() == vehicle_name.lower()]
    if not matches:
        raise InputError(f"vehicle {vehicle_name!r} not in fleet ({[v.name for v in fleet]})")
    vehicle = matches[0]
    state = DriveState(speed_kmh=speed, accel_ms2=accel, grade_rad=grade)
    comps = force_components(vehicle, state, gravity)
    wheel, battery = tractive_power(vehicle, state, gravity)
    payload = {
        "vehicle": vehicle.name,
        "force_n": {
            "rolling": comps.rolling_n,
            "grade": comps.grade_n,
            "aero": comps.aero_n,
            "inertia": comps.inertia_n,
            "total": comps.total_n,
        },
        "wheel_power_w": wheel,
        "battery_power_w": battery,
    }
    if length is not None:
        payload["link_energy_kwh"] = link_energy(vehicle, length, speed, grade, gravity)
    click.echo(json.dumps(payload, indent=2, sort_keys=True))


def _config_from_options(config_path, overrides) -> PlannerConfig:
    return load_config(config_path, overrides={k: v for k, v in overrides.items() if v is not None})


@cli.command("simulate-demand")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("-o", "--output-dir", type=click.Path(), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--ev-fraction", type=float, default=None)
@click.option("--factor", type=float, default=None)
@click.option("--no-figures", is_flag=True, default=False)
def cmd_simulate_demand(config_path, output_dir, seed, ev_fraction, factor, no_figures):
    """Simulate trips and write station/bus charging profiles."""
    config = _config_from_options(
        config_path,
        {
            "output_dir": output_dir,
            "seed": seed,
            "ev_fraction": ev_fraction,
            "factor": factor,
            "figures": False if no_figures else None,
        },
    )
    summary = run_simulate_demand(config, Path(config.output_dir))
    click.echo(json.dumps(summary, indent=2, sort_keys=True))


@cli.command("solve-opf")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--profiles", "profiles_path", type=click.Path(exists=True), required=True)
@click.option("-o", "--output-dir", type=click.Path(), default=None)
@click.option("--pop-size", type=int, default=None)
@click.option("--max-gen", type=int, default=None)
@click.option("--seed", type=int, default=None, help="GA seed override.")
@click.option("--workers", type=int, default=None)
@click.option("--no-figures", is_flag=True, default=False)
@click.option(
    "--evaluate",
    "evaluate_path",
    type=click.Path(exists=True),
    default=None,
    help="Skip the GA; emit the FitnessReport of this decision-vector JSON.",
)
def cmd_solve_opf(
    config_path, profiles_path, output_dir, pop_size, max_gen, seed, workers, no_figures, evaluate_path
):
    """Optimize charger placement and dispatch against an EV profile CSV."""
    config = _config_from_options(
        config_path,
        {
            "output_dir": output_dir,
            "workers": workers,
            "figures": False if no_figures else None,
        },
    )
    if evaluate_path is not None:
        case, y = _load_case(config.path("case"))
        ev = dp.EvLoadSet.from_profile_csv(profiles_path).resampled(config.step_min)
        spec = json.loads(Path(evaluate_path).read_text())
        x = dp.DecisionVector(
            pg_mw=np.array(spec["pg_mw"], dtype=float),
            qg_mvar=np.array(spec["qg_mvar"], dtype=float),
            stations=np.array(spec["stations"], dtype=int),
        )
        rep = dp.fitness(x, case, y, ev, config.penalty_weights(), config.pf_tol, config.pf_max_iter)
        click.echo(
            json.dumps(
                {
                    "total_cost": rep.total_cost,
                    "penalty": rep.penalty,
                    "objective": rep.objective,
                    "feasible": rep.feasible,
                    "per_step_slack_mw": list(rep.per_step_slack_mw),
                    "worst_voltage_pu": None
                    if math.isnan(rep.worst_voltage_pu)
                    else rep.worst_voltage_pu,
                },
                indent=2,
                sort_keys=True,
            )
        )
        return
    overrides = {"pop_size": pop_size, "max_gen": max_gen, "seed": seed}
    result = run_solve_opf(config, Path(profiles_path), Path(config.output_dir), overrides)
    click.echo(json.dumps({k: v for k, v in result.items() if k != "per_step_slack_mw"},
                          indent=2, sort_keys=True))


@cli.command("plan")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("-o", "--output-dir", type=click.Path(), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--workers", type=int, default=None)
@click.option("--no-figures", is_flag=True, default=False)
def cmd_plan(config_path, output_dir, seed, workers, no_figures):
    """End-to-end pipeline: demand simulation, then placement. One pass."""
    config = _config_from_options(
        config_path,
        {
            "output_dir": output_dir,
            "seed": seed,
            "workers": workers,
            "figures": False if no_figures else None,
        },
    )
    manifest = run_plan(config, Path(config.output_dir))
    click.echo(json.dumps(manifest["artifacts"], indent=2, sort_keys=True))
    click.echo(f"best placement: {manifest['best_placement']}")
    click.echo(f"total cost: {manifest['total_cost']:.2f} $")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.Abort:
        return 1
    except NumericalError as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        return 2
    except (InputError, EvGridPlanError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
