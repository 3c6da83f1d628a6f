"""MATPOWER-style case file parsing and the validated grid model.

The supported grammar is the matrix subset of the MATPOWER `.m` format:
``mpc.<name> = [ rows ];`` blocks with ``%`` comments and semicolon or
newline row separators. Required blocks: ``baseMVA``, ``bus``, ``gen``,
``branch``, ``gencost``.

Power quantities on the records keep their file units (MW / MVAr);
per-unit conversion happens where matrices and injections are assembled.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, asdict

from .errors import InputError


class MalformedBlock(InputError):
    """A required matrix block is missing, unterminated, or unreadable."""


class UnknownBusReference(InputError):
    """A generator or branch references a bus id that does not exist."""


class MultipleSlackBuses(InputError):
    """More than one bus is marked as the slack (type 3)."""


class UnsupportedCostModel(InputError):
    """Generator cost is not a polynomial of degree <= 2."""


class CaseValidationError(InputError):
    """A structural invariant of the case data is violated."""


class BusKind(enum.Enum):
    SLACK = "slack"
    GENERATOR = "generator"
    LOAD = "load"


@dataclass(frozen=True)
class BusRecord:
    id: int
    kind: BusKind
    pd_mw: float
    qd_mvar: float
    gs_mw: float
    bs_mvar: float
    vmin: float
    vmax: float
    base_kv: float


@dataclass(frozen=True)
class GenRecord:
    bus: int
    pmin_mw: float
    pmax_mw: float
    qmin_mvar: float
    qmax_mvar: float
    # quadratic cost phi(P) = a*P^2 + b*P + c  [$/h with P in MW]
    a: float
    b: float
    c: float
    # dispatch recorded in the case file; the base operating point
    pg0_mw: float = 0.0
    qg0_mvar: float = 0.0


@dataclass(frozen=True)
class BranchRecord:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_total: float
    tap: float = 0.0  # 0 means nominal (1.0)
    shift_deg: float = 0.0
    in_service: bool = True


@dataclass(frozen=True)
class GridCase:
    base_mva: float
    buses: tuple[BusRecord, ...]
    gens: tuple[GenRecord, ...]
    branches: tuple[BranchRecord, ...]

    @property
    def n(self) -> int:
        return len(self.buses)

    def bus_positions(self) -> dict[int, int]:
        """Map bus id -> position in the bus ordering."""
        return {bus.id: i for i, bus in enumerate(self.buses)}

    def slack_bus(self) -> BusRecord:
        return next(b for b in self.buses if b.kind is BusKind.SLACK)

    def slack_gen(self) -> GenRecord:
        slack_id = self.slack_bus().id
        return next(g for g in self.gens if g.bus == slack_id)

    def nonslack_gens(self) -> tuple[GenRecord, ...]:
        slack_id = self.slack_bus().id
        return tuple(g for g in self.gens if g.bus != slack_id)


_BUS_KIND_FROM_TYPE = {3: BusKind.SLACK, 2: BusKind.GENERATOR, 1: BusKind.LOAD}
_BUS_TYPE_FROM_KIND = {v: k for k, v in _BUS_KIND_FROM_TYPE.items()}

_BLOCK_RE = re.compile(r"mpc\.(\w+)\s*=\s*\[", re.MULTILINE)
_SCALAR_RE = re.compile(r"mpc\.baseMVA\s*=\s*([0-9eE.+-]+)\s*;")


def _strip_comments(text: str) -> str:
    return re.sub(r"%[^\n]*", "", text)


def _extract_blocks(text: str) -> dict[str, list[list[float]]]:
    """Pull every ``mpc.<name> = [ rows ];`` block out of the case text."""
    blocks: dict[str, list[list[float]]] = {}
    for match in _BLOCK_RE.finditer(text):
        name = match.group(1)
        start = match.end()
        end = text.find("]", start)
        if end < 0:
            raise MalformedBlock(f"mpc.{name} matrix is not terminated with ']'")
        body = text[start:end]
        rows: list[list[float]] = []
        for raw in re.split(r"[;\n]", body):
            fields = raw.split()
            if not fields:
                continue
            try:
                rows.append([float(f) for f in fields])
            except ValueError as exc:
                raise MalformedBlock(f"mpc.{name}: non-numeric entry in row {raw!r}") from exc
        blocks[name] = rows
    return blocks


def parse_matpower_case(text: str) -> GridCase:
    """Parse MATPOWER case text into a validated :class:`GridCase`.

    Bus kinds come from the bus-type column (3 slack, 2 generator,
    1 load). Generator costs must use the polynomial model with degree
    at most 2; piecewise-linear rows raise :class:`UnsupportedCostModel`.
    Out-of-service generators and their cost rows are dropped.
    """
    stripped = _strip_comments(text)

    scalar = _SCALAR_RE.search(stripped)
    if scalar is None:
        raise MalformedBlock("missing mpc.baseMVA")
    base_mva = float(scalar.group(1))

    blocks = _extract_blocks(stripped)
    for required in ("bus", "gen", "branch", "gencost"):
        if required not in blocks:
            raise MalformedBlock(f"missing mpc.{required} block")

    buses = []
    for row in blocks["bus"]:
        if len(row) < 13:
            raise MalformedBlock(f"bus row has {len(row)} columns, expected >= 13")
        bus_type = int(row[1])
        if bus_type not in _BUS_KIND_FROM_TYPE:
            raise MalformedBlock(f"bus {int(row[0])}: unsupported bus type {bus_type}")
        buses.append(
            BusRecord(
                id=int(row[0]),
                kind=_BUS_KIND_FROM_TYPE[bus_type],
                pd_mw=row[2],
                qd_mvar=row[3],
                gs_mw=row[4],
                bs_mvar=row[5],
                base_kv=row[9],
                vmax=row[11],
                vmin=row[12],
            )
        )

    gen_rows = blocks["gen"]
    cost_rows = blocks["gencost"]
    if len(cost_rows) < len(gen_rows):
        raise MalformedBlock(
            f"gencost has {len(cost_rows)} rows for {len(gen_rows)} generators"
        )

    gens = []
    for row, cost in zip(gen_rows, cost_rows):
        if len(row) < 10:
            raise MalformedBlock(f"gen row has {len(row)} columns, expected >= 10")
        if int(row[7]) <= 0:
            continue
        a, b, c = _polynomial_coeffs(cost)
        gens.append(
            GenRecord(
                bus=int(row[0]),
                pg0_mw=row[1],
                qg0_mvar=row[2],
                qmax_mvar=row[3],
                qmin_mvar=row[4],
                pmax_mw=row[8],
                pmin_mw=row[9],
                a=a,
                b=b,
                c=c,
            )
        )

    branches = []
    for row in blocks["branch"]:
        if len(row) < 11:
            raise MalformedBlock(f"branch row has {len(row)} columns, expected >= 11")
        branches.append(
            BranchRecord(
                from_bus=int(row[0]),
                to_bus=int(row[1]),
                r=row[2],
                x=row[3],
                b_total=row[4],
                tap=row[8],
                shift_deg=row[9],
                in_service=int(row[10]) > 0,
            )
        )

    case = GridCase(
        base_mva=base_mva,
        buses=tuple(buses),
        gens=tuple(gens),
        branches=tuple(branches),
    )
    validate_case(case)
    return case


def _polynomial_coeffs(cost_row: list[float]) -> tuple[float, float, float]:
    """Map a gencost row to (a, b, c); reject anything beyond quadratic."""
    if len(cost_row) < 4:
        raise MalformedBlock("gencost row too short")
    model = int(cost_row[0])
    if model != 2:
        raise UnsupportedCostModel(f"gencost model {model} not supported (polynomial only)")
    ncost = int(cost_row[3])
    if ncost > 3:
        raise UnsupportedCostModel(f"polynomial degree {ncost - 1} > 2 not supported")
    coeffs = cost_row[4 : 4 + ncost]
    if len(coeffs) != ncost:
        raise MalformedBlock("gencost row missing coefficients")
    # pad to quadratic: stored highest-degree first
    padded = [0.0] * (3 - ncost) + list(coeffs)
    return padded[0], padded[1], padded[2]


def validate_case(case: GridCase) -> None:
    """Check the structural invariants; raise on the first violation."""
    ids = [b.id for b in case.buses]
    if len(set(ids)) != len(ids):
        raise CaseValidationError("bus ids are not unique")
    slack_ids = [b.id for b in case.buses if b.kind is BusKind.SLACK]
    if len(slack_ids) > 1:
        raise MultipleSlackBuses(f"buses {slack_ids} are all marked slack")
    if not slack_ids:
        raise CaseValidationError("no slack bus in case")
    for bus in case.buses:
        if bus.vmin > bus.vmax:
            raise CaseValidationError(f"bus {bus.id}: Vmin {bus.vmin} > Vmax {bus.vmax}")

    known = set(ids)
    gen_buses = set()
    for gen in case.gens:
        if gen.bus not in known:
            raise UnknownBusReference(f"generator references unknown bus {gen.bus}")
        if gen.bus in gen_buses:
            raise CaseValidationError(f"bus {gen.bus} hosts more than one generator")
        gen_buses.add(gen.bus)
        if gen.pmin_mw > gen.pmax_mw:
            raise CaseValidationError(f"gen at bus {gen.bus}: Pmin > Pmax")
        if gen.qmin_mvar > gen.qmax_mvar:
            raise CaseValidationError(f"gen at bus {gen.bus}: Qmin > Qmax")
    if slack_ids[0] not in gen_buses:
        raise CaseValidationError(f"slack bus {slack_ids[0]} hosts no generator")

    for br in case.branches:
        if br.from_bus not in known or br.to_bus not in known:
            raise UnknownBusReference(
                f"branch {br.from_bus}-{br.to_bus} references an unknown bus"
            )
        if br.from_bus == br.to_bus:
            raise CaseValidationError(f"branch at bus {br.from_bus} is a self-loop")


def format_case(case: GridCase) -> str:
    """Serialize a GridCase back to MATPOWER case text.

    Numbers are written with repr so parse -> format -> parse is exact.
    """
    lines = ["function mpc = case", "mpc.version = '2';", ""]
    lines.append(f"mpc.baseMVA = {case.base_mva!r};")

    lines.append("mpc.bus = [")
    for b in case.buses:
        lines.append(
            f"\t{b.id}\t{_BUS_TYPE_FROM_KIND[b.kind]}\t{b.pd_mw!r}\t{b.qd_mvar!r}"
            f"\t{b.gs_mw!r}\t{b.bs_mvar!r}\t1\t1\t0\t{b.base_kv!r}\t1"
            f"\t{b.vmax!r}\t{b.vmin!r};"
        )
    lines.append("];")

    lines.append("mpc.gen = [")
    for g in case.gens:
        lines.append(
            f"\t{g.bus}\t{g.pg0_mw!r}\t{g.qg0_mvar!r}\t{g.qmax_mvar!r}\t{g.qmin_mvar!r}"
            f"\t1\t{case.base_mva!r}\t1\t{g.pmax_mw!r}\t{g.pmin_mw!r};"
        )
    lines.append("];")

    lines.append("mpc.branch = [")
    for br in case.branches:
        lines.append(
            f"\t{br.from_bus}\t{br.to_bus}\t{br.r!r}\t{br.x!r}\t{br.b_total!r}"
            f"\t0\t0\t0\t{br.tap!r}\t{br.shift_deg!r}\t{1 if br.in_service else 0};"
        )
    lines.append("];")

    lines.append("mpc.gencost = [")
    for g in case.gens:
        lines.append(f"\t2\t0\t0\t3\t{g.a!r}\t{g.b!r}\t{g.c!r};")
    lines.append("];")

    return "\n".join(lines) + "\n"


def case_to_dict(case: GridCase) -> dict:
    """JSON-friendly view of the case (enum kinds as strings)."""
    out = asdict(case)
    for bus in out["buses"]:
        bus["kind"] = bus["kind"].value
    return out
