"""Scenario JSON loading and validation.

A scenario file carries the airspace (metering points, sectors), the flight
plans (edges with travel densities and performance bounds, enumerated
routes, departure slot, scheduled arrival) and the run configuration.
Times are decimal minutes from the scenario epoch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from . import pdfs
from .flights import FlightPlan, MeteringPoint, PlanError, RouteEdge
from .pdfs import PiecewisePdf, UniformSpec
from .sectors import Sector, Slicing

SCHEMA_VERSION = 1


class ScenarioError(ValueError):
    """Scenario file violates the schema or a model invariant."""

    def __init__(self, problems, parse=False):
        self.problems = list(problems)
        self.parse = parse
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class SimConfig:
    slice_width: float = 15.0
    horizon: tuple = (0.0, 120.0)
    epsilon: float = 0.75
    p: float = 1.0
    lambda_congestion: float = 100.0
    lambda_reroute: float = 10.0
    samples: int = 100_000
    seed: int = 0
    constraint_mode: str = "hard"

    def slicing(self) -> Slicing:
        return Slicing(self.slice_width, self.horizon[0], self.horizon[1])


@dataclass
class ScenarioFile:
    points: dict  # id -> MeteringPoint
    sectors: list  # of Sector
    plans: dict  # flight id -> FlightPlan
    config: SimConfig
    path: str | None = None


def parse_dist(spec: dict) -> PiecewisePdf:
    """Distribution spec from JSON: uniform bounds or a point mass."""
    kind = spec.get("type")
    if kind == "uniform":
        return pdfs.uniform_pdf(
            UniformSpec(float(spec["lower"]), float(spec["upper"]))
        )
    if kind == "point":
        return pdfs.point_mass(float(spec["t"]))
    raise ValueError(f"unknown distribution type {kind!r}")


def dist_to_json(f: PiecewisePdf) -> dict:
    if f.is_point_mass:
        return {"type": "point", "t": f.point}
    if f.piece_count == 1 and len(f.pieces[0]) == 1:
        return {"type": "uniform", "lower": f.lo, "upper": f.hi}
    raise ValueError("only uniform and point densities serialize")


def load_scenario(path: str) -> ScenarioFile:
    """Parse and fully validate; raises ScenarioError listing violations."""
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError(
                [f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}"], parse=True
            ) from exc
    problems = []
    if raw.get("schema_version") != SCHEMA_VERSION:
        problems.append(
            f"schema_version must be {SCHEMA_VERSION}, "
            f"got {raw.get('schema_version')!r}"
        )

    points = {}
    for pd in raw.get("airspace", {}).get("points", []):
        pid = str(pd.get("id"))
        if pid in points:
            problems.append(f"duplicate point id {pid!r}")
        try:
            points[pid] = MeteringPoint(
                id=pid,
                position=tuple(pd.get("position", (0.0, 0.0, 0.0))),
                kind=pd.get("kind", "interior"),
            )
        except (TypeError, ValueError) as exc:
            problems.append(f"point {pid!r}: {exc}")

    plans = {}
    for fd in raw.get("flights", []):
        fid = str(fd.get("id"))
        try:
            plans[fid] = _parse_flight(fd, points, problems)
        except (KeyError, TypeError, ValueError, PlanError) as exc:
            problems.append(f"flight {fid!r}: {exc}")

    sectors = []
    for sd in raw.get("airspace", {}).get("sectors", []):
        sid = str(sd.get("id"))
        try:
            sectors.append(_parse_sector(sd, plans, problems))
        except (KeyError, TypeError, ValueError) as exc:
            problems.append(f"sector {sid!r}: {exc}")

    config = _parse_config(raw.get("config", {}), problems)
    if problems:
        raise ScenarioError(problems)
    return ScenarioFile(
        points=points, sectors=sectors, plans=plans, config=config, path=path
    )


def _parse_flight(fd: dict, points: dict, problems: list) -> FlightPlan:
    fid = str(fd["id"])
    edges = {}
    for ed in fd.get("edges", []):
        a, b = str(ed["from"]), str(ed["to"])
        for pid in (a, b):
            if pid not in points:
                problems.append(
                    f"flight {fid!r}: edge {a}-{b} references unknown "
                    f"point {pid!r}"
                )
        travel = parse_dist(ed["pdf"])
        if travel.lo < 0:
            problems.append(
                f"flight {fid!r}: edge {a}-{b} allows negative travel time"
            )
        lb = float(ed["lower_bound"])
        ub = float(ed["upper_bound"])
        m = travel.mean()
        if not lb - 1e-9 <= m <= ub + 1e-9:
            problems.append(
                f"flight {fid!r}: edge {a}-{b} mean {m:g} outside bounds "
                f"[{lb:g}, {ub:g}]"
            )
            lb, ub = min(lb, m), max(ub, m)  # keep parsing for diagnostics
        edges[(a, b)] = RouteEdge(
            frm=a, to=b, travel=travel, lower_bound=lb, upper_bound=ub
        )
    routes = tuple(tuple(str(p) for p in r) for r in fd["routes"])
    return FlightPlan(
        id=fid,
        edges=edges,
        routes=routes,
        active_route=int(fd.get("active_route", 0)),
        departure=parse_dist(fd["departure"]),
        scheduled_arrival=float(fd["scheduled_arrival"]),
    )


def _parse_sector(sd: dict, plans: dict, problems: list) -> Sector:
    sid = str(sd["id"])
    capacity = int(sd["capacity"])
    boundaries = {}
    for bd in sd.get("boundaries", []):
        fid = str(bd["flight"])
        ri = int(bd.get("route", 0))
        entry, exit_ = str(bd["entry"]), str(bd["exit"])
        plan = plans.get(fid)
        if plan is None:
            problems.append(
                f"sector {sid!r}: boundary references unknown flight {fid!r}"
            )
            continue
        if ri >= len(plan.routes):
            problems.append(
                f"sector {sid!r}: flight {fid!r} has no route {ri}"
            )
            continue
        route = plan.routes[ri]
        if entry not in route or exit_ not in route:
            problems.append(
                f"sector {sid!r}: boundary points {entry!r}/{exit_!r} not "
                f"on route {ri} of flight {fid!r}"
            )
            continue
        if route.index(entry) >= route.index(exit_):
            problems.append(
                f"sector {sid!r}: entry {entry!r} does not precede exit "
                f"{exit_!r} on route {ri} of flight {fid!r}"
            )
            continue
        boundaries[(fid, ri)] = (entry, exit_)
    if capacity < 1:
        problems.append(f"sector {sid!r}: capacity {capacity} < 1")
        capacity = 1
    return Sector(id=sid, capacity=capacity, boundaries=boundaries)


def _parse_config(cd: dict, problems: list) -> SimConfig:
    try:
        cfg = SimConfig(
            slice_width=float(cd.get("slice_width", 15.0)),
            horizon=tuple(cd.get("horizon", (0.0, 120.0))),
            epsilon=float(cd.get("epsilon", 0.75)),
            p=float(cd.get("p", 1.0)),
            lambda_congestion=float(cd.get("lambda_congestion", 100.0)),
            lambda_reroute=float(cd.get("lambda_reroute", 10.0)),
            samples=int(cd.get("samples", 100_000)),
            seed=int(cd.get("seed", 0)),
            constraint_mode=str(cd.get("constraint_mode", "hard")),
        )
    except (TypeError, ValueError) as exc:
        problems.append(f"config: {exc}")
        return SimConfig()
    if cfg.slice_width <= 0:
        problems.append("config: slice_width must be positive")
    if not cfg.horizon[0] < cfg.horizon[1]:
        problems.append("config: empty horizon")
    if not 0.0 < cfg.epsilon < 1.0:
        problems.append("config: epsilon must be in (0, 1)")
    if cfg.p < 1:
        problems.append("config: p must be >= 1")
    return cfg


def validate_scenario(path: str) -> list:
    """Diagnostics list; empty means the file is valid."""
    try:
        load_scenario(path)
    except ScenarioError as exc:
        return exc.problems
    except OSError as exc:
        return [str(exc)]
    return []
