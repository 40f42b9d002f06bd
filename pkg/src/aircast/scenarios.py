"""Monte-Carlo scenario sampling and estimation.

One scenario is a joint draw of every flight's departure time and per-edge
travel times, with overflight times derived by summation.  Storage is
columnar (one array of length M per sampled element) so estimation is
vectorized; ``Scenario`` views are materialized on demand.

Reproducibility: each (flight, element) pair owns a Philox stream keyed by
(master_seed, flight index, element index); the scenario index selects the
position in the stream.  Results are therefore independent of any parallel
execution schedule.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import pdfs
from .sectors import SectorTimeline, Slicing, TimelineRow


@dataclass(frozen=True)
class FlightSample:
    departure: float
    edge_times: dict  # (frm, to) -> minutes
    overflight: dict  # point id -> minutes


@dataclass(frozen=True)
class Scenario:
    index: int
    flights: dict  # flight id -> FlightSample


@dataclass
class ScenarioSet:
    master_seed: int
    size: int
    flight_ids: list
    routes: dict  # flight id -> point tuple
    departures: dict = field(default_factory=dict)  # flight -> array (M,)
    edge_times: dict = field(default_factory=dict)  # (flight, frm, to) -> arr
    overflights: dict = field(default_factory=dict)  # (flight, point) -> arr
    stream_keys: dict = field(default_factory=dict)  # stream -> seed tuple

    def __len__(self) -> int:
        return self.size

    def scenario(self, i: int) -> Scenario:
        flights = {}
        for fid in self.flight_ids:
            route = self.routes[fid]
            flights[fid] = FlightSample(
                departure=float(self.departures[fid][i]),
                edge_times={
                    (a, b): float(self.edge_times[(fid, a, b)][i])
                    for a, b in zip(route, route[1:])
                },
                overflight={
                    p: float(self.overflights[(fid, p)][i]) for p in route
                },
            )
        return Scenario(index=i, flights=flights)

    def arrivals(self, fid: str) -> np.ndarray:
        return self.overflights[(fid, self.routes[fid][-1])]


def _stream(master_seed: int, flight_idx: int, element_idx: int,
            size: int) -> np.ndarray:
    key = (int(master_seed), int(flight_idx), int(element_idx))
    gen = np.random.Generator(
        np.random.Philox(np.random.SeedSequence(key))
    )
    return gen.random(size)


def sample_scenarios(plans, shifts=None, M: int = 100_000,
                     master_seed: int = 0) -> ScenarioSet:
    """Draw M complete scenarios under the given per-edge mean shifts."""
    if M < 1:
        raise ValueError("M must be >= 1")
    shifts = shifts or {}
    plan_list = sorted(plans.values() if isinstance(plans, dict) else plans,
                       key=lambda p: p.id)
    out = ScenarioSet(
        master_seed=master_seed,
        size=M,
        flight_ids=[p.id for p in plan_list],
        routes={p.id: p.route for p in plan_list},
    )
    for fi, plan in enumerate(plan_list):
        fshifts = shifts.get(plan.id, {})
        u = _stream(master_seed, fi, 0, M)
        out.stream_keys[(plan.id, "departure")] = (master_seed, fi, 0)
        dep = plan.departure.ppf(u)
        out.departures[plan.id] = dep
        times = np.asarray(dep, dtype=float).copy()
        out.overflights[(plan.id, plan.route[0])] = dep
        for ei, edge in enumerate(plan.route_edges(), start=1):
            travel = pdfs.shift(edge.travel, fshifts.get(edge.key, 0.0))
            u = _stream(master_seed, fi, ei, M)
            out.stream_keys[(plan.id, edge.key)] = (master_seed, fi, ei)
            dt = travel.ppf(u)
            out.edge_times[(plan.id, edge.frm, edge.to)] = dt
            times = times + dt
            out.overflights[(plan.id, edge.to)] = times
    return out


def estimate_congestion(scenario_set: ScenarioSet, sectors,
                        slicing: Slicing, epsilon: float = 0.75,
                        route_indices=None) -> SectorTimeline:
    """Fraction of scenarios whose intersecting-interval count exceeds
    capacity, per sector and slice.  Intervals are closed: touching the
    slice boundary counts as presence."""
    route_indices = route_indices or {}
    timeline = SectorTimeline(epsilon=epsilon)
    for sector in sectors:
        crossings = []
        for fid in scenario_set.flight_ids:
            ri = route_indices.get(fid, 0)
            c = sector.crossing(fid, ri)
            if c is not None:
                entry = scenario_set.overflights[(fid, c[0])]
                exit_ = scenario_set.overflights[(fid, c[1])]
                crossings.append((entry, exit_))
        for sl in slicing.slices():
            occ = np.zeros(scenario_set.size, dtype=np.int64)
            for entry, exit_ in crossings:
                occ += (entry <= sl.t1) & (exit_ >= sl.t0)
            p = float(np.mean(occ > sector.capacity))
            timeline.rows.append(
                TimelineRow(sector.id, sl.t0, sl.t1, p, p > epsilon)
            )
    return timeline


def estimate_expected_arrivals(scenario_set: ScenarioSet) -> dict:
    """Per-flight (sample mean, 3*sigma/sqrt(M) half-width)."""
    if scenario_set.size < 2:
        raise ValueError("need M >= 2 for a confidence half-width")
    out = {}
    for fid in scenario_set.flight_ids:
        arr = scenario_set.arrivals(fid)
        half = 3.0 * float(np.std(arr, ddof=1)) / np.sqrt(len(arr))
        out[fid] = (float(np.mean(arr)), half)
    return out


def dump_scenarios(scenario_set: ScenarioSet, fh) -> None:
    """JSON-lines dump, one scenario per line."""
    for i in range(scenario_set.size):
        sc = scenario_set.scenario(i)
        rec = {
            "index": sc.index,
            "flights": {
                fid: {
                    "departure": fs.departure,
                    "edges": {
                        f"{a}-{b}": t for (a, b), t in fs.edge_times.items()
                    },
                    "overflight": fs.overflight,
                }
                for fid, fs in sc.flights.items()
            },
        }
        fh.write(json.dumps(rec) + "\n")
