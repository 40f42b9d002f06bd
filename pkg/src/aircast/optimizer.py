"""Clearance optimization over route choices and bounded edge mean shifts.

The search space mixes one discrete route index per flight with one bounded
continuous shift per traversed edge.  A random-restart (1+lambda) evolution
strategy with adaptive Gaussian steps searches it; the congestion threshold
acts either as a hard feasibility constraint or as a weighted penalty.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import flights, pdfs, scenarios, sectors
from .flights import FlightPlan, TrajectoryBelief, rebuild_after_reroute
from .sectors import Slicing


@dataclass(frozen=True)
class DecisionVector:
    routes: dict  # flight id -> route index
    shifts: dict  # flight id -> {(frm, to): minutes}

    def total_shift(self) -> float:
        return sum(
            abs(d) for per in self.shifts.values() for d in per.values()
        )

    def canonical_key(self) -> tuple:
        items = []
        for fid in sorted(self.routes):
            items.append((fid, self.routes[fid]))
            for e in sorted(self.shifts.get(fid, {})):
                items.append((fid, e, round(self.shifts[fid][e], 12)))
        return tuple(items)


@dataclass(frozen=True)
class OptimizerConfig:
    p: float = 1.0
    epsilon: float = 0.75
    constraint_mode: str = "hard"  # hard | soft
    soft_weight: float = 100.0
    reroute_penalty: float = 10.0
    variance_weight: float = 0.0
    mc_samples: int = 0  # 0 = exact evaluation
    stall_window: int = 60
    max_iters: int = 200
    offspring: int = 8
    restarts: int = 2
    route_mutation_rate: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("equity exponent p must be >= 1")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must be in (0, 1)")
        if self.soft_weight < 0 or self.reroute_penalty < 0:
            raise ValueError("penalty weights must be nonnegative")
        if self.constraint_mode not in ("hard", "soft"):
            raise ValueError("constraint_mode must be hard or soft")


@dataclass
class EvaluationReport:
    delay_cost: float
    congestion: dict  # (sector id, (t0, t1)) -> probability
    max_congestion: float
    penalty: float
    reroutes: int
    feasible: bool
    total_cost: float
    arrival_expectations: dict
    arrival_variances: dict


@dataclass(frozen=True)
class AirspaceSnapshot:
    """Immutable copy of the monitored model the optimizer works on."""

    plans: dict  # flight id -> FlightPlan (departure reflects observations)
    sectors: list
    slicing: Slicing
    anchors: dict = field(default_factory=dict)  # flight id -> (point, t)

    def zero_decision(self) -> DecisionVector:
        return DecisionVector(
            routes={fid: p.active_route for fid, p in self.plans.items()},
            shifts={fid: {} for fid in self.plans},
        )


@dataclass
class OptimizeResult:
    decision: DecisionVector
    report: EvaluationReport
    history: list  # incumbent total cost per iteration
    status: str  # "ok" | "infeasible"


def delay_cost(expected_arrivals, scheduled, p: float) -> float:
    """Sum of |expected - scheduled|^p over flights; the equity exponent p
    penalizes concentrating all regulation on few flights."""
    a = np.asarray(expected_arrivals, dtype=float)
    s = np.asarray(scheduled, dtype=float)
    if a.shape != s.shape:
        raise ValueError("arrival vectors differ in length")
    if p < 1:
        raise ValueError("p must be >= 1")
    return float(np.sum(np.abs(a - s) ** p))


def _beliefs_for(decision: DecisionVector, snapshot: AirspaceSnapshot):
    beliefs = {}
    for fid, plan in snapshot.plans.items():
        plan2 = plan.with_route(decision.routes[fid])
        beliefs[fid] = rebuild_after_reroute(
            plan2, decision.shifts.get(fid, {}), snapshot.anchors.get(fid)
        )
    return beliefs


def _arrival_moments(plan: FlightPlan, shifts: dict, anchor):
    """Exact arrival mean/variance by moment additivity along the chain."""
    route = plan.route
    start = 0
    if anchor is not None and anchor[0] in route:
        start = route.index(anchor[0])
        mean, var = anchor[1], 0.0
    else:
        mean, var = plan.departure.mean(), plan.departure.variance()
    for edge in plan.route_edges()[start:]:
        mean += edge.travel.mean() + shifts.get(edge.key, 0.0)
        var += edge.travel.variance()
    return mean, var


def _boundary_pdfs(plan: FlightPlan, shifts: dict, anchor, needed: set):
    """Overflight densities at the needed route points only.

    Mirrors propagate + observe but stops the convolution chain at the
    furthest needed point."""
    route = plan.route
    if not needed:
        return {}
    last = max(route.index(p) for p in needed if p in route)
    out = {}
    current = plan.departure
    if route[0] in needed:
        out[route[0]] = current
    anchor_idx = (
        route.index(anchor[0]) if anchor and anchor[0] in route else None
    )
    if anchor_idx == 0:
        current = pdfs.point_mass(anchor[1])
        out[route[0]] = current
    edges = plan.route_edges()
    for i in range(last):
        if anchor_idx is not None and i + 1 == anchor_idx:
            current = pdfs.point_mass(anchor[1])
        else:
            edge = edges[i]
            travel = pdfs.shift(edge.travel, shifts.get(edge.key, 0.0))
            current = pdfs.convolve(current, travel)
        if route[i + 1] in needed:
            out[route[i + 1]] = current
    return out


def evaluate(decision: DecisionVector, snapshot: AirspaceSnapshot,
             config: OptimizerConfig) -> EvaluationReport:
    """Propagate beliefs under the decision and assemble cost + constraints.

    Exact mode (mc_samples == 0) uses exact convolution expectations and
    congestion; otherwise congestion is Monte-Carlo estimated with common
    random numbers (the same master seed for every candidate)."""
    fids = sorted(snapshot.plans)
    plans2 = {}
    moments = {}
    for fid in fids:
        plan2 = snapshot.plans[fid].with_route(decision.routes[fid])
        fshifts = decision.shifts.get(fid, {})
        flights._check_shifts(plan2, fshifts)
        plans2[fid] = plan2
        moments[fid] = _arrival_moments(
            plan2, fshifts, snapshot.anchors.get(fid)
        )
    ahat = [moments[f][0] for f in fids]
    sched = [snapshot.plans[f].scheduled_arrival for f in fids]
    cost = delay_cost(ahat, sched, config.p)

    if config.mc_samples > 0:
        sset = scenarios.sample_scenarios(
            plans2, decision.shifts, M=config.mc_samples,
            master_seed=config.seed,
        )
        timeline = scenarios.estimate_congestion(
            sset, snapshot.sectors, snapshot.slicing, config.epsilon,
            route_indices=decision.routes,
        )
    else:
        lean_beliefs = []
        for fid in fids:
            plan2 = plans2[fid]
            needed = set()
            for sector in snapshot.sectors:
                crossing = sector.crossing(fid, decision.routes[fid])
                if crossing is not None:
                    needed.update(crossing)
            point_pdfs = _boundary_pdfs(
                plan2, decision.shifts.get(fid, {}),
                snapshot.anchors.get(fid), needed,
            )
            lean_beliefs.append(TrajectoryBelief(
                flight_id=fid,
                route_index=decision.routes[fid],
                route=plan2.route,
                point_pdfs=point_pdfs,
                shifts=decision.shifts.get(fid, {}),
            ))
        timeline = sectors.congestion_timeline(
            lean_beliefs, snapshot.sectors, snapshot.slicing,
            config.epsilon,
        )
    congestion = {
        (r.sector_id, (r.t0, r.t1)): r.probability for r in timeline.rows
    }
    max_c = timeline.max_probability()
    reroutes = sum(
        1 for fid in fids
        if decision.routes[fid] != snapshot.plans[fid].active_route
    )
    variances = {f: moments[f][1] for f in fids}
    penalty = config.reroute_penalty * reroutes
    penalty += config.variance_weight * sum(variances.values())
    if config.constraint_mode == "soft":
        penalty += config.soft_weight * sum(
            max(0.0, p - config.epsilon) for p in congestion.values()
        )
    feasible = all(p <= config.epsilon + 1e-12 for p in congestion.values())
    return EvaluationReport(
        delay_cost=cost,
        congestion=congestion,
        max_congestion=max_c,
        penalty=penalty,
        reroutes=reroutes,
        feasible=feasible,
        total_cost=cost + penalty,
        arrival_expectations=dict(zip(fids, ahat)),
        arrival_variances=variances,
    )


def _violation(report: EvaluationReport, epsilon: float) -> float:
    return sum(
        max(0.0, p - epsilon) for p in report.congestion.values()
    )


def _rank_key(report: EvaluationReport, decision: DecisionVector,
              config: OptimizerConfig) -> tuple:
    # feasibility first in hard mode; ties broken by total |shift| then a
    # canonical ordering so equal-cost symmetric optima resolve
    # deterministically
    if config.constraint_mode == "hard":
        v = _violation(report, config.epsilon)
        return (round(v, 12), round(report.total_cost, 9),
                round(decision.total_shift(), 9), decision.canonical_key())
    return (0.0, round(report.total_cost, 9),
            round(decision.total_shift(), 9), decision.canonical_key())


def _shift_bounds(plan: FlightPlan, route_index: int):
    out = {}
    for edge in plan.route_edges(route_index):
        m = edge.travel.mean()
        out[edge.key] = (edge.lower_bound - m, edge.upper_bound - m)
    return out


def _mutate(decision: DecisionVector, snapshot: AirspaceSnapshot,
            config: OptimizerConfig, sigma: float,
            rng: np.random.Generator) -> DecisionVector:
    routes = dict(decision.routes)
    shifts = {fid: dict(s) for fid, s in decision.shifts.items()}
    for fid, plan in snapshot.plans.items():
        if len(plan.routes) > 1 and rng.random() < config.route_mutation_rate:
            choices = [i for i in range(len(plan.routes)) if i != routes[fid]]
            routes[fid] = int(rng.choice(choices))
            shifts[fid] = {}
        bounds = _shift_bounds(plan, routes[fid])
        per = shifts.setdefault(fid, {})
        for key, (lo, hi) in bounds.items():
            span = hi - lo
            if span <= 0:
                per.pop(key, None)
                continue
            x = per.get(key, 0.0) + sigma * span * rng.standard_normal()
            per[key] = float(min(max(x, lo), hi))
        for key in list(per):
            if key not in bounds:
                del per[key]
    return DecisionVector(routes=routes, shifts=shifts)


def optimize(snapshot: AirspaceSnapshot,
             config: OptimizerConfig) -> OptimizeResult:
    """Random-restart (1+lambda) evolution strategy; fully seeded.

    The incumbent starts from the zero decision (the current situation), so
    the returned cost is never worse than the baseline.  Terminates a
    restart when the incumbent cost is stable for ``stall_window``
    iterations or at ``max_iters``."""
    if not snapshot.plans:
        raise ValueError("snapshot has no flights")
    rng = np.random.default_rng(config.seed)
    baseline = snapshot.zero_decision()
    base_report = evaluate(baseline, snapshot, config)
    best = (baseline, base_report, _rank_key(base_report, baseline, config))
    history = []

    for _ in range(max(1, config.restarts)):
        cur = baseline
        cur_report = base_report
        cur_key = _rank_key(base_report, baseline, config)
        sigma = 0.25
        stall = 0
        last_state = (_violation(cur_report, config.epsilon),
                      cur_report.total_cost)
        for _ in range(config.max_iters):
            improved = False
            for _ in range(config.offspring):
                cand = _mutate(cur, snapshot, config, sigma, rng)
                rep = evaluate(cand, snapshot, config)
                key = _rank_key(rep, cand, config)
                if key < cur_key:
                    cur, cur_report, cur_key = cand, rep, key
                    improved = True
            sigma = min(sigma * 1.2, 0.5) if improved else max(
                sigma * 0.85, 1e-4
            )
            if cur_key < best[2]:
                best = (cur, cur_report, cur_key)
            history.append(best[1].total_cost)
            state = (_violation(cur_report, config.epsilon),
                     cur_report.total_cost)
            if (abs(state[0] - last_state[0]) < 1e-6
                    and abs(state[1] - last_state[1]) < 1e-6):
                stall += 1
                if stall >= config.stall_window:
                    break
            else:
                stall = 0
                last_state = state
    decision, report, _ = best
    status = "ok"
    if config.constraint_mode == "hard" and not report.feasible:
        status = "infeasible"
    return OptimizeResult(
        decision=decision, report=report, history=history, status=status
    )


def clearances(snapshot: AirspaceSnapshot,
               decision: DecisionVector) -> list:
    """Per flight and metering point: target overflight time and a
    plus/minus three-sigma interval of the optimized belief."""
    beliefs = _beliefs_for(decision, snapshot)
    out = []
    for fid in sorted(beliefs):
        b = beliefs[fid]
        for point in b.route:
            f = b.point_pdfs[point]
            m = f.mean()
            s = 3.0 * np.sqrt(f.variance())
            out.append({
                "flight": fid,
                "point": point,
                "target": m,
                "interval": [m - s, m + s],
            })
    return out
