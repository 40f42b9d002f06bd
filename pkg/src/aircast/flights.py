"""Flight plans as DAGs of metering points and belief propagation.

A flight plan enumerates its alternative routes at creation time.  A
trajectory belief holds the overflight-time density at every point of the
active route; densities are propagated by convolving the departure density
with the (possibly mean-shifted) edge travel densities.  Observations pin a
point to a Dirac mass and downstream densities are rebuilt from it.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from . import pdfs
from .pdfs import PiecewisePdf


class PlanError(ValueError):
    """Invalid flight-plan structure."""


class ShiftBoundsError(ValueError):
    """A mean shift pushes an edge outside its performance bounds."""

    def __init__(self, edge, message):
        super().__init__(message)
        self.edge = edge


class ObservationError(ValueError):
    """An observation is inconsistent with the current plan or belief."""


@dataclass(frozen=True)
class MeteringPoint:
    id: str
    position: tuple[float, float, float]
    kind: str = "interior"  # ingoing | outgoing | interior


@dataclass(frozen=True)
class RouteEdge:
    frm: str
    to: str
    travel: PiecewisePdf
    lower_bound: float
    upper_bound: float

    def __post_init__(self):
        m = self.travel.mean()
        if not (self.lower_bound - 1e-9 <= m <= self.upper_bound + 1e-9):
            raise PlanError(
                f"edge {self.frm}-{self.to}: mean {m:g} outside bounds "
                f"[{self.lower_bound:g}, {self.upper_bound:g}]"
            )

    @property
    def key(self) -> tuple[str, str]:
        return (self.frm, self.to)


@dataclass(frozen=True)
class FlightPlan:
    id: str
    edges: dict  # (frm, to) -> RouteEdge
    routes: tuple  # tuple of point-id tuples, origin -> destination
    active_route: int
    departure: PiecewisePdf
    scheduled_arrival: float

    def __post_init__(self):
        if not self.routes:
            raise PlanError(f"flight {self.id}: no routes")
        if not 0 <= self.active_route < len(self.routes):
            raise PlanError(f"flight {self.id}: bad active route index")
        origin = self.routes[0][0]
        dest = self.routes[0][-1]
        for r in self.routes:
            if len(r) < 2 or r[0] != origin or r[-1] != dest:
                raise PlanError(
                    f"flight {self.id}: route {r} is not an "
                    f"{origin}->{dest} path"
                )
            for a, b in zip(r, r[1:]):
                if (a, b) not in self.edges:
                    raise PlanError(
                        f"flight {self.id}: missing edge {a}-{b} of route"
                    )
        _check_acyclic(self.id, self.edges)

    @property
    def origin(self) -> str:
        return self.routes[0][0]

    @property
    def destination(self) -> str:
        return self.routes[0][-1]

    @property
    def route(self) -> tuple:
        return self.routes[self.active_route]

    def route_edges(self, index: int | None = None) -> list[RouteEdge]:
        r = self.routes[self.active_route if index is None else index]
        return [self.edges[(a, b)] for a, b in zip(r, r[1:])]

    def with_route(self, index: int) -> "FlightPlan":
        if not 0 <= index < len(self.routes):
            raise PlanError(f"flight {self.id}: bad route index {index}")
        return replace(self, active_route=index)

    def with_departure(self, departure: PiecewisePdf) -> "FlightPlan":
        return replace(self, departure=departure)


def _check_acyclic(fid, edges):
    succ = {}
    indeg = {}
    for a, b in edges:
        succ.setdefault(a, []).append(b)
        indeg[b] = indeg.get(b, 0) + 1
        indeg.setdefault(a, 0)
    ready = [n for n, d in indeg.items() if d == 0]
    seen = 0
    while ready:
        n = ready.pop()
        seen += 1
        for m in succ.get(n, ()):
            indeg[m] -= 1
            if indeg[m] == 0:
                ready.append(m)
    if seen != len(indeg):
        raise PlanError(f"flight {fid}: route graph has a cycle")


@dataclass(frozen=True)
class TrajectoryBelief:
    flight_id: str
    route_index: int
    route: tuple
    point_pdfs: dict  # point id -> PiecewisePdf
    shifts: dict  # (frm, to) -> minutes, for traversed edges
    anchor: tuple | None = None  # (point id, observed time)

    def arrival(self) -> PiecewisePdf:
        return self.point_pdfs[self.route[-1]]


def _check_shifts(plan: FlightPlan, shifts: dict):
    for edge in plan.route_edges():
        d = shifts.get(edge.key, 0.0)
        m = edge.travel.mean() + d
        if not (edge.lower_bound - 1e-9 <= m <= edge.upper_bound + 1e-9):
            raise ShiftBoundsError(
                edge.key,
                f"flight {plan.id}: shift {d:g} on edge "
                f"{edge.frm}-{edge.to} moves mean to {m:g}, outside "
                f"[{edge.lower_bound:g}, {edge.upper_bound:g}]",
            )


def _chain_convolve(current, travel, discretize_step):
    if discretize_step is None:
        return pdfs.convolve(current, travel)
    try:
        out = pdfs.convolve(current, travel)
    except pdfs.PieceCountError:
        current, _ = pdfs.discretize(current, discretize_step)
        out = pdfs.convolve(current, travel)
    if out.piece_count > pdfs.DEFAULT_PIECE_CAP // 2:
        out, _ = pdfs.discretize(out, discretize_step)
    return out


def propagate(plan: FlightPlan, shifts: dict | None = None,
              discretize_step: float | None = None) -> TrajectoryBelief:
    """Overflight density at each active-route point by chained convolution.

    With ``discretize_step`` set, chains switch to the grid fallback instead
    of failing when the exact piece count outgrows the cap.
    """
    shifts = dict(shifts or {})
    _check_shifts(plan, shifts)
    route = plan.route
    pdfs_by_point = {route[0]: plan.departure}
    current = plan.departure
    for edge in plan.route_edges():
        travel = pdfs.shift(edge.travel, shifts.get(edge.key, 0.0))
        current = _chain_convolve(current, travel, discretize_step)
        pdfs_by_point[edge.to] = current
    return TrajectoryBelief(
        flight_id=plan.id,
        route_index=plan.active_route,
        route=route,
        point_pdfs=pdfs_by_point,
        shifts=shifts,
    )


def observe(plan: FlightPlan, belief: TrajectoryBelief, point: str, t: float,
            window: float = 60.0) -> TrajectoryBelief:
    """Condition the belief on an exact overflight time at a route point.

    The observed point becomes a Dirac mass; downstream densities are rebuilt
    from it, upstream densities are kept as historical values.
    """
    route = belief.route
    if point not in route:
        raise ObservationError(
            f"flight {plan.id}: point {point} not on active route"
        )
    prior = belief.point_pdfs[point]
    if not (prior.lo - window <= t <= prior.hi + window):
        raise ObservationError(
            f"flight {plan.id}: time {t:g} at {point} outside plausibility "
            f"window [{prior.lo - window:g}, {prior.hi + window:g}]"
        )
    idx = route.index(point)
    new_pdfs = dict(belief.point_pdfs)
    new_pdfs[point] = pdfs.point_mass(t)
    current = new_pdfs[point]
    for a, b in zip(route[idx:], route[idx + 1 :]):
        edge = plan.edges[(a, b)]
        travel = pdfs.shift(edge.travel, belief.shifts.get(edge.key, 0.0))
        current = pdfs.convolve(current, travel)
        new_pdfs[b] = current
    return replace(belief, point_pdfs=new_pdfs, anchor=(point, t))


def reroute(plan: FlightPlan, route_index: int) -> FlightPlan:
    """Switch the active route; existing beliefs must be re-propagated."""
    return plan.with_route(route_index)


def rebuild_after_reroute(plan: FlightPlan, shifts: dict | None,
                          anchor: tuple | None) -> TrajectoryBelief:
    """Propagate a fresh belief on the (new) active route.

    A retained anchor must lie on the new route, else the state is
    inconsistent and surfaced as an error.
    """
    belief = propagate(plan, shifts)
    if anchor is not None:
        point, t = anchor
        if point not in plan.route:
            raise ObservationError(
                f"flight {plan.id}: observed point {point} is not on the "
                f"new route"
            )
        belief = observe(plan, belief, point, t)
    return belief
