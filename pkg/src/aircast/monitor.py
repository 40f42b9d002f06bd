"""Observation-driven monitoring loop.

Replays a time-ordered stream of overflight / departure / diversion events
against the airspace state, conditions the beliefs, and periodically
re-optimizes on an immutable snapshot, emitting versioned clearances.
Event times are minutes from the scenario epoch, not wall clock.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from . import flights, optimizer, pdfs, sectors
from .flights import ObservationError
from .optimizer import AirspaceSnapshot, OptimizerConfig

EVENT_KINDS = ("overflight", "departure", "diversion")


class EventError(ValueError):
    """Malformed or inconsistent observation event."""


@dataclass(frozen=True)
class ObservationEvent:
    timestamp: float
    flight: str
    kind: str
    point: str | None = None
    observed_time: float | None = None
    route_index: int | None = None

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise EventError(f"unknown event kind {self.kind!r}")
        if self.kind in ("overflight", "departure"):
            if self.observed_time is None:
                raise EventError(f"{self.kind} event needs observed_time")
            if self.kind == "overflight" and self.point is None:
                raise EventError("overflight event needs a point")
        if self.kind == "diversion" and self.route_index is None:
            raise EventError("diversion event needs route_index")

    @classmethod
    def from_dict(cls, d: dict) -> "ObservationEvent":
        try:
            return cls(
                timestamp=float(d["timestamp"]),
                flight=str(d["flight"]),
                kind=str(d["kind"]),
                point=d.get("point"),
                observed_time=(
                    float(d["observed_time"])
                    if d.get("observed_time") is not None else None
                ),
                route_index=(
                    int(d["route_index"])
                    if d.get("route_index") is not None else None
                ),
            )
        except KeyError as exc:
            raise EventError(f"event missing field {exc}") from exc


@dataclass(frozen=True)
class AirspaceState:
    plans: dict  # flight id -> FlightPlan
    beliefs: dict  # flight id -> TrajectoryBelief
    shifts: dict  # flight id -> {(frm, to): minutes} currently cleared
    log: tuple = ()
    version: int = 0

    @property
    def last_timestamp(self) -> float:
        return self.log[-1].timestamp if self.log else float("-inf")

    def anchors(self) -> dict:
        return {
            fid: b.anchor for fid, b in self.beliefs.items()
            if b.anchor is not None
        }

    def snapshot(self, sector_list, slicing) -> AirspaceSnapshot:
        return AirspaceSnapshot(
            plans=dict(self.plans),
            sectors=list(sector_list),
            slicing=slicing,
            anchors=self.anchors(),
        )


def initial_state(plans, shifts=None) -> AirspaceState:
    shifts = shifts or {}
    plans = dict(plans)
    beliefs = {
        fid: flights.propagate(p, shifts.get(fid, {}))
        for fid, p in plans.items()
    }
    return AirspaceState(plans=plans, beliefs=beliefs, shifts=shifts)


def ingest(state: AirspaceState, event: ObservationEvent) -> AirspaceState:
    """Apply one event; beliefs stay consistent with the full log."""
    if event.timestamp < state.last_timestamp:
        raise EventError(
            f"out-of-order event at t={event.timestamp:g} after "
            f"t={state.last_timestamp:g}"
        )
    if event.flight not in state.plans:
        raise EventError(f"unknown flight {event.flight!r}")
    plan = state.plans[event.flight]
    belief = state.beliefs[event.flight]
    fshifts = state.shifts.get(event.flight, {})
    plans = dict(state.plans)
    beliefs = dict(state.beliefs)

    if event.kind == "departure":
        plan = plan.with_departure(pdfs.point_mass(event.observed_time))
        plans[event.flight] = plan
        beliefs[event.flight] = flights.observe(
            plan, flights.propagate(plan, fshifts), plan.origin,
            event.observed_time,
        )
    elif event.kind == "overflight":
        if event.point not in dict.fromkeys(
            pid for r in plan.routes for pid in r
        ):
            raise EventError(
                f"unknown point {event.point!r} for flight {event.flight}"
            )
        beliefs[event.flight] = flights.observe(
            plan, belief, event.point, event.observed_time
        )
    else:  # diversion
        plan = flights.reroute(plan, event.route_index)
        plans[event.flight] = plan
        beliefs[event.flight] = flights.rebuild_after_reroute(
            plan, fshifts, belief.anchor
        )
    return replace(
        state,
        plans=plans,
        beliefs=beliefs,
        log=state.log + (event,),
        version=state.version + 1,
    )


def rebuild(base_plans, shifts, log) -> AirspaceState:
    """Recompute the state from scratch by replaying the observation log."""
    state = initial_state(base_plans, shifts)
    for event in log:
        state = ingest(state, event)
    return state


@dataclass(frozen=True)
class ReoptimizePolicy:
    """Re-optimize when a batch moves any congestion probability by more
    than ``delta``, or ``interval`` minutes after the last optimization."""

    delta: float = 0.05
    interval: float = 15.0


@dataclass
class ClearanceUpdate:
    version: int
    timestamp: float
    clearances: list
    report: optimizer.EvaluationReport
    status: str


def run_loop(state: AirspaceState, events, sector_list, slicing,
             opt_config: OptimizerConfig,
             policy: ReoptimizePolicy | None = None,
             batch_window: float = 15.0,
             on_error=None):
    """Generator over clearance updates.

    Yields one baseline update before any event, then one update after each
    batch that triggers the re-optimization policy.  Bad events raise
    unless ``on_error(event, exc)`` is given, in which case they are
    reported there and skipped.
    """
    policy = policy or ReoptimizePolicy()

    def run_opt(st, ts):
        snap = st.snapshot(sector_list, slicing)
        result = optimizer.optimize(snap, opt_config)
        return ClearanceUpdate(
            version=st.version,
            timestamp=ts,
            clearances=optimizer.clearances(snap, result.decision),
            report=result.report,
            status=result.status,
        ), snap, result

    update, snap, result = run_opt(state, float("-inf"))
    last_timeline = result.report.congestion
    last_opt_time = float("-inf")
    yield state, update

    batch = []
    batch_start = None
    pending = list(events)
    for i, event in enumerate(pending):
        if batch_start is None:
            batch_start = event.timestamp
        if event.timestamp - batch_start >= batch_window and batch:
            state, upd, last_timeline, last_opt_time = _close_batch(
                state, batch, sector_list, slicing, opt_config, policy,
                last_timeline, last_opt_time, run_opt, on_error,
            )
            if upd is not None:
                yield state, upd
            batch = []
            batch_start = event.timestamp
        batch.append(event)
    if batch:
        state, upd, last_timeline, last_opt_time = _close_batch(
            state, batch, sector_list, slicing, opt_config, policy,
            last_timeline, last_opt_time, run_opt, on_error,
        )
        if upd is not None:
            yield state, upd


def _close_batch(state, batch, sector_list, slicing, opt_config, policy,
                 last_timeline, last_opt_time, run_opt, on_error=None):
    for event in batch:
        try:
            state = ingest(state, event)
        except (EventError, ObservationError) as exc:
            if on_error is None:
                raise
            on_error(event, exc)
    timeline = sectors.congestion_timeline(
        list(state.beliefs.values()), sector_list, slicing,
        opt_config.epsilon,
    )
    now = batch[-1].timestamp
    changed = any(
        abs(r.probability - last_timeline.get((r.sector_id, (r.t0, r.t1)),
                                              0.0)) > policy.delta
        for r in timeline.rows
    )
    due = now - last_opt_time >= policy.interval
    if changed or due:
        update, _, result = run_opt(state, now)
        new_timeline = result.report.congestion
        return state, update, new_timeline, now
    return state, None, last_timeline, last_opt_time
