"""Exact sector presence, occupancy counts and congestion probabilities.

A flight is counted in a sector during a slice when its [entry, exit]
interval intersects the slice at any moment; simultaneous presence is not
required.  Occupancy over independent flights is Poisson-binomial.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .flights import TrajectoryBelief

DEFAULT_SLICE_WIDTH = 15.0
DEFAULT_EPSILON = 0.75


@dataclass(frozen=True)
class TimeSlice:
    t0: float
    t1: float

    def __post_init__(self):
        if not self.t0 < self.t1:
            raise ValueError(f"empty time slice [{self.t0}, {self.t1}]")


@dataclass(frozen=True)
class Sector:
    id: str
    capacity: int
    # (flight id, route index) -> (entry point id, exit point id)
    boundaries: dict

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError(f"sector {self.id}: capacity must be >= 1")

    def crossing(self, flight_id: str, route_index: int):
        return self.boundaries.get((flight_id, route_index))


@dataclass(frozen=True)
class Slicing:
    width: float
    start: float
    end: float

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError("slice width must be positive")
        if not self.start < self.end:
            raise ValueError("empty slicing horizon")

    def slices(self) -> list[TimeSlice]:
        out = []
        t = self.start
        while t < self.end - 1e-12:
            out.append(TimeSlice(t, min(t + self.width, self.end)))
            t += self.width
        return out


@dataclass
class TimelineRow:
    sector_id: str
    t0: float
    t1: float
    probability: float
    flagged: bool


@dataclass
class SectorTimeline:
    epsilon: float
    rows: list = field(default_factory=list)

    def lookup(self, sector_id: str, t0: float, t1: float) -> TimelineRow:
        for r in self.rows:
            if (
                r.sector_id == sector_id
                and abs(r.t0 - t0) < 1e-9
                and abs(r.t1 - t1) < 1e-9
            ):
                return r
        raise KeyError(f"no timeline row for {sector_id} [{t0}, {t1}]")

    def flagged_rows(self) -> list:
        return [r for r in self.rows if r.flagged]

    def max_probability(self) -> float:
        return max((r.probability for r in self.rows), default=0.0)

    def write_csv(self, fh):
        w = csv.writer(fh)
        w.writerow(["sector_id", "t0", "t1", "congestion_probability",
                    "flagged"])
        for r in self.rows:
            w.writerow([r.sector_id, f"{r.t0:.6f}", f"{r.t1:.6f}",
                        f"{r.probability:.9f}", int(r.flagged)])


def presence_probability(belief: TrajectoryBelief, sector: Sector,
                         slice: TimeSlice) -> float:
    """P(the flight's sector interval intersects the slice).

    Equals 1 - P(entry after t1) - P(exit before t0); the two miss events
    are mutually exclusive because exit never precedes entry.
    """
    crossing = sector.crossing(belief.flight_id, belief.route_index)
    if crossing is None:
        return 0.0
    entry, exit_ = crossing
    p_entry = belief.point_pdfs[entry]
    p_exit = belief.point_pdfs[exit_]
    exit_before = float(p_exit.cdf(slice.t0))
    if p_exit.is_point_mass and p_exit.point == slice.t0:
        exit_before = 0.0  # exit exactly at t0 still touches the slice
    miss = (1.0 - p_entry.cdf(slice.t1)) + exit_before
    return float(min(max(1.0 - miss, 0.0), 1.0))


def occupancy_distribution(beliefs, sector: Sector,
                           slice: TimeSlice) -> np.ndarray:
    """Poisson-binomial pmf of the flight count, via the O(n^2) recurrence."""
    probs = [presence_probability(b, sector, slice) for b in beliefs]
    pmf = np.array([1.0])
    for p in probs:
        nxt = np.zeros(len(pmf) + 1)
        nxt[:-1] = pmf * (1.0 - p)
        nxt[1:] += pmf * p
        pmf = nxt
    return pmf


def congestion_probability(beliefs, sector: Sector,
                           slice: TimeSlice) -> float:
    """P(occupancy strictly exceeds the sector capacity)."""
    pmf = occupancy_distribution(beliefs, sector, slice)
    return float(pmf[sector.capacity + 1 :].sum())


def congestion_timeline(beliefs, sectors, slicing: Slicing,
                        epsilon: float = DEFAULT_EPSILON) -> SectorTimeline:
    """Congestion probability per sector per consecutive slice."""
    timeline = SectorTimeline(epsilon=epsilon)
    for sector in sectors:
        for sl in slicing.slices():
            p = congestion_probability(beliefs, sector, sl)
            timeline.rows.append(
                TimelineRow(sector.id, sl.t0, sl.t1, p, p > epsilon)
            )
    return timeline
