"""Sector presence, Poisson-binomial occupancy and congestion tests.

Golden values come from the worked two-flight example: each flight crosses
the sector between points 2 and 3, presence over [10, 20] is 14/15, and
with capacity 1 the congestion probability is (14/15)^2 = 196/225."""

import itertools

import numpy as np
import pytest

from aircast import sectors
from aircast.flights import FlightPlan, RouteEdge, propagate
from aircast.pdfs import UniformSpec, point_mass, uniform_pdf
from aircast.sectors import (
    Sector,
    Slicing,
    TimeSlice,
    congestion_probability,
    congestion_timeline,
    occupancy_distribution,
    presence_probability,
)


def uniform(lo, hi):
    return uniform_pdf(UniformSpec(lo, hi))


def chain_plan(fid, shift_12=False):
    legs = [("1", "2", 10 + 2 * shift_12, 12 + 2 * shift_12),
            ("2", "3", 15, 20), ("3", "4", 12, 18)]
    es = [RouteEdge(a, b, uniform(lo, hi), (lo + hi) / 2, (lo + hi) / 2 + 5)
          for a, b, lo, hi in legs]
    return FlightPlan(fid, {e.key: e for e in es}, (("1", "2", "3", "4"),),
                      0, uniform(-5, 10), 46.0)


def pair_sector(capacity=1):
    return Sector("S1", capacity, {("F1", 0): ("2", "3"),
                                   ("F2", 0): ("2", "3")})


SLICE = TimeSlice(10.0, 20.0)


class TestPresence:
    def test_example_value(self):
        b = propagate(chain_plan("F1"))
        assert presence_probability(b, pair_sector(), SLICE) == pytest.approx(
            14 / 15, abs=1e-12
        )

    def test_delayed_flight(self):
        b = propagate(chain_plan("F1", shift_12=True))
        assert presence_probability(b, pair_sector(), SLICE) == pytest.approx(
            4 / 5, abs=1e-12
        )

    def test_covering_slice_is_certain(self):
        b = propagate(chain_plan("F1"))
        wide = TimeSlice(-1000.0, 1000.0)
        assert presence_probability(b, pair_sector(), wide) == 1.0

    def test_disjoint_slice_is_zero(self):
        b = propagate(chain_plan("F1"))
        assert presence_probability(
            b, pair_sector(), TimeSlice(500.0, 510.0)
        ) == 0.0

    def test_non_crossing_flight_is_zero(self):
        b = propagate(chain_plan("F9"))
        assert presence_probability(b, pair_sector(), SLICE) == 0.0

    def test_point_mass_boundaries_closed_interval(self):
        es = [RouteEdge("1", "2", point_mass(10.0), 10, 15),
              RouteEdge("2", "3", point_mass(10.0), 10, 15)]
        plan = FlightPlan("F1", {e.key: e for e in es}, (("1", "2", "3"),),
                          0, point_mass(0.0), 20.0)
        b = propagate(plan)
        # entry exactly at t1 of the slice still counts
        assert presence_probability(
            b, pair_sector(), TimeSlice(5.0, 10.0)
        ) == 1.0
        assert presence_probability(
            b, pair_sector(), TimeSlice(20.0, 25.0)
        ) == 1.0


class TestOccupancy:
    def test_two_flight_pmf(self):
        beliefs = [propagate(chain_plan(f)) for f in ("F1", "F2")]
        pmf = occupancy_distribution(beliefs, pair_sector(), SLICE)
        p = 14 / 15
        assert pmf == pytest.approx(
            [(1 - p) ** 2, 2 * p * (1 - p), p * p], abs=1e-12
        )
        assert pmf[2] == pytest.approx(196 / 225, abs=1e-12)

    def test_sums_to_one(self):
        beliefs = [propagate(chain_plan(f)) for f in ("F1", "F2")]
        pmf = occupancy_distribution(beliefs, pair_sector(), SLICE)
        assert pmf.sum() == pytest.approx(1.0, abs=1e-12)

    def test_matches_brute_force_enumeration(self):
        rng = np.random.default_rng(8)
        for n in (1, 3, 6, 9):
            probs = rng.uniform(0, 1, n)
            pmf = np.array([1.0])
            for p in probs:
                nxt = np.zeros(len(pmf) + 1)
                nxt[:-1] = pmf * (1 - p)
                nxt[1:] += pmf * p
                pmf = nxt
            brute = np.zeros(n + 1)
            for outcome in itertools.product((0, 1), repeat=n):
                w = 1.0
                for o, p in zip(outcome, probs):
                    w *= p if o else 1 - p
                brute[sum(outcome)] += w
            assert np.max(np.abs(pmf - brute)) < 1e-12


class TestCongestion:
    def test_example_value(self):
        beliefs = [propagate(chain_plan(f)) for f in ("F1", "F2")]
        assert congestion_probability(
            beliefs, pair_sector(), SLICE
        ) == pytest.approx(196 / 225, abs=1e-12)

    def test_after_delaying_one_flight(self):
        beliefs = [propagate(chain_plan("F1")),
                   propagate(chain_plan("F2", shift_12=True))]
        assert congestion_probability(
            beliefs, pair_sector(), SLICE
        ) == pytest.approx(56 / 75, abs=1e-12)

    def test_capacity_at_least_n_never_congested(self):
        beliefs = [propagate(chain_plan(f)) for f in ("F1", "F2")]
        assert congestion_probability(beliefs, pair_sector(2), SLICE) == 0.0

    def test_three_coin_flights(self):
        # three independent presences of 0.5 against capacity 1:
        # P(S > 1) = P(2) + P(3) = 3/8 + 1/8
        es = [RouteEdge("1", "2", uniform(0, 20), 10, 15),
              RouteEdge("2", "3", point_mass(1.0), 1, 5)]
        beliefs = []
        sec = Sector("S", 1, {(f, 0): ("2", "3") for f in "abc"})
        for f in "abc":
            plan = FlightPlan(f, {e.key: e for e in es}, (("1", "2", "3"),),
                              0, point_mass(0.0), 20.0)
            beliefs.append(propagate(plan))
        sl = TimeSlice(-5.0, 10.0)  # presence = P(entry <= 10) = 0.5
        assert congestion_probability(beliefs, sec, sl) == pytest.approx(
            0.5, abs=1e-12
        )

    def test_monotone_in_capacity(self):
        beliefs = [propagate(chain_plan(f)) for f in ("F1", "F2")]
        sec1 = pair_sector(1)
        sec2 = pair_sector(2)
        assert congestion_probability(beliefs, sec1, SLICE) >= \
            congestion_probability(beliefs, sec2, SLICE)

    def test_monotone_in_slice_nesting(self):
        beliefs = [propagate(chain_plan(f)) for f in ("F1", "F2")]
        inner = congestion_probability(beliefs, pair_sector(),
                                       TimeSlice(12.0, 18.0))
        outer = congestion_probability(beliefs, pair_sector(), SLICE)
        assert inner <= outer + 1e-12


class TestSlicing:
    def test_partition(self):
        sl = Slicing(15.0, 0.0, 60.0).slices()
        assert [(s.t0, s.t1) for s in sl] == [
            (0.0, 15.0), (15.0, 30.0), (30.0, 45.0), (45.0, 60.0)
        ]

    def test_ragged_tail(self):
        sl = Slicing(15.0, 0.0, 40.0).slices()
        assert (sl[-1].t0, sl[-1].t1) == (30.0, 40.0)

    def test_invalid(self):
        with pytest.raises(ValueError):
            Slicing(0.0, 0.0, 10.0)
        with pytest.raises(ValueError):
            TimeSlice(5.0, 5.0)


class TestTimeline:
    def test_unflagged_below_epsilon(self):
        beliefs = [propagate(chain_plan("F1")),
                   propagate(chain_plan("F2", shift_12=True))]
        tl = congestion_timeline(beliefs, [pair_sector()],
                                 Slicing(10.0, 10.0, 20.0), epsilon=0.75)
        assert not tl.lookup("S1", 10.0, 20.0).flagged
        assert tl.flagged_rows() == []

    def test_flagged_above_epsilon(self):
        beliefs = [propagate(chain_plan(f)) for f in ("F1", "F2")]
        tl = congestion_timeline(beliefs, [pair_sector()],
                                 Slicing(10.0, 10.0, 20.0), epsilon=0.75)
        row = tl.lookup("S1", 10.0, 20.0)
        assert row.probability == pytest.approx(196 / 225, abs=1e-12)
        assert row.flagged
        assert tl.max_probability() == pytest.approx(196 / 225, abs=1e-12)

    def test_csv_header(self, tmp_path):
        tl = congestion_timeline([], [pair_sector()],
                                 Slicing(10.0, 10.0, 20.0))
        out = tmp_path / "t.csv"
        with out.open("w") as fh:
            tl.write_csv(fh)
        first = out.read_text().splitlines()[0]
        assert first == "sector_id,t0,t1,congestion_probability,flagged"

    def test_capacity_validation(self):
        with pytest.raises(ValueError):
            Sector("S", 0, {})
