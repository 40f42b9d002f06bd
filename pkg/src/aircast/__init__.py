"""Stochastic airspace model: exact piecewise-polynomial travel-time
densities, sector congestion probabilities, Monte-Carlo scenario
simulation, clearance optimization and observation-driven monitoring."""

from importlib import resources

from .pdfs import (
    PiecewisePdf,
    UniformSpec,
    convolve,
    discretize,
    point_mass,
    sample,
    shift,
    uniform_pdf,
)
from .flights import FlightPlan, MeteringPoint, RouteEdge, TrajectoryBelief
from .sectors import Sector, SectorTimeline, Slicing, TimeSlice
from .scenarios import ScenarioSet, sample_scenarios
from .optimizer import (
    AirspaceSnapshot,
    DecisionVector,
    OptimizerConfig,
    optimize,
)
from .monitor import AirspaceState, ObservationEvent, ingest, run_loop

__version__ = "0.1.0"


def example_path(name: str):
    """Filesystem path of a bundled scenario ('toy' or 'synthetic')."""
    return resources.files(__name__) / "data" / f"{name}.json"
