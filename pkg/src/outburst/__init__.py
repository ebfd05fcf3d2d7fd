"""Continuum ball-growth simulator: an infected region grows as a union of
random balls via outbursts whose rate equals the region's volume.

Subpackages:
    geometry    union-of-balls region with a uniform grid index
    dynamics    the growth process, two steppers, the space-time Poisson field
    estimators  hitting/coverage times, shape constant, analytic bounds
    config      experiment configuration and run manifests
    cli         command-line entry points
"""

__version__ = "0.1.0"

from .geometry import Ball, BallUnion, CoverageNet, MeasureEstimate
from .dynamics import (
    Event,
    GrowthState,
    InitialSet,
    PoissonField,
    RadiusLaw,
    init,
    restart,
    run_until,
    step_rate,
    step_thinning,
)
from .estimators import (
    ChainBound,
    MuEstimate,
    ShapeReport,
    chain_bound,
    coverage_time,
    coverage_time_restarted,
    estimate_mu,
    hitting_time,
    run_until_covered,
    shape_report,
    strong_infection_set_probe,
)

__all__ = [
    "Ball",
    "BallUnion",
    "ChainBound",
    "CoverageNet",
    "Event",
    "GrowthState",
    "InitialSet",
    "MeasureEstimate",
    "MuEstimate",
    "PoissonField",
    "RadiusLaw",
    "ShapeReport",
    "chain_bound",
    "coverage_time",
    "coverage_time_restarted",
    "estimate_mu",
    "hitting_time",
    "init",
    "restart",
    "run_until",
    "run_until_covered",
    "shape_report",
    "step_rate",
    "step_thinning",
    "strong_infection_set_probe",
]
