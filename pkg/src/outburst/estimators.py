"""Observables of the growth process.

Hitting and coverage times read off a run's event log; the shape constant is
estimated by regressing mean coverage times against distance over independent
replications; the chain-of-balls bound gives a closed-form stochastic upper
bound on hitting times; shape reports check the ball sandwich at a fixed
time. Every run-to-coverage loop carries an event cap and reports "not yet"
as +inf rather than looping forever.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
import scipy.stats

from .dynamics import (
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
from .geometry import CoverageNet, ball_net, unit_ball_volume
from .seeds import TAG_BOOTSTRAP, TAG_REPLICATION, derive_rng, derive_seed

UNCOVERED = math.inf  # "not yet covered at the horizon" marker

DEFAULT_EVENT_CAP = 10**6


@dataclass(frozen=True)
class MuEstimate:
    """Shape constant fit: slope of mean coverage time against distance."""

    mu_hat: float
    ci_low: float
    ci_high: float
    direction: tuple[float, ...]
    distances: tuple[float, ...]
    replications: int
    per_distance_means: tuple[float, ...]
    per_distance_sems: tuple[float, ...] = ()
    failed: int = 0
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "mu_hat": self.mu_hat,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "direction": list(self.direction),
            "distances": list(self.distances),
            "replications": self.replications,
            "per_distance_means": list(self.per_distance_means),
            "per_distance_sems": list(self.per_distance_sems),
            "failed": self.failed,
            "degenerate": self.degenerate,
        }


@dataclass(frozen=True)
class ShapeReport:
    """Inner/outer ball-sandwich check of a region at its clock time."""

    t: float
    epsilon: float
    inner_ok: bool
    outer_ok: bool
    inner_margin: float  # depth of the deepest uncovered inner-net point, 0 if none
    outer_radius_ratio: float  # extent / (t / mu)

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "epsilon": self.epsilon,
            "inner_ok": self.inner_ok,
            "outer_ok": self.outer_ok,
            "inner_margin": self.inner_margin,
            "outer_radius_ratio": self.outer_radius_ratio,
        }


@dataclass(frozen=True)
class ChainBound:
    """Closed-form upper bound on the hitting time of x.

    A chain of k = 2*ceil(|x|/gamma) small balls of radius c = gamma/10 links
    the origin to x; each waits an Exp(lambda) time for an outburst of radius
    at least gamma, lambda = p_gamma * v_d * c^d. The bound is Gamma(k, lambda).
    """

    x: tuple[float, ...]
    k: int
    c: float
    p: float
    lam: float
    bound_mean: float

    def quantile(self, q) -> float | np.ndarray:
        return scipy.stats.gamma.ppf(q, a=self.k, scale=1.0 / self.lam)

    def to_dict(self) -> dict:
        return {
            "x": list(self.x),
            "k": self.k,
            "c": self.c,
            "p": self.p,
            "lambda": self.lam,
            "bound_mean": self.bound_mean,
        }


class BoundInapplicableError(ValueError):
    """The chain construction needs outbursts of radius >= gamma."""


# -- times read off a log ---------------------------------------------------


def hitting_time(state: GrowthState, x: Sequence[float]) -> float:
    """First time x belongs to the region: 0 on the initial set, else the
    time of the first event ball containing x, else UNCOVERED."""
    if any(b.contains(x) for b in state.initial_balls):
        return 0.0
    for ev in state.log:
        if math.dist(ev.location, x) <= ev.radius:
            return ev.time
    return UNCOVERED


def coverage_time(
    state: GrowthState,
    x: Sequence[float],
    gamma: float | None = None,
    net_resolution: float | None = None,
) -> float:
    """First event time after which the whole mean-radius ball around x is
    covered (conservative net predicate), replaying the log in order."""
    gamma = state.law.gamma if gamma is None else gamma
    net_resolution = gamma / 100 if net_resolution is None else net_resolution
    net = CoverageNet(x, gamma, net_resolution)
    for b in state.initial_balls:
        if net.add_ball(b.center, b.radius):
            return 0.0
    for ev in state.log:
        if net.add_ball(ev.location, ev.radius):
            return ev.time
    return UNCOVERED


def run_until_covered(
    state: GrowthState,
    x: Sequence[float],
    field: PoissonField | None = None,
    rng: np.random.Generator | None = None,
    stepper: Literal["rate", "thinning"] = "thinning",
    gamma: float | None = None,
    net_resolution: float | None = None,
    event_cap: int = DEFAULT_EVENT_CAP,
) -> float:
    """Advance the process until B(x, gamma) is covered; returns the coverage
    time (absolute clock) or UNCOVERED once event_cap events have passed."""
    gamma = state.law.gamma if gamma is None else gamma
    net_resolution = gamma / 100 if net_resolution is None else net_resolution
    net = CoverageNet(x, gamma, net_resolution)
    for b in state.initial_balls:
        if net.add_ball(b.center, b.radius):
            return state.origin_time
    for ev in state.log:
        if net.add_ball(ev.location, ev.radius):
            return ev.time
    for _ in range(event_cap - len(state.log)):
        if stepper == "thinning":
            ev = step_thinning(state, field)
        else:
            ev = step_rate(state, rng)
        if net.add_ball(ev.location, ev.radius):
            return ev.time
    return UNCOVERED


def coverage_time_restarted(
    field: PoissonField,
    x: Sequence[float],
    s: float,
    y: Sequence[float],
    gamma: float | None = None,
    net_resolution: float | None = None,
    event_cap: int = DEFAULT_EVENT_CAP,
) -> float:
    """Elapsed time, counted from s, until a process restarted from x at time
    s covers the mean-radius ball around y."""
    law = field.law
    state = restart(field, x, s, law, field.d)
    t = run_until_covered(
        state, y, field=field, gamma=gamma, net_resolution=net_resolution, event_cap=event_cap
    )
    return t if t == UNCOVERED else t - s


# -- shape constant ----------------------------------------------------------


class ReplicationFailureError(RuntimeError):
    """Too many replications hit the event cap before covering their target."""


def _coverage_task(args: tuple) -> float:
    """One replication: fresh process run until its target ball is covered.
    Module-level so a process pool can pickle it; the result depends only on
    the arguments."""
    initial, law, d, target, stepper, net_resolution, event_cap, rep_seed = args
    state = init(initial, law, d, seed=rep_seed)
    if stepper == "thinning":
        return run_until_covered(
            state,
            target,
            field=PoissonField(rep_seed, law, d),
            net_resolution=net_resolution,
            event_cap=event_cap,
        )
    return run_until_covered(
        state,
        target,
        rng=derive_rng(rep_seed),
        stepper="rate",
        net_resolution=net_resolution,
        event_cap=event_cap,
    )


def estimate_mu(
    direction: Sequence[float],
    distances: Sequence[float],
    reps: int,
    law: RadiusLaw,
    d: int,
    seed: int,
    stepper: Literal["rate", "thinning"] = "thinning",
    initial: InitialSet | None = None,
    net_resolution: float | None = None,
    event_cap: int = DEFAULT_EVENT_CAP,
    bootstrap: int = 1000,
    max_failure_fraction: float = 0.05,
    pool_map=map,
) -> MuEstimate:
    """Estimate the shape constant along `direction`.

    Each (distance, replication) pair runs a fresh process until the
    mean-radius ball at that distance is covered. The estimate is the free-
    intercept least-squares slope of per-distance mean coverage times against
    distance; the 95% CI resamples replications within each distance. With
    fewer than two replications the CI is meaningless and flagged degenerate.
    """
    direction = np.asarray(direction, dtype=np.float64)
    norm = float(np.linalg.norm(direction))
    if norm == 0:
        raise ValueError("direction must be a nonzero vector")
    direction = direction / norm
    distances = [float(L) for L in distances]
    if len(distances) < 3 or any(b <= a for a, b in zip(distances, distances[1:])):
        raise ValueError(f"need >= 3 strictly increasing distances, got {distances}")
    if reps < 1:
        raise ValueError(f"need >= 1 replication, got {reps}")
    if initial is None:
        initial = InitialSet.ball((0.0,) * d, law.gamma)

    tasks = [
        (
            initial,
            law,
            d,
            tuple(float(v) for v in L * direction),
            stepper,
            net_resolution,
            event_cap,
            derive_seed(seed, TAG_REPLICATION, i, rep),
        )
        for i, L in enumerate(distances)
        for rep in range(reps)
    ]
    results = np.fromiter(pool_map(_coverage_task, tasks), dtype=np.float64, count=len(tasks))
    times = results.reshape(len(distances), reps)
    failed = int(np.count_nonzero(np.isinf(times)))
    times = np.where(np.isinf(times), np.nan, times)
    total = len(distances) * reps
    if failed > max_failure_fraction * total:
        raise ReplicationFailureError(
            f"{failed}/{total} replications hit the event cap ({event_cap}) before "
            f"covering their target; raise the cap or shrink the distances"
        )

    Ls = np.asarray(distances)
    means = np.nanmean(times, axis=1)
    sems = [
        float(np.nanstd(row, ddof=1) / math.sqrt(np.count_nonzero(~np.isnan(row))))
        if np.count_nonzero(~np.isnan(row)) > 1
        else 0.0
        for row in times
    ]
    mu_hat = _slope(Ls, means)

    boot_rng = derive_rng(seed, TAG_BOOTSTRAP)
    per_distance = [row[~np.isnan(row)] for row in times]
    slopes = np.empty(bootstrap)
    for b in range(bootstrap):
        m = np.array(
            [row[boot_rng.integers(0, len(row), size=len(row))].mean() for row in per_distance]
        )
        slopes[b] = _slope(Ls, m)
    ci_low, ci_high = np.percentile(slopes, [2.5, 97.5])
    degenerate = reps < 2
    return MuEstimate(
        mu_hat=float(mu_hat),
        ci_low=float(min(ci_low, mu_hat)),
        ci_high=float(max(ci_high, mu_hat)),
        direction=tuple(float(c) for c in direction),
        distances=tuple(distances),
        replications=reps,
        per_distance_means=tuple(float(m) for m in means),
        per_distance_sems=tuple(sems),
        failed=failed,
        degenerate=degenerate,
    )


def _slope(x: np.ndarray, y: np.ndarray) -> float:
    xm, ym = x.mean(), y.mean()
    return float(((x - xm) @ (y - ym)) / ((x - xm) @ (x - xm)))


# -- analytic bound ----------------------------------------------------------


def chain_bound(x: Sequence[float], law: RadiusLaw, d: int) -> ChainBound:
    """Chain-of-balls upper bound on the hitting time of x."""
    if law.p_gamma <= 0:
        raise BoundInapplicableError(
            "bound needs a positive probability of radii reaching the mean"
        )
    x = tuple(float(c) for c in x)
    norm = math.hypot(*x)
    k = 2 * math.ceil(norm / law.gamma) if norm > 0 else 2
    k = max(k, 2)
    c = law.gamma / 10
    lam = law.p_gamma * unit_ball_volume(d) * c**d
    return ChainBound(x=x, k=k, c=c, p=law.p_gamma, lam=lam, bound_mean=k / lam)


# -- shape statistics ---------------------------------------------------------


def shape_report(
    state: GrowthState,
    mu: float,
    epsilon: float,
    net_resolution: float,
) -> ShapeReport:
    """Check the ball sandwich at the state's clock time t: every point of a
    net of the inner ball (1-eps)(t/mu)B(0,1) must be covered, and the outer
    extent must not exceed (1+eps)(t/mu)."""
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    t = state.clock
    if not t > 0:
        raise ValueError(f"state clock must be positive, got {t}")
    radius = t / mu
    inner_radius = (1.0 - epsilon) * radius
    if inner_radius <= 0:  # eps >= 1: the inner ball is empty
        covered = np.ones(1, dtype=bool)
        net = np.zeros((1, state.d))
    else:
        net = ball_net((0.0,) * state.d, inner_radius, net_resolution)
        covered = state.region.covers_points(net)
    if covered.all():
        inner_ok, inner_margin = True, 0.0
    else:
        inner_ok = False
        depths = inner_radius - np.linalg.norm(net[~covered], axis=1)
        inner_margin = float(depths.max())
    extent = state.region.first_uncovered_extent()
    ratio = extent / radius
    return ShapeReport(
        t=t,
        epsilon=epsilon,
        inner_ok=inner_ok,
        outer_ok=bool(ratio <= 1.0 + epsilon),
        inner_margin=inner_margin,
        outer_radius_ratio=float(ratio),
    )


def strong_infection_set_probe(
    state: GrowthState,
    points: Sequence[Sequence[float]],
    gamma: float | None = None,
    net_resolution: float | None = None,
) -> list[bool]:
    """Which probe points are strongly infected: their whole mean-radius ball
    lies inside the region (conservative predicate)."""
    gamma = state.law.gamma if gamma is None else gamma
    net_resolution = gamma / 100 if net_resolution is None else net_resolution
    return [state.region.covers_ball(p, gamma, net_resolution) for p in points]
