"""Built-in consistency checks, runnable from a fresh checkout.

Each check is a quick version of a test the full suite runs at scale:
geometry against the closed-form two-ball area, the two steppers against
each other, pathwise process invariants via the replay checker, and the
chain bound against simulated hitting times. `inject_grid_fault` corrupts
the grid index on purpose, as a negative control that the completeness
check actually catches broken indexes.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.stats

from .dynamics import InitialSet, PoissonField, RadiusLaw, init, run_until, step_rate, step_thinning
from .estimators import chain_bound, hitting_time
from .eventlog import parse_event_log, render_event_log, replay_check
from .geometry import Ball, BallUnion
from .seeds import derive_rng, derive_seed

_SEED = 20240917  # selftest is deterministic by construction


def two_circle_union_area(r: float, dist: float) -> float:
    """Closed-form area of two radius-r circles with centers `dist` apart."""
    if dist >= 2 * r:
        return 2 * math.pi * r**2
    lens = 2 * r**2 * math.acos(dist / (2 * r)) - (dist / 2) * math.sqrt(4 * r**2 - dist**2)
    return 2 * math.pi * r**2 - lens


def check_lens_measure() -> tuple[bool, str]:
    union = BallUnion(2, 1.0)
    union.insert(Ball((0.0, 0.0), 1.0))
    union.insert(Ball((1.0, 0.0), 1.0))
    estimate = union.measure(0.001, derive_rng(_SEED, 1))
    exact = two_circle_union_area(1.0, 1.0)
    rel = abs(estimate.value - exact) / exact
    return rel < 0.005, f"two-ball area {estimate.value:.5f} vs closed form {exact:.5f} (rel {rel:.2e})"


def check_grid_completeness(inject_fault: bool = False) -> tuple[bool, str]:
    rng = derive_rng(_SEED, 2)
    union = BallUnion(2, 1.0)
    for _ in range(40):
        union.insert(Ball(tuple(rng.uniform(-4, 4, size=2)), float(rng.uniform(0.2, 1.0))))
    if inject_fault:
        cell = union._cell_of(union.ball(0).center)
        union._grid[cell].remove(0)
    queries = rng.uniform(-5.5, 5.5, size=(2000, 2))
    mismatches = sum(
        union.covers_point(q) != union.covers_point_linear(q) for q in queries
    )
    return mismatches == 0, f"{mismatches}/2000 grid-vs-linear membership mismatches"


def check_stepper_equivalence(reps: int = 3000) -> tuple[bool, str]:
    law = RadiusLaw.deterministic(1.0)
    initial = InitialSet.ball((0.0, 0.0), 1.0)
    d_rate, d_thin, x_rate, x_thin = [], [], [], []
    for i in range(reps):
        st = init(initial, law, 2)
        ev = step_rate(st, derive_rng(_SEED, 3, i))
        d_rate.append(ev.time)
        x_rate.append(math.hypot(*ev.location))
        st = init(initial, law, 2)
        ev = step_thinning(st, PoissonField(derive_seed(_SEED, 4, i), law, 2))
        d_thin.append(ev.time)
        x_thin.append(math.hypot(*ev.location))
    p_dt = scipy.stats.ks_2samp(d_rate, d_thin).pvalue
    p_x = scipy.stats.ks_2samp(x_rate, x_thin).pvalue
    p_exp = scipy.stats.kstest(d_rate, scipy.stats.expon(scale=1 / math.pi).cdf).pvalue
    ok = p_dt > 0.01 and p_x > 0.01 and p_exp > 0.01
    return ok, f"KS p-values: waiting {p_dt:.3f}, |location| {p_x:.3f}, vs Exp(pi) {p_exp:.3f}"


def check_pathwise_invariants() -> tuple[bool, str]:
    law = RadiusLaw.deterministic(1.0)
    for i in range(5):
        st = init(InitialSet.ball((0.0, 0.0), 1.0), law, 2)
        run_until(st, n_max=300, field=PoissonField(derive_seed(_SEED, 5, i), law, 2))
        report = replay_check(parse_event_log(render_event_log(st)))
        if not report.ok:
            return False, f"run {i}: {report.problems[0]}"
    return True, "5 runs x 300 events: connectivity, time order, extent bound all hold"


def check_chain_bound_domination(reps: int = 60) -> tuple[bool, str]:
    law = RadiusLaw.deterministic(1.0)
    x = (4.0, 0.0)
    bound = chain_bound(x, law, 2)
    values = []
    for i in range(reps):
        st = init(InitialSet.ball((0.0, 0.0), 1.0), law, 2)
        field = PoissonField(derive_seed(_SEED, 6, i), law, 2)
        while hitting_time(st, x) == math.inf:
            step_thinning(st, field)
        values.append(hitting_time(st, x))
    mean = float(np.mean(values))
    return mean <= bound.bound_mean, f"mean hitting time {mean:.2f} <= bound {bound.bound_mean:.2f}"


def run_selftest(inject_grid_fault: bool = False) -> int:
    checks = [
        ("two-ball area vs closed form", lambda: check_lens_measure()),
        ("grid index completeness", lambda: check_grid_completeness(inject_grid_fault)),
        ("stepper equivalence (KS)", lambda: check_stepper_equivalence()),
        ("pathwise invariants (replay)", lambda: check_pathwise_invariants()),
        ("chain bound domination", lambda: check_chain_bound_domination()),
    ]
    failures = 0
    for name, fn in checks:
        ok, detail = fn()
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        failures += 0 if ok else 1
    print(f"selftest: {len(checks) - failures}/{len(checks)} checks passed")
    return 2 if failures else 0
