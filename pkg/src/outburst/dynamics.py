"""The growth process.

State evolves by outbursts: after an Exp(|region|) wait, a point uniform on
the region sprouts a ball of random radius. Two steppers realize the same
law: `step_rate` draws the waiting time from the (Monte Carlo) region volume,
while `step_thinning` scans a lazily materialized space-time Poisson field
and accepts the first point the region covers — exact, and the default for
experiments. Restarted processes share the field for pathwise coupling.
"""

from __future__ import annotations

import heapq
import itertools
import math
import random
from dataclasses import dataclass, field as dc_field
from typing import Iterable, Literal, Sequence

import numpy as np

from .geometry import Ball, BallUnion
from .seeds import TAG_FIELD_BLOCK, derive_seed

# Hausdorff slack, as a fraction of the mean radius, allowed when a box
# initial set is realized as a finite ball cover.
BOX_COVER_TOLERANCE = 0.01


@dataclass(frozen=True)
class RadiusLaw:
    """Distribution of outburst-ball radii: positive, bounded support.

    `gamma` is the mean, `r_max` the support bound, and `p_gamma` the exact
    probability that a radius reaches the mean.
    """

    kind: Literal["deterministic", "uniform_interval", "finite_discrete"]
    params: tuple
    gamma: float
    r_max: float
    p_gamma: float

    @staticmethod
    def deterministic(r: float) -> "RadiusLaw":
        r = float(r)
        if not (0 < r < math.inf):
            raise ValueError(f"radius must be in (0, inf), got {r}")
        return RadiusLaw("deterministic", (r,), gamma=r, r_max=r, p_gamma=1.0)

    @staticmethod
    def uniform_interval(a: float, b: float) -> "RadiusLaw":
        a, b = float(a), float(b)
        if not (0 < a <= b < math.inf):
            raise ValueError(f"need 0 < a <= b < inf, got a={a}, b={b}")
        gamma = (a + b) / 2
        p = 1.0 if a == b else (b - gamma) / (b - a)
        return RadiusLaw("uniform_interval", (a, b), gamma=gamma, r_max=b, p_gamma=p)

    @staticmethod
    def finite_discrete(atoms: Iterable[tuple[float, float]]) -> "RadiusLaw":
        pairs = sorted((float(r), float(p)) for r, p in atoms)
        if not pairs:
            raise ValueError("finite_discrete needs at least one atom")
        if any(not (0 < r < math.inf) for r, _ in pairs):
            raise ValueError(f"atom radii must be in (0, inf), got {pairs}")
        if any(p <= 0 for _, p in pairs):
            raise ValueError(f"atom probabilities must be positive, got {pairs}")
        total = sum(p for _, p in pairs)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"atom probabilities sum to {total}, expected 1")
        pairs = tuple((r, p / total) for r, p in pairs)
        gamma = sum(r * p for r, p in pairs)
        p_gamma = sum(p for r, p in pairs if r >= gamma)
        return RadiusLaw("finite_discrete", pairs, gamma=gamma, r_max=pairs[-1][0], p_gamma=p_gamma)

    def quantile(self, u: float) -> float:
        """Inverse CDF; radii attached to field points are quantile(mark)."""
        if self.kind == "deterministic":
            return self.params[0]
        if self.kind == "uniform_interval":
            a, b = self.params
            return a + (b - a) * u
        acc = 0.0
        for r, p in self.params:
            acc += p
            if u < acc:
                return r
        return self.params[-1][0]

    def sample(self, rng: np.random.Generator) -> float:
        return self.quantile(float(rng.random()))


@dataclass(frozen=True)
class Event:
    """One outburst: at time `time`, a ball of radius `radius` around `location`."""

    index: int
    time: float
    location: tuple[float, ...]
    radius: float


@dataclass(frozen=True)
class InitialSet:
    """Region infected at time zero: a ball, a box, or an explicit ball list."""

    shape: Literal["ball", "box", "ball_list"]
    params: tuple

    @staticmethod
    def ball(center: Sequence[float], radius: float) -> "InitialSet":
        return InitialSet("ball", (tuple(float(c) for c in center), float(radius)))

    @staticmethod
    def box(lo: Sequence[float], hi: Sequence[float]) -> "InitialSet":
        return InitialSet(
            "box", (tuple(float(c) for c in lo), tuple(float(c) for c in hi))
        )

    @staticmethod
    def ball_list(balls: Sequence[Ball]) -> "InitialSet":
        return InitialSet("ball_list", tuple(balls))

    def to_balls(self, d: int, gamma: float) -> list[Ball]:
        """Realize as balls; a box becomes a deterministic fine cover whose
        union contains the box and stays within gamma/100 of it."""
        if self.shape == "ball":
            center, radius = self.params
            if len(center) != d:
                raise ValueError(f"initial ball center has dimension {len(center)}, expected {d}")
            if not radius > 0:
                raise ValueError("initial ball must have positive radius (zero-volume initial set)")
            return [Ball(center, radius)]
        if self.shape == "ball_list":
            balls = list(self.params)
            if not balls:
                raise ValueError("initial ball list is empty (zero-volume initial set)")
            if any(b.d != d for b in balls):
                raise ValueError("initial ball list dimension mismatch")
            return balls
        lo, hi = self.params
        if len(lo) != d or len(hi) != d:
            raise ValueError(f"initial box has dimension {len(lo)}, expected {d}")
        if any(not (l < h) for l, h in zip(lo, hi)):
            raise ValueError(f"initial box must have positive volume, got lo={lo}, hi={hi}")
        if any(not (math.isfinite(l) and math.isfinite(h)) for l, h in zip(lo, hi)):
            raise ValueError("initial box must be bounded")
        rho = gamma * BOX_COVER_TOLERANCE
        pitch = 2 * rho / math.sqrt(d)
        axes = []
        for l, h in zip(lo, hi):
            n = int(math.ceil((h - l) / pitch))
            axes.append(l + (h - l) * (np.arange(n) + 0.5) / n)
        centers = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        return [Ball(tuple(c), rho) for c in centers]


@dataclass
class GrowthState:
    """Full process history: region, clock, and the ordered outburst log.

    Single-writer; `origin_time` is zero for the root process and the restart
    time for coupled restarts.
    """

    region: BallUnion
    clock: float
    log: list[Event]
    origin_time: float
    law: RadiusLaw
    d: int
    seed: int | None = None
    initial_balls: tuple[Ball, ...] = ()
    _scanner: "_FieldScanner | None" = dc_field(default=None, repr=False, compare=False)

    @property
    def n_events(self) -> int:
        return len(self.log)

    def _apply(self, time: float, location: tuple[float, ...], radius: float) -> Event:
        ev = Event(len(self.log), time, location, radius)
        self.region.insert(Ball(location, radius))
        self.log.append(ev)
        self.clock = time
        return ev


class PoissonField:
    """Lazily materialized unit-intensity Poisson store on R^d x time.

    Space is cut into grid cells of `cell_size`, time into slabs of
    `slab_height`; each (cell, slab) block is a deterministic function of
    (seed, cell, slab), so blocks can be materialized in any order, shared
    between coupled processes, and regenerated bit-identically. Points carry
    a uniform mark and the radius quantile(mark) under the radius law.
    Concurrent materialization is idempotent (dict.setdefault, first writer
    wins).
    """

    def __init__(
        self,
        seed: int,
        law: RadiusLaw,
        d: int,
        cell_size: float | None = None,
        slab_height: float = 1.0,
    ):
        self.seed = int(seed)
        self.law = law
        self.d = int(d)
        self.cell_size = float(cell_size) if cell_size is not None else law.r_max
        self.slab_height = float(slab_height)
        if not self.cell_size > 0 or not self.slab_height > 0:
            raise ValueError("cell_size and slab_height must be positive")
        self._mean_per_block = self.cell_size**self.d * self.slab_height
        self._store: dict[tuple, list[tuple]] = {}

    def block(self, cell: tuple[int, ...], slab: int) -> list[tuple]:
        """Points of one block as (time, location, radius, mark), unsorted."""
        key = (slab, cell)
        pts = self._store.get(key)
        if pts is None:
            pts = self._store.setdefault(key, self._materialize(cell, slab))
        return pts

    def _materialize(self, cell: tuple[int, ...], slab: int) -> list[tuple]:
        rng = random.Random(derive_seed(self.seed, TAG_FIELD_BLOCK, slab, *cell))
        # Knuth inversion: exact Poisson count without a numpy Generator,
        # whose construction would dominate the cost of these tiny blocks.
        threshold = math.exp(-self._mean_per_block)
        count = 0
        p = rng.random()
        while p > threshold:
            count += 1
            p *= rng.random()
        if count == 0:
            return []
        cs, sh = self.cell_size, self.slab_height
        out = []
        for _ in range(count):
            loc = tuple((cell[j] + rng.random()) * cs for j in range(self.d))
            t = (slab + rng.random()) * sh
            u = rng.random()
            out.append((t, loc, self.law.quantile(u), u))
        return out


class _FieldScanner:
    """Ascending-time scan of a PoissonField restricted to a state's bbox.

    Keeps a heap of unexamined points from every registered (cell, slab)
    block below the materialized horizon; each point is examined at most
    once per process. Rejected points are dead for good: a later event can
    only occur at a strictly later time.
    """

    def __init__(self, field: PoissonField, state: GrowthState):
        self.field = field
        self._heap: list[tuple] = []
        self._cell_lo: tuple[int, ...] | None = None  # registered cell box
        self._cell_hi: tuple[int, ...] | None = None
        self._slab = int(math.floor(state.clock / field.slab_height))
        self._pending: tuple | None = None
        self._seq = 0
        self._seen_balls = 0
        self._seen_clock = state.clock
        self._sync(state)

    def _push_block(self, cell: tuple[int, ...], slab: int) -> None:
        for t, loc, r, _u in self.field.block(cell, slab):
            self._seq += 1
            heapq.heappush(self._heap, (t, self._seq, loc, r))

    def _sync(self, state: GrowthState) -> None:
        """Register cells newly overlapped by the bbox; backfill their blocks
        for every already-materialized slab. The registered region is the
        cell-aligned box of the bbox, which only ever grows."""
        region = state.region
        cs = self.field.cell_size
        lo, hi = region.bbox
        new_lo = tuple(int(math.floor(a / cs)) for a in lo)
        new_hi = tuple(int(math.floor(b / cs)) for b in hi)
        if new_lo != self._cell_lo or new_hi != self._cell_hi:
            old_lo, old_hi = self._cell_lo, self._cell_hi
            start = int(math.floor(state.clock / self.field.slab_height))
            for cell in itertools.product(*(range(a, b + 1) for a, b in zip(new_lo, new_hi))):
                if old_lo is not None and all(
                    a <= c <= b for c, a, b in zip(cell, old_lo, old_hi)
                ):
                    continue
                for slab in range(start, self._slab):
                    self._push_block(cell, slab)
            self._cell_lo, self._cell_hi = new_lo, new_hi
        self._seen_balls = len(region)
        self._seen_clock = state.clock

    def _advance_slab(self) -> None:
        for cell in itertools.product(
            *(range(a, b + 1) for a, b in zip(self._cell_lo, self._cell_hi))
        ):
            self._push_block(cell, self._slab)
        self._slab += 1

    def _rebuild(self, state: GrowthState) -> None:
        # The state was mutated outside this scanner (e.g. mixed steppers):
        # drop everything and rescan from the current clock.
        self._heap = []
        self._cell_lo = self._cell_hi = None
        self._slab = int(math.floor(state.clock / self.field.slab_height))
        self._pending = None
        self._sync(state)

    def peek(self, state: GrowthState) -> tuple[float, tuple[float, ...], float]:
        """Next field point covered by the current region, not yet consumed."""
        if len(state.region) != self._seen_balls or state.clock != self._seen_clock:
            self._rebuild(state)
        if self._pending is not None:
            return self._pending
        horizon = self._slab * self.field.slab_height
        while True:
            while self._heap and self._heap[0][0] <= horizon:
                t, _seq, loc, r = heapq.heappop(self._heap)
                if t <= state.clock:
                    continue
                if state.region.covers_point(loc):
                    self._pending = (t, loc, r)
                    return self._pending
            self._advance_slab()
            horizon = self._slab * self.field.slab_height

    def consume(self, state: GrowthState, event: Event) -> None:
        self._pending = None
        self._sync(state)
        self._seen_clock = event.time


def _region_from_balls(balls: Sequence[Ball], d: int, cell_size: float) -> BallUnion:
    union = BallUnion(d, cell_size)
    for b in balls:
        union.insert(b)
    return union


def init(initial: InitialSet, law: RadiusLaw, d: int, seed: int | None = None) -> GrowthState:
    """Fresh process at time zero from the given initial set."""
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    balls = initial.to_balls(d, law.gamma)
    region = _region_from_balls(balls, d, law.r_max)
    return GrowthState(
        region=region,
        clock=0.0,
        log=[],
        origin_time=0.0,
        law=law,
        d=d,
        seed=seed,
        initial_balls=tuple(balls),
    )


def restart(
    field: PoissonField, x: Sequence[float], s: float, law: RadiusLaw, d: int
) -> GrowthState:
    """New process from a mean-radius ball around x at time s, driven by the
    same field — all infection except B(x, gamma) is erased, and subsequent
    growth couples pathwise with any other process on the field."""
    if s < 0:
        raise ValueError(f"restart time must be >= 0, got {s}")
    if law is not field.law and law != field.law:
        raise ValueError("restart law must match the field's law")
    if d != field.d:
        raise ValueError(f"restart dimension {d} != field dimension {field.d}")
    ball = Ball(tuple(float(c) for c in x), law.gamma)
    region = _region_from_balls([ball], d, law.r_max)
    return GrowthState(
        region=region,
        clock=float(s),
        log=[],
        origin_time=float(s),
        law=law,
        d=d,
        seed=field.seed,
        initial_balls=(ball,),
    )


def step_rate(
    state: GrowthState,
    rng: np.random.Generator,
    target_rel_error: float = 0.01,
) -> Event:
    """One outburst via the exponential-clock construction: wait
    Exp(|region|), place the outburst uniformly on the region."""
    m = state.region.measure(target_rel_error, rng)
    delta = float(rng.exponential(1.0 / m.value))
    x = state.region.sample_uniform(rng)
    r = state.law.sample(rng)
    return state._apply(state.clock + delta, x, r)


def step_thinning(state: GrowthState, field: PoissonField) -> Event:
    """One outburst via field thinning: the first field point after the clock
    whose location the region covers. Same law as step_rate, no volume
    estimate involved."""
    scanner = _scanner_for(state, field)
    t, loc, r = scanner.peek(state)
    ev = state._apply(t, loc, r)
    scanner.consume(state, ev)
    return ev


def _scanner_for(state: GrowthState, field: PoissonField) -> _FieldScanner:
    scanner = state._scanner
    if scanner is None or scanner.field is not field:
        scanner = _FieldScanner(field, state)
        state._scanner = scanner
    return scanner


def run_until(
    state: GrowthState,
    t_max: float | None = None,
    n_max: int | None = None,
    stepper: Literal["rate", "thinning"] = "thinning",
    rng: np.random.Generator | None = None,
    field: PoissonField | None = None,
    target_rel_error: float = 0.01,
) -> GrowthState:
    """Step until the next event would pass t_max (clock parks at t_max) or
    n_max further events have been appended."""
    if t_max is None and n_max is None:
        raise ValueError("need a stopping rule: t_max and/or n_max")
    if t_max is not None and not t_max > 0:
        raise ValueError(f"t_max must be positive, got {t_max}")
    if n_max is not None and n_max < 0:
        raise ValueError(f"n_max must be >= 0, got {n_max}")
    if stepper == "rate":
        if rng is None:
            raise ValueError("stepper 'rate' needs rng")
    elif stepper == "thinning":
        if field is None:
            raise ValueError("stepper 'thinning' needs field")
    else:
        raise ValueError(f"unknown stepper {stepper!r}")

    remaining = math.inf if n_max is None else n_max
    while remaining > 0:
        if stepper == "thinning":
            scanner = _scanner_for(state, field)
            t, loc, r = scanner.peek(state)
            if t_max is not None and t > t_max:
                break
            scanner.consume(state, state._apply(t, loc, r))
        else:
            m = state.region.measure(target_rel_error, rng)
            delta = float(rng.exponential(1.0 / m.value))
            if t_max is not None and state.clock + delta > t_max:
                break
            x = state.region.sample_uniform(rng)
            r = state.law.sample(rng)
            state._apply(state.clock + delta, x, r)
        remaining -= 1
    if t_max is not None and state.clock < t_max:
        state.clock = t_max  # region is constant between events
        if state._scanner is not None and (field is None or state._scanner.field is field):
            state._scanner._seen_clock = t_max  # parking is not a foreign mutation
    return state
