"""Union-of-balls geometry.

Maintains a growing region of closed d-dimensional balls behind a uniform
grid index and answers the queries the growth process needs: membership,
volume, uniform sampling, outer extent, and a conservative ball-coverage
predicate.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class EmptyRegionError(ValueError):
    """Operation requires a non-empty ball union."""


def unit_ball_volume(d: int) -> float:
    """Volume of the unit ball in R^d."""
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def ball_volume(radius: float, d: int) -> float:
    return unit_ball_volume(d) * radius**d


def _as_point(coords: Sequence[float]) -> tuple[float, ...]:
    p = tuple(float(c) for c in coords)
    if not all(math.isfinite(c) for c in p):
        raise ValueError(f"non-finite coordinates: {p}")
    return p


@dataclass(frozen=True)
class Ball:
    """Closed ball: all points within `radius` of `center` (boundary included)."""

    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _as_point(self.center))
        object.__setattr__(self, "radius", float(self.radius))
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise ValueError(f"ball radius must be positive and finite, got {self.radius}")

    @property
    def d(self) -> int:
        return len(self.center)

    def volume(self) -> float:
        return ball_volume(self.radius, self.d)

    def contains(self, p: Sequence[float]) -> bool:
        return math.dist(self.center, p) <= self.radius


@dataclass(frozen=True)
class MeasureEstimate:
    """Volume of a ball union, exact or hit-or-miss Monte Carlo.

    `value` is always clamped into [largest single-ball volume, sum of ball
    volumes]; `rel_error` is the 1-sigma relative standard error and is zero
    exactly when the estimate is exact.
    """

    value: float
    rel_error: float
    method: str  # "exact" | "monte_carlo"
    samples_used: int


# Candidate lists longer than this switch from a Python loop to a vectorized
# distance test against the packed center/radius arrays.
_VECTOR_THRESHOLD = 64

_MC_BATCH = 8192


class BallUnion:
    """Growing union of closed balls with a uniform grid index.

    Every ball is registered in all grid cells its bounding box overlaps, so
    a point query needs only the one cell containing the point. `cell_size`
    should be at least the largest radius the governing radius law can
    produce; larger balls (e.g. an oversized initial ball) simply register
    in more cells. Single-writer: inserts must not race with queries.
    """

    def __init__(self, d: int, cell_size: float):
        if d < 1:
            raise ValueError(f"dimension must be >= 1, got {d}")
        if not (cell_size > 0 and math.isfinite(cell_size)):
            raise ValueError(f"cell_size must be positive, got {cell_size}")
        self.d = int(d)
        self.cell_size = float(cell_size)
        self._n = 0
        cap = 16
        self._centers = np.empty((cap, d), dtype=np.float64)
        self._radii = np.empty(cap, dtype=np.float64)
        self._center_tuples: list[tuple[float, ...]] = []
        self._grid: dict[tuple[int, ...], list[int]] = {}
        self._bbox_lo = np.full(d, math.inf)
        self._bbox_hi = np.full(d, -math.inf)
        self._extent = 0.0  # max over balls of |center| + radius
        self._max_volume = 0.0
        self._sum_volumes = 0.0
        self._cum_volumes: np.ndarray | None = None  # rebuilt lazily for sampling

    def __len__(self) -> int:
        return self._n

    @property
    def centers(self) -> np.ndarray:
        return self._centers[: self._n]

    @property
    def radii(self) -> np.ndarray:
        return self._radii[: self._n]

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        if self._n == 0:
            raise EmptyRegionError("empty union has no bounding box")
        return self._bbox_lo.copy(), self._bbox_hi.copy()

    def ball(self, i: int) -> Ball:
        return Ball(self._center_tuples[i], float(self._radii[i]))

    def balls(self) -> Iterable[Ball]:
        for i in range(self._n):
            yield self.ball(i)

    def _cell_of(self, p: Sequence[float]) -> tuple[int, ...]:
        cs = self.cell_size
        return tuple(int(math.floor(c / cs)) for c in p)

    def _cell_range(self, lo: Sequence[float], hi: Sequence[float]):
        cs = self.cell_size
        spans = [
            range(int(math.floor(a / cs)), int(math.floor(b / cs)) + 1)
            for a, b in zip(lo, hi)
        ]
        return itertools.product(*spans)

    def insert(self, ball: Ball) -> int:
        """Insert a ball, register it in the grid, return its index."""
        if ball.d != self.d:
            raise ValueError(f"ball dimension {ball.d} != union dimension {self.d}")
        i = self._n
        if i == len(self._radii):
            new_cap = 2 * len(self._radii)
            self._centers = np.resize(self._centers, (new_cap, self.d))
            self._radii = np.resize(self._radii, new_cap)
        c = np.asarray(ball.center)
        self._centers[i] = c
        self._radii[i] = ball.radius
        self._center_tuples.append(ball.center)
        self._n += 1
        lo = c - ball.radius
        hi = c + ball.radius
        for cell in self._cell_range(lo, hi):
            self._grid.setdefault(cell, []).append(i)
        np.minimum(self._bbox_lo, lo, out=self._bbox_lo)
        np.maximum(self._bbox_hi, hi, out=self._bbox_hi)
        self._extent = max(self._extent, math.hypot(*ball.center) + ball.radius)
        v = ball.volume()
        self._max_volume = max(self._max_volume, v)
        self._sum_volumes += v
        self._cum_volumes = None
        return i

    # -- membership -------------------------------------------------------

    def covers_point(self, p: Sequence[float]) -> bool:
        """True iff some ball contains p (closed). Looks at one grid cell."""
        idx = self._grid.get(self._cell_of(p))
        if not idx:
            return False
        if len(idx) <= _VECTOR_THRESHOLD:
            tuples = self._center_tuples
            radii = self._radii
            for i in idx:
                if math.dist(tuples[i], p) <= radii[i]:
                    return True
            return False
        ind = np.asarray(idx)
        diff = self._centers[ind] - np.asarray(p, dtype=np.float64)
        return bool(np.any(np.einsum("ij,ij->i", diff, diff) <= self._radii[ind] ** 2))

    def covers_point_linear(self, p: Sequence[float]) -> bool:
        """Grid-free scan over every ball; oracle for the grid index."""
        if self._n == 0:
            return False
        diff = self.centers - np.asarray(p, dtype=np.float64)
        return bool(np.any(np.einsum("ij,ij->i", diff, diff) <= self.radii**2))

    def covers_points(self, points: np.ndarray) -> np.ndarray:
        """Vectorized covers_point over an (m, d) array, grouped by grid cell."""
        points = np.asarray(points, dtype=np.float64)
        out = np.zeros(len(points), dtype=bool)
        if self._n == 0 or len(points) == 0:
            return out
        cells = np.floor(points / self.cell_size).astype(np.int64)
        order = np.lexsort(cells.T[::-1])
        sorted_cells = cells[order]
        boundaries = np.nonzero(np.any(np.diff(sorted_cells, axis=0) != 0, axis=1))[0] + 1
        starts = np.concatenate(([0], boundaries))
        ends = np.concatenate((boundaries, [len(points)]))
        for s, e in zip(starts, ends):
            idx = self._grid.get(tuple(int(v) for v in sorted_cells[s]))
            if not idx:
                continue
            ind = np.asarray(idx)
            grp = order[s:e]
            diff = points[grp, None, :] - self._centers[ind][None, :, :]
            d2 = np.einsum("pij,pij->pi", diff, diff)
            out[grp] = np.any(d2 <= self._radii[ind] ** 2, axis=1)
        return out

    # -- measure ----------------------------------------------------------

    def measure(self, target_rel_error: float, rng: np.random.Generator) -> MeasureEstimate:
        """Volume of the union.

        Exact in closed form for a single ball; otherwise hit-or-miss Monte
        Carlo over the bounding box, sampling until the estimated relative
        standard error drops to `target_rel_error`.
        """
        if self._n == 0:
            raise EmptyRegionError("cannot measure an empty union")
        if not target_rel_error > 0:
            raise ValueError(f"target_rel_error must be positive, got {target_rel_error}")
        if self._n == 1:
            return MeasureEstimate(
                value=ball_volume(float(self._radii[0]), self.d),
                rel_error=0.0,
                method="exact",
                samples_used=0,
            )
        lo, hi = self._bbox_lo, self._bbox_hi
        box_volume = float(np.prod(hi - lo))
        hits = 0
        n = 0
        while True:
            pts = rng.uniform(lo, hi, size=(_MC_BATCH, self.d))
            hits += int(np.count_nonzero(self.covers_points(pts)))
            n += _MC_BATCH
            if hits == 0:
                continue  # bbox always intersects the union, so hits arrive
            p_hat = hits / n
            rel = math.sqrt((1.0 - p_hat) / (p_hat * n))
            if rel <= target_rel_error:
                break
        value = min(max(p_hat * box_volume, self._max_volume), self._sum_volumes)
        return MeasureEstimate(value=value, rel_error=rel, method="monte_carlo", samples_used=n)

    # -- sampling ---------------------------------------------------------

    def _cum(self) -> np.ndarray:
        if self._cum_volumes is None:
            self._cum_volumes = np.cumsum(unit_ball_volume(self.d) * self.radii**self.d)
        return self._cum_volumes

    def _lowest_covering_index(self, p: Sequence[float]) -> int:
        idx = self._grid.get(self._cell_of(p))
        best = -1
        tuples = self._center_tuples
        radii = self._radii
        for i in idx:
            if (best < 0 or i < best) and math.dist(tuples[i], p) <= radii[i]:
                best = i
        return best

    def sample_uniform(self, rng: np.random.Generator) -> tuple[float, ...]:
        """Uniform point on the union.

        Pick a ball with probability proportional to its volume, sample
        uniformly inside it, and accept only when the chosen ball is the
        lowest-indexed one covering the point; retry otherwise. Expected
        retries are bounded by (sum of ball volumes) / union volume.
        """
        if self._n == 0:
            raise EmptyRegionError("cannot sample from an empty union")
        cum = self._cum()
        total = cum[-1]
        d = self.d
        while True:
            i = int(np.searchsorted(cum, rng.random() * total, side="right"))
            i = min(i, self._n - 1)
            r = float(self._radii[i])
            c = self._center_tuples[i]
            while True:  # rejection from the circumscribed cube
                u = rng.uniform(-1.0, 1.0, size=d)
                if float(u @ u) <= 1.0:
                    break
            p = tuple(float(c[j] + r * u[j]) for j in range(d))
            if self._lowest_covering_index(p) == i:
                return p

    # -- coverage ---------------------------------------------------------

    def _candidates_near(self, center: Sequence[float], radius: float) -> np.ndarray:
        c = np.asarray(center, dtype=np.float64)
        seen: set[int] = set()
        for cell in self._cell_range(c - radius, c + radius):
            lst = self._grid.get(cell)
            if lst:
                seen.update(lst)
        return np.fromiter(seen, dtype=np.int64, count=len(seen))

    def covers_ball(self, center: Sequence[float], radius: float, net_resolution: float) -> bool:
        """Conservative test that B(center, radius) lies inside the union.

        A deterministic net of the query ball (lattice of pitch
        `net_resolution` plus a boundary mesh) is tested against the balls
        shrunk by the same margin; alternatively a single union ball may
        contain the query ball outright. True implies exact coverage; false
        may be conservative by up to the margin.
        """
        center = _as_point(center)
        if not radius > 0:
            raise ValueError(f"radius must be positive, got {radius}")
        if not 0 < net_resolution <= radius / 4:
            raise ValueError(
                f"net_resolution must be in (0, radius/4], got {net_resolution} for radius {radius}"
            )
        if self._n == 0:
            return False
        ind = self._candidates_near(center, radius)
        if len(ind) == 0:
            return False
        c = np.asarray(center)
        diff = self._centers[ind] - c
        dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        if bool(np.any(dist <= self._radii[ind] - radius)):
            return True  # query ball nested in one union ball, exact
        net = ball_net(center, radius, net_resolution)
        shrunk = self._radii[ind] - net_resolution
        ok = shrunk > 0
        if not ok.any():
            return False
        sub = ind[ok]
        d2 = _pairwise_sq_dists(net, self._centers[sub])
        return bool(np.all(np.any(d2 <= shrunk[ok] ** 2, axis=1)))

    def first_uncovered_extent(self) -> float:
        """Exact outer radius around the origin: max over balls of |center| + radius."""
        if self._n == 0:
            raise EmptyRegionError("empty union has no extent")
        return self._extent


def _pairwise_sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("pij,pij->pi", diff, diff)


def sphere_mesh(d: int, pitch: float) -> np.ndarray:
    """Points on the unit sphere in R^d with chordal spacing about `pitch`.

    d=1 gives the two endpoints; higher d recurses over the polar angle,
    meshing each latitude ring at the same pitch.
    """
    if d == 1:
        return np.array([[-1.0], [1.0]])
    if d == 2:
        n = max(4, int(math.ceil(2 * math.pi / pitch)))
        a = np.linspace(0.0, 2 * math.pi, n, endpoint=False)
        return np.stack([np.cos(a), np.sin(a)], axis=1)
    n_polar = max(2, int(math.ceil(math.pi / pitch)))
    rows = []
    for k in range(n_polar + 1):
        phi = k * math.pi / n_polar
        s, c = math.sin(phi), math.cos(phi)
        if s * 2 * math.pi < pitch:  # polar cap collapses to a point
            rows.append(np.array([[c] + [0.0] * (d - 1)]))
            continue
        ring = sphere_mesh(d - 1, pitch / s)
        rows.append(np.concatenate([np.full((len(ring), 1), c), s * ring], axis=1))
    return np.concatenate(rows, axis=0)


_NET_CACHE: dict[tuple[int, float, float], np.ndarray] = {}


def ball_net(center: Sequence[float], radius: float, resolution: float) -> np.ndarray:
    """Deterministic net of B(center, radius): lattice points of pitch
    `resolution` inside the ball plus a boundary mesh of matching angular
    pitch. Cached in ball-local coordinates."""
    d = len(center)
    key = (d, float(radius), float(resolution))
    local = _NET_CACHE.get(key)
    if local is None:
        m = int(math.floor(radius / resolution))
        axis = np.arange(-m, m + 1) * resolution
        lattice = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
        inside = np.einsum("ij,ij->i", lattice, lattice) <= radius**2
        boundary = radius * sphere_mesh(d, resolution / radius)
        local = np.concatenate([lattice[inside], boundary], axis=0)
        if len(_NET_CACHE) > 32:
            _NET_CACHE.clear()
        _NET_CACHE[key] = local
    return local + np.asarray(center, dtype=np.float64)


class CoverageNet:
    """Incremental form of BallUnion.covers_ball for one fixed target ball.

    Feed balls in any order; coverage is monotone, and `covered` agrees with
    covers_ball evaluated on the union of everything fed so far (same net,
    same margin, same nested-ball shortcut).
    """

    def __init__(self, center: Sequence[float], radius: float, net_resolution: float):
        self.center = _as_point(center)
        self.radius = float(radius)
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {radius}")
        if not 0 < net_resolution <= self.radius / 4:
            raise ValueError(
                f"net_resolution must be in (0, radius/4], got {net_resolution} for radius {radius}"
            )
        self.net_resolution = float(net_resolution)
        self._uncovered = ball_net(self.center, self.radius, self.net_resolution)
        self._done = False

    @property
    def covered(self) -> bool:
        return self._done or len(self._uncovered) == 0

    def add_ball(self, center: Sequence[float], radius: float) -> bool:
        """Account for one more ball; returns the updated coverage flag."""
        if self._done:
            return True
        gap = math.dist(center, self.center)
        if gap > radius + self.radius:
            return self.covered  # cannot touch the target ball
        if gap <= radius - self.radius:
            self._done = True  # target nested in this ball, exact
            return True
        shrunk = radius - self.net_resolution
        if shrunk > 0 and len(self._uncovered):
            diff = self._uncovered - np.asarray(center, dtype=np.float64)
            keep = np.einsum("ij,ij->i", diff, diff) > shrunk**2
            self._uncovered = self._uncovered[keep]
        return self.covered

    def add_union(self, union: BallUnion) -> bool:
        for i in np.sort(union._candidates_near(self.center, self.radius)):
            if self.add_ball(union._center_tuples[i], float(union._radii[i])):
                return True
        return self.covered
