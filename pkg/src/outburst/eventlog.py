"""Event-log snapshot files.

One CSV per replication with header ``n,t,x0,...,x{d-1},r``: initial balls as
rows with n=-1 and t=0, then one row per outburst in order. Values are
formatted with 17 significant digits so a written log replays bit-exactly.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from .dynamics import Event, GrowthState
from .geometry import Ball, BallUnion


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def render_event_log(state: GrowthState, t_limit: float | None = None) -> str:
    """CSV text of a state's history; with `t_limit`, only events up to that
    time (the region is constant between events)."""
    d = state.d
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["n", "t"] + [f"x{j}" for j in range(d)] + ["r"])
    for b in state.initial_balls:
        writer.writerow(["-1", _fmt(0.0)] + [_fmt(c) for c in b.center] + [_fmt(b.radius)])
    for ev in state.log:
        if t_limit is not None and ev.time > t_limit:
            break
        writer.writerow([str(ev.index), _fmt(ev.time)] + [_fmt(c) for c in ev.location] + [_fmt(ev.radius)])
    return buf.getvalue()


@dataclass
class ParsedLog:
    d: int
    initial_balls: list[Ball]
    events: list[Event]


def parse_event_log(text: str) -> ParsedLog:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if len(header) < 4 or header[0] != "n" or header[1] != "t" or header[-1] != "r":
        raise ValueError(f"bad event-log header: {header}")
    d = len(header) - 3
    if [f"x{j}" for j in range(d)] != header[2:-1]:
        raise ValueError(f"bad event-log header: {header}")
    initial: list[Ball] = []
    events: list[Event] = []
    for row in reader:
        if not row:
            continue
        n = int(row[0])
        t = float(row[1])
        loc = tuple(float(v) for v in row[2:-1])
        r = float(row[-1])
        if n == -1:
            initial.append(Ball(loc, r))
        else:
            events.append(Event(n, t, loc, r))
    return ParsedLog(d=d, initial_balls=initial, events=events)


@dataclass
class ReplayReport:
    ok: bool
    n_events: int
    problems: list[str]


def replay_check(parsed: ParsedLog, cell_size: float | None = None) -> ReplayReport:
    """Re-run a log's geometry and verify the process invariants: indices
    contiguous, times strictly increasing, every outburst located inside the
    region grown so far, and the outer extent never jumping by more than the
    outburst's own radius."""
    problems: list[str] = []
    if not parsed.initial_balls:
        problems.append("no initial balls (rows with n=-1)")
        return ReplayReport(False, len(parsed.events), problems)
    if cell_size is None:
        radii = [b.radius for b in parsed.initial_balls] + [e.radius for e in parsed.events]
        cell_size = max(radii)
    region = BallUnion(parsed.d, cell_size)
    for b in parsed.initial_balls:
        region.insert(b)
    extent = region.first_uncovered_extent()
    prev_t = 0.0
    for i, ev in enumerate(parsed.events):
        if ev.index != i:
            problems.append(f"event {i}: index {ev.index} out of order")
        if not ev.time > prev_t:
            problems.append(f"event {i}: time {ev.time} not greater than previous {prev_t}")
        if not region.covers_point(ev.location):
            problems.append(f"event {i}: outburst at {ev.location} outside the prior region")
        region.insert(Ball(ev.location, ev.radius))
        new_extent = region.first_uncovered_extent()
        if new_extent > extent + ev.radius + 1e-9:
            problems.append(
                f"event {i}: extent jumped from {extent} to {new_extent} with radius {ev.radius}"
            )
        extent = new_extent
        prev_t = ev.time
        if len(problems) > 20:
            problems.append("... further problems suppressed")
            break
    return ReplayReport(not problems, len(parsed.events), problems)


def replay_check_file(path: str | Path) -> ReplayReport:
    return replay_check(parse_event_log(Path(path).read_text()))
