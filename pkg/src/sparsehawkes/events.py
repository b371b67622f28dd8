"""Event data container and the CSV event-file format."""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np


class EventDataError(ValueError):
    pass


@dataclass(frozen=True)
class EventData:
    """Per-component sorted event times over a window [t_start, t_end]."""

    dimension: int
    t_start: float
    t_end: float
    times: tuple

    def __post_init__(self):
        times = tuple(np.asarray(t, dtype=float) for t in self.times)
        object.__setattr__(self, "times", times)
        if len(times) != self.dimension:
            raise EventDataError(
                f"need {self.dimension} per-component time arrays, got {len(times)}"
            )
        if self.t_end < self.t_start:
            raise EventDataError("window end precedes window start")
        for k, t in enumerate(times):
            if t.size:
                if np.any(np.diff(t) <= 0):
                    raise EventDataError(f"component {k} times not strictly increasing")
                if t[0] < self.t_start or t[-1] > self.t_end:
                    raise EventDataError(f"component {k} times leave the window")

    def counts(self) -> np.ndarray:
        return np.array([t.size for t in self.times])

    def count_in(self, k: int, lo: float, hi: float) -> int:
        """Number of events of component k in [lo, hi)."""
        t = self.times[k]
        return int(np.searchsorted(t, hi, "left") - np.searchsorted(t, lo, "left"))

    def restrict(self, lo: float, hi: float) -> "EventData":
        """Events falling in [lo, hi], window reset to [lo, hi]."""
        times = tuple(t[(t >= lo) & (t <= hi)] for t in self.times)
        return EventData(self.dimension, lo, hi, times)

    def covers(self, lo: float, hi: float) -> bool:
        return self.t_start <= lo and self.t_end >= hi


def events_to_csv(events: EventData) -> str:
    """CSV with header component,time; 15 significant digits, sorted by time
    then component."""
    rows = []
    for k, t in enumerate(events.times):
        rows.extend((float(x), k) for x in t)
    rows.sort()
    buf = io.StringIO()
    buf.write("component,time\n")
    for x, k in rows:
        buf.write(f"{k},{x:.15g}\n")
    return buf.getvalue()


def events_from_csv(text: str, dimension: int, t_start: float, t_end: float) -> EventData:
    lines = text.strip().splitlines()
    if not lines or lines[0].strip() != "component,time":
        raise EventDataError("event CSV must start with header 'component,time'")
    per_comp: list = [[] for _ in range(dimension)]
    prev = -np.inf
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        comp_s, time_s = line.split(",")
        k, t = int(comp_s), float(time_s)
        if not 0 <= k < dimension:
            raise EventDataError(f"line {lineno}: component {k} out of range")
        if t < prev:
            raise EventDataError(f"line {lineno}: rows not sorted by time")
        prev = t
        per_comp[k].append(t)
    return EventData(dimension, t_start, t_end, tuple(np.array(c) for c in per_comp))


def save_events(events: EventData, path) -> None:
    with open(path, "w") as fh:
        fh.write(events_to_csv(events))


def load_events(path, dimension: int, t_start: float, t_end: float) -> EventData:
    with open(path) as fh:
        return events_from_csv(fh.read(), dimension, t_start, t_end)
