"""Convective event identification from raw strikes.

Strikes are clustered in standardized (x, y, t) space with a density scan
(DBSCAN), per daily analysis window; the resulting events are sized,
phased and given propagation velocities.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .ingest import Grid, StrikeSet

NOISE = -1

# class breakpoints on total strike count (upper bounds, inclusive)
CLASS_BREAKS = (170, 900, 8000)

MIN_STRIKES_FOR_RLR = 50


class EventClass(str, enum.Enum):
    SMALL = "Small"
    MEDIUM = "Medium"
    LARGE = "Large"
    VERY_LARGE = "VeryLarge"

    def merged(self) -> "EventClass":
        """VeryLarge events are pooled with Large ones for ratio estimation."""
        return EventClass.LARGE if self is EventClass.VERY_LARGE else self


@dataclass(frozen=True)
class ScanConfig:
    radius: float = 0.3
    min_points: int = 10
    window_start_hour: int = 18  # previous day
    window_end_hour: int = 6  # next day
    merge_overlap: float = 0.5

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if self.min_points < 1:
            raise ValueError("min_points must be >= 1")


@dataclass
class ConvectiveEvent:
    id: int
    strikes: StrikeSet
    strike_index: np.ndarray
    t_start: int
    t_end: int
    count: int
    event_class: EventClass
    T_ch: int | None = None
    v1: float = float("nan")
    v2: float = float("nan")
    v: float = float("nan")
    area_km2: float = float("nan")
    centroid: tuple[float, float] = (float("nan"), float("nan"))


# ---------------------------------------------------------------------------


def standardize(strikes: StrikeSet):
    """Center and scale (x, y, t) by their sample mean and sd.

    Returns ``(points, mean, sd)`` where ``points`` has shape ``(n, 3)``.
    """
    if len(strikes) < 2:
        raise ValueError("need at least 2 strikes to standardize")
    # offset epoch seconds before going to float to keep full precision
    t_ref = int(strikes.t.min())
    raw = np.column_stack([strikes.x, strikes.y, (strikes.t - t_ref).astype(float)])
    mean = raw.mean(axis=0)
    sd = raw.std(axis=0, ddof=1)
    for axis, s in zip("xyt", sd):
        if not s > 0:
            name = "time" if axis == "t" else axis
            raise ValueError(f"degenerate coordinate: sd of {name} axis is 0")
    pts = (raw - mean) / sd
    mean[2] += t_ref
    return pts, mean, sd


def dbscan(points, radius: float, min_points: int) -> np.ndarray:
    """Density clustering with closed Euclidean balls and self-inclusive counts.

    Returns an integer label per point, ``-1`` for noise.  Clusters are
    numbered by their lowest-indexed core point.  A border point (non-core
    but within ``radius`` of a core point) joins the cluster of its nearest
    core point, which keeps the partition independent of input order.
    """
    pts = np.asarray(points, dtype=float)
    n = pts.shape[0]
    labels = np.full(n, NOISE, dtype=np.int64)
    if n == 0:
        return labels
    tree = cKDTree(pts)
    hood = tree.query_ball_point(pts, r=radius, return_sorted=True)
    core = np.array([len(h) >= min_points for h in hood])

    cluster = 0
    for seed in np.flatnonzero(core):
        if labels[seed] != NOISE:
            continue
        labels[seed] = cluster
        stack = [seed]
        while stack:
            p = stack.pop()
            for q in hood[p]:
                if core[q] and labels[q] == NOISE:
                    labels[q] = cluster
                    stack.append(q)
        cluster += 1

    for p in np.flatnonzero(~core):
        cores = [q for q in hood[p] if core[q]]
        if cores:
            d = np.linalg.norm(pts[cores] - pts[p], axis=1)
            labels[p] = labels[cores[int(np.argmin(d))]]
    return labels


def _utc_day(seconds: int):
    return datetime.fromtimestamp(int(seconds), tz=timezone.utc).date()


def _day_start(day) -> int:
    return int(datetime(day.year, day.month, day.day, tzinfo=timezone.utc).timestamp())


def window_bounds(day, config: ScanConfig = ScanConfig()) -> tuple[int, int]:
    """[start, end) of the analysis window attached to calendar ``day``."""
    start = _day_start(day) - (24 - config.window_start_hour) * 3600
    end = _day_start(day) + (24 + config.window_end_hour) * 3600
    return start, end


def daily_windows(strikes: StrikeSet, config: ScanConfig = ScanConfig(), days=None) -> dict:
    """Map each UTC day to the strike indices falling in its window.

    Windows run from ``window_start_hour`` of the previous day to
    ``window_end_hour`` of the next, so a strike can sit in two windows.
    Without explicit ``days`` every day whose window could hold a strike is
    returned, empty ones included.
    """
    if days is None:
        if len(strikes) == 0:
            return {}
        first = _utc_day(strikes.t.min()) - timedelta(days=1)
        last = _utc_day(strikes.t.max()) + timedelta(days=1)
        days = [first + timedelta(days=k) for k in range((last - first).days + 1)]
    out = {}
    for day in days:
        lo, hi = window_bounds(day, config)
        out[day] = np.flatnonzero((strikes.t >= lo) & (strikes.t < hi))
    return out


def classify_event(count: int) -> EventClass:
    if count < 0:
        raise ValueError("count must be non-negative")
    small, medium, large = CLASS_BREAKS
    if count <= small:
        return EventClass.SMALL
    if count <= medium:
        return EventClass.MEDIUM
    if count <= large:
        return EventClass.LARGE
    return EventClass.VERY_LARGE


def interval_counts(times, t_start: int, t_end: int, dt_min: int) -> np.ndarray:
    dt = dt_min * 60
    n = int((t_end - t_start) // dt) + 1
    idx = (np.asarray(times, dtype=np.int64) - t_start) // dt
    return np.bincount(idx, minlength=n).astype(float)


def smoothed_peak(counts) -> int:
    """Index of the largest centred 3-term moving average; earliest on ties."""
    c = np.asarray(counts, dtype=float)
    if c.size < 3:
        raise ValueError("need at least 3 intervals of activity")
    ma = np.convolve(c, np.ones(3) / 3.0, mode="valid")
    return int(np.argmax(ma)) + 1


def detect_phase(strikes: StrikeSet, dt_min: int) -> int:
    """End of the charging phase: start of the smoothed-peak interval."""
    if len(strikes) == 0:
        raise ValueError("event has no strikes")
    t_start, t_end = int(strikes.t.min()), int(strikes.t.max())
    counts = interval_counts(strikes.t, t_start, t_end, dt_min)
    if counts.size < 3:
        raise ValueError(f"event spans {counts.size} interval(s); phase detection needs 3")
    return t_start + smoothed_peak(counts) * dt_min * 60


def _anchor_centroid(strikes: StrikeSet, at: int, halfwidth: int):
    near = np.abs(strikes.t - at) <= halfwidth
    if not np.any(near):
        raise ValueError(f"no strikes within {halfwidth} s of t={at}")
    return np.array([strikes.x[near].mean(), strikes.y[near].mean()])


def event_velocity(strikes: StrikeSet, T_ch: int, halfwidth: int = 60):
    """(v1, v2, v) in m/s from strike centroids near start, T_ch and end."""
    t_start, t_end = int(strikes.t.min()), int(strikes.t.max())
    if not t_start < T_ch < t_end:
        raise ValueError("T_ch must lie strictly inside the event span")
    start = _anchor_centroid(strikes, t_start, halfwidth)
    peak = _anchor_centroid(strikes, T_ch, halfwidth)
    end = _anchor_centroid(strikes, t_end, halfwidth)
    v1 = float(np.linalg.norm(peak - start) / (T_ch - t_start))
    v2 = float(np.linalg.norm(end - peak) / (t_end - T_ch))
    v = float(np.linalg.norm(end - start) / (t_end - t_start))
    return v1, v2, v


def event_area(strikes: StrikeSet, grid: Grid) -> float:
    cells = np.unique(grid.locate(strikes.x, strikes.y))
    return float(cells.size * grid.cell_area_km2)


# ---------------------------------------------------------------------------


def cluster_window(strikes: StrikeSet, config: ScanConfig) -> list[np.ndarray]:
    """Clusters (as local index arrays) found in one window."""
    if len(strikes) < max(2, config.min_points):
        return []
    try:
        pts, _, _ = standardize(strikes)
    except ValueError:
        return []
    labels = dbscan(pts, config.radius, config.min_points)
    return [np.flatnonzero(labels == k) for k in range(labels.max() + 1)]


def _merge(groups: list[np.ndarray], overlap: float) -> list[np.ndarray]:
    merged: list[set] = []
    for g in groups:
        g = set(int(i) for i in g)
        for m in merged:
            if len(m & g) >= overlap * min(len(m), len(g)):
                m |= g
                break
        else:
            merged.append(g)
    return [np.array(sorted(m), dtype=np.int64) for m in merged]


def detect_events(strikes: StrikeSet, grid: Grid | None = None, config: ScanConfig = ScanConfig(),
                  dt_min: int = 15) -> tuple[list[ConvectiveEvent], np.ndarray]:
    """Run the daily-window scan over an archive.

    Returns the events (ordered by start time) and a per-strike label array
    holding the event id or ``-1``.
    """
    groups = []
    for day, idx in sorted(daily_windows(strikes, config).items()):
        for local in cluster_window(strikes.subset(idx), config):
            groups.append(idx[local])
    groups = [g for g in _merge(groups, config.merge_overlap) if g.size >= config.min_points]
    groups.sort(key=lambda g: (int(strikes.t[g].min()), -g.size, int(g[0])))

    labels = np.full(len(strikes), NOISE, dtype=np.int64)
    events = []
    for eid, g in enumerate(groups):
        sub = strikes.subset(g)
        ev = summarize_event(eid, sub, g, grid, dt_min)
        events.append(ev)
        free = labels[g] == NOISE
        labels[g[free]] = eid
    return events, labels


def summarize_event(eid: int, sub: StrikeSet, index: np.ndarray, grid: Grid | None,
                    dt_min: int) -> ConvectiveEvent:
    """Derived diagnostics for one cluster.  Undefined quantities stay NaN/None."""
    ev = ConvectiveEvent(
        id=eid,
        strikes=sub,
        strike_index=np.asarray(index),
        t_start=int(sub.t.min()),
        t_end=int(sub.t.max()),
        count=len(sub),
        event_class=classify_event(len(sub)),
        centroid=(float(sub.x.mean()), float(sub.y.mean())),
    )
    try:
        ev.T_ch = detect_phase(sub, dt_min)
        ev.v1, ev.v2, ev.v = event_velocity(sub, ev.T_ch)
    except ValueError:
        pass
    if grid is not None:
        on = grid.contains(sub.x, sub.y)
        if np.any(on):
            ev.area_km2 = event_area(sub.subset(on), grid)
    return ev


def radius_sweep(strikes: StrikeSet, radii: Sequence[float] = (0.1, 0.2, 0.3, 0.4),
                 min_points: int = 10) -> dict[float, list[int]]:
    """Event sizes found at each radius, for judging fragmentation vs. merging."""
    out = {}
    for r in radii:
        events, _ = detect_events(strikes, None, ScanConfig(radius=r, min_points=min_points))
        out[r] = sorted((e.count for e in events), reverse=True)
    return out
