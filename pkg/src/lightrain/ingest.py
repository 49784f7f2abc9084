"""Observation sources, the reference lattice and (time, cell) alignment.

All instants are integer seconds since the Unix epoch (UTC).  Every field
downstream uses the same interval convention: interval ``i`` covers
``[t0 + i*dt, t0 + (i+1)*dt)``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np


class ParseError(ValueError):
    """Malformed input row; carries the 1-based file line number."""

    def __init__(self, path, line: int, message: str):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}: line {line}: {message}")


def parse_instant(text: str) -> int:
    """ISO-8601 timestamp to integer epoch seconds; naive stamps are UTC."""
    s = text.strip()
    if s.endswith("Z") or s.endswith("z"):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def format_instant(seconds: int) -> str:
    return datetime.fromtimestamp(int(seconds), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


# ---------------------------------------------------------------------------
# Records


class LightningStrike(NamedTuple):
    timestamp: int
    x: float
    y: float


class GaugeReading(NamedTuple):
    station_id: str
    x: float
    y: float
    timestamp: int
    accum_mm: float
    interval_min: int


class SatelliteCellHour(NamedTuple):
    cell: tuple[int, int]
    hour_start: int
    rain_mm: float


@dataclass(frozen=True)
class StrikeSet:
    """Column-oriented collection of strikes."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=np.int64).reshape(-1)
        x = np.asarray(self.x, dtype=float).reshape(-1)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if not (t.shape == x.shape == y.shape):
            raise ValueError("t, x, y must have equal lengths")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("strike coordinates must be finite")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @classmethod
    def from_strikes(cls, strikes: Iterable[LightningStrike]) -> "StrikeSet":
        rows = list(strikes)
        if not rows:
            return cls.empty()
        t, x, y = zip(*rows)
        return cls(np.array(t), np.array(x), np.array(y))

    @classmethod
    def empty(cls) -> "StrikeSet":
        return cls(np.zeros(0, np.int64), np.zeros(0), np.zeros(0))

    def __len__(self) -> int:
        return self.t.shape[0]

    def __iter__(self) -> Iterator[LightningStrike]:
        for t, x, y in zip(self.t, self.x, self.y):
            yield LightningStrike(int(t), float(x), float(y))

    def subset(self, idx) -> "StrikeSet":
        return StrikeSet(self.t[idx], self.x[idx], self.y[idx])


# ---------------------------------------------------------------------------
# Grid and fields


@dataclass(frozen=True)
class Grid:
    """Regular lattice of square cells.  Rows run along y, columns along x.

    Flat cell index is ``row * n2 + col``.
    """

    origin_x: float
    origin_y: float
    n1: int
    n2: int
    cell_size: float = 10_000.0

    def __post_init__(self):
        if self.n1 < 1 or self.n2 < 1:
            raise ValueError("grid needs n1, n2 >= 1")
        if not self.cell_size > 0:
            raise ValueError("cell_size must be positive")

    @property
    def n_cells(self) -> int:
        return self.n1 * self.n2

    @property
    def cell_area_m2(self) -> float:
        return self.cell_size**2

    @property
    def cell_area_km2(self) -> float:
        return self.cell_area_m2 / 1e6

    def contains(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return (
            (x >= self.origin_x)
            & (x < self.origin_x + self.n2 * self.cell_size)
            & (y >= self.origin_y)
            & (y < self.origin_y + self.n1 * self.cell_size)
        )

    def locate(self, x, y) -> np.ndarray:
        """Flat cell index for each point; raises if any point is off-grid."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        inside = self.contains(x, y)
        if not np.all(inside):
            raise ValueError(f"{int(np.size(inside) - np.count_nonzero(inside))} point(s) outside the grid")
        col = np.floor((x - self.origin_x) / self.cell_size).astype(np.int64)
        row = np.floor((y - self.origin_y) / self.cell_size).astype(np.int64)
        return row * self.n2 + col

    def cell_of(self, x: float, y: float) -> int:
        return int(self.locate(np.array([x]), np.array([y]))[0])

    def rowcol(self, cell) -> tuple[np.ndarray, np.ndarray]:
        cell = np.asarray(cell)
        return cell // self.n2, cell % self.n2

    def flat(self, row, col):
        row = np.asarray(row)
        col = np.asarray(col)
        if np.any((row < 0) | (row >= self.n1) | (col < 0) | (col >= self.n2)):
            raise ValueError("row/col outside the grid")
        return row * self.n2 + col

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        rows, cols = self.rowcol(np.arange(self.n_cells))
        cx = self.origin_x + (cols + 0.5) * self.cell_size
        cy = self.origin_y + (rows + 0.5) * self.cell_size
        return cx, cy

    def neighbors(self, order: int = 2) -> list[np.ndarray]:
        """Neighbour lists per cell.  Order 1: 4 edge cells; order 2: all 8."""
        out = []
        if order == 2:
            offsets = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0)]
        elif order == 1:
            offsets = [(-1, 0), (1, 0), (0, -1), (0, 1)]
        else:
            raise ValueError("order must be 1 or 2")
        for cell in range(self.n_cells):
            r, c = divmod(cell, self.n2)
            nb = [
                (r + dr) * self.n2 + (c + dc)
                for dr, dc in offsets
                if 0 <= r + dr < self.n1 and 0 <= c + dc < self.n2
            ]
            out.append(np.array(nb, dtype=np.int64))
        return out

    def adjacency(self, order: int = 2) -> np.ndarray:
        """Dense 0/1 adjacency over all grid cells."""
        B = np.zeros((self.n_cells, self.n_cells))
        for i, nb in enumerate(self.neighbors(order)):
            B[i, nb] = 1.0
        return B


@dataclass
class SpaceTimeField:
    """Dense (interval x cell) array; NaN marks a missing value."""

    t0: int
    dt_min: int
    values: np.ndarray
    dropped: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("field values must be 2-D (T, n_cells)")

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def n_cells(self) -> int:
        return self.values.shape[1]

    @property
    def dt_seconds(self) -> int:
        return int(self.dt_min) * 60

    def interval_starts(self) -> np.ndarray:
        return self.t0 + np.arange(self.T, dtype=np.int64) * self.dt_seconds

    def missing(self) -> np.ndarray:
        return np.isnan(self.values)

    def to_hourly(self) -> "SpaceTimeField":
        """Sum consecutive intervals into hours; any missing part -> missing."""
        per_hour = 60 // self.dt_min
        if 60 % self.dt_min:
            raise ValueError("dt_min must divide 60")
        n_hours = self.T // per_hour
        v = self.values[: n_hours * per_hour].reshape(n_hours, per_hour, self.n_cells)
        return SpaceTimeField(self.t0, 60, v.sum(axis=1))


def _check_window(dt_min: int, T: int):
    if T <= 0:
        raise ValueError("T must be positive")
    if dt_min <= 0:
        raise ValueError("dt_min must be positive")


# ---------------------------------------------------------------------------
# Loaders


def _read_rows(path, header: Sequence[str]):
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            head = next(reader)
        except StopIteration:
            raise ParseError(path, 1, "empty file, expected a header") from None
        if [h.strip() for h in head] != list(header):
            raise ParseError(path, 1, f"expected header {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(path, lineno, f"expected {len(header)} fields, got {len(row)}")
            yield lineno, [c.strip() for c in row]


LIGHTNING_HEADER = ("timestamp", "x_m", "y_m")
GAUGE_HEADER = ("station_id", "x_m", "y_m", "timestamp", "accum_mm", "interval_min")
SATELLITE_HEADER = ("row", "col", "hour_start", "rain_mm")


def load_lightning(path) -> StrikeSet:
    t, x, y = [], [], []
    for lineno, (ts, xs, ys) in _read_rows(path, LIGHTNING_HEADER):
        try:
            t.append(parse_instant(ts))
            xv, yv = float(xs), float(ys)
        except ValueError as exc:
            raise ParseError(path, lineno, str(exc)) from None
        if not (np.isfinite(xv) and np.isfinite(yv)):
            raise ParseError(path, lineno, "non-finite coordinate")
        x.append(xv)
        y.append(yv)
    if not t:
        return StrikeSet.empty()
    return StrikeSet(np.array(t), np.array(x), np.array(y))


def load_gauges(path) -> list[GaugeReading]:
    out = []
    for lineno, (sid, xs, ys, ts, acc, iv) in _read_rows(path, GAUGE_HEADER):
        try:
            rec = GaugeReading(sid, float(xs), float(ys), parse_instant(ts), float(acc), int(iv))
        except ValueError as exc:
            raise ParseError(path, lineno, str(exc)) from None
        if rec.accum_mm < 0 or not np.isfinite(rec.accum_mm):
            raise ParseError(path, lineno, "accum_mm must be a finite value >= 0")
        if rec.interval_min not in (15, 30):
            raise ParseError(path, lineno, "interval_min must be 15 or 30")
        out.append(rec)
    return out


def load_satellite(path) -> list[SatelliteCellHour]:
    out = []
    for lineno, (r, c, hs, mm) in _read_rows(path, SATELLITE_HEADER):
        try:
            rec = SatelliteCellHour((int(r), int(c)), parse_instant(hs), float(mm))
        except ValueError as exc:
            raise ParseError(path, lineno, str(exc)) from None
        if rec.rain_mm < 0 or not np.isfinite(rec.rain_mm):
            raise ParseError(path, lineno, "rain_mm must be a finite value >= 0")
        out.append(rec)
    return out


# ---------------------------------------------------------------------------
# Alignment


def filter_gauges(readings: Sequence[GaugeReading], max_missing_frac: float,
                  t0: int, T: int, dt_min: int) -> list[GaugeReading]:
    """Drop whole stations whose missing fraction over the window exceeds the threshold.

    The expected record count is the number of intervals in the window.
    """
    if not 0.0 <= max_missing_frac <= 1.0:
        raise ValueError("max_missing_frac must lie in [0, 1]")
    _check_window(dt_min, T)
    dt = dt_min * 60
    stamps: dict[str, set[int]] = {}
    for r in readings:
        # stamp t covers (t - dt, t]; index of the interval it lands in
        i = (r.timestamp - dt - t0) // dt
        if 0 <= i < T:
            stamps.setdefault(r.station_id, set()).add(int(i))
        else:
            stamps.setdefault(r.station_id, set())
    keep = {sid for sid, seen in stamps.items() if (T - len(seen)) / T <= max_missing_frac}
    return [r for r in readings if r.station_id in keep]


def bin_lightning(strikes: StrikeSet, grid: Grid, t0: int, dt_min: int, T: int) -> SpaceTimeField:
    """Count strikes per (interval, cell); strikes outside are dropped and counted."""
    _check_window(dt_min, T)
    dt = dt_min * 60
    idx = (strikes.t - t0) // dt
    ok = (idx >= 0) & (idx < T) & grid.contains(strikes.x, strikes.y)
    counts = np.zeros((T, grid.n_cells))
    if np.any(ok):
        cells = grid.locate(strikes.x[ok], strikes.y[ok])
        np.add.at(counts, (idx[ok], cells), 1.0)
    return SpaceTimeField(t0, dt_min, counts, dropped=int(len(strikes) - np.count_nonzero(ok)))


def aggregate_gauges(readings: Sequence[GaugeReading], grid: Grid, t0: int, dt_min: int,
                     T: int, stamp: str = "end") -> SpaceTimeField:
    """Median of co-located gauges per (interval, cell).

    With ``stamp="end"`` (gauge archives) a reading stamped ``t`` covers
    ``(t - dt, t]`` and is stored at the interval starting at ``t - dt``.
    ``stamp="start"`` treats stamps like lightning/satellite records.
    Cells without any reading stay missing.
    """
    if stamp not in ("end", "start"):
        raise ValueError("stamp must be 'end' or 'start'")
    _check_window(dt_min, T)
    kinds = {r.interval_min for r in readings}
    if len(kinds) > 1:
        raise ValueError(f"mixed interval_min in one run: {sorted(kinds)}")
    if kinds and kinds != {dt_min}:
        raise ValueError(f"readings are {kinds.pop()}-minute but the window is {dt_min}-minute")
    dt = dt_min * 60
    buckets: dict[tuple[int, int], list[float]] = {}
    for r in readings:
        if not grid.contains(r.x, r.y):
            continue
        i = (r.timestamp - (dt if stamp == "end" else 0) - t0) // dt
        if not 0 <= i < T:
            continue
        buckets.setdefault((int(i), grid.cell_of(r.x, r.y)), []).append(r.accum_mm)
    values = np.full((T, grid.n_cells), np.nan)
    for (i, cell), vals in buckets.items():
        values[i, cell] = float(np.median(vals))
    return SpaceTimeField(t0, dt_min, values)


def align_satellite(records: Sequence[SatelliteCellHour], grid: Grid, t0: int,
                    T_hours: int) -> SpaceTimeField:
    if T_hours <= 0:
        raise ValueError("T_hours must be positive")
    bad = sorted({r.cell for r in records
                  if not (0 <= r.cell[0] < grid.n1 and 0 <= r.cell[1] < grid.n2)})
    if bad:
        raise ValueError(f"satellite cells not on the grid: {bad}")
    values = np.full((T_hours, grid.n_cells), np.nan)
    seen = set()
    for r in records:
        h = (r.hour_start - t0) // 3600
        if not 0 <= h < T_hours:
            continue
        cell = int(grid.flat(*r.cell))
        key = (int(h), cell)
        if key in seen:
            raise ValueError(f"duplicate satellite record for cell {r.cell} hour {format_instant(r.hour_start)}")
        seen.add(key)
        values[h, cell] = r.rain_mm
    return SpaceTimeField(t0, 60, values)
