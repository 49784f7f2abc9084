"""Rainfall-lightning ratios and the deterministic lightning-to-rain reconstruction.

Ratios are in 10^3 m^3 of rain per flash.  A rain depth of ``r`` mm over a
cell of area ``A`` m^2 is ``r * A * 1e-6`` in those units.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ingest import Grid, SpaceTimeField, StrikeSet, bin_lightning
from .scan import MIN_STRIKES_FOR_RLR, ConvectiveEvent, EventClass
from .verify import RAIN_THRESHOLD_MM, contingency, rmse, scores

C_STAR = 1e6
PRODUCT_FLOOR = 1e-6


@dataclass(frozen=True)
class RlrEstimate:
    event_class: str
    median: float
    mean: float
    sd: float
    n_events: int
    f1: float
    f2: float


def mm_to_volume(rain_mm, area_m2: float):
    """Rain depth over an area -> volume in 10^3 m^3."""
    return np.asarray(rain_mm, dtype=float) * area_m2 * 1e-6


def event_support(event: ConvectiveEvent, grid: Grid, satellite: SpaceTimeField):
    """Cells hit by the event and satellite hours overlapping its span."""
    s = event.strikes
    on = grid.contains(s.x, s.y)
    cells = np.unique(grid.locate(s.x[on], s.y[on]))
    starts = satellite.interval_starts()
    hours = np.flatnonzero((starts <= event.t_end) & (starts + 3600 > event.t_start))
    return cells, hours


def rlr_single(event: ConvectiveEvent, satellite: SpaceTimeField, grid: Grid) -> float:
    """Rain volume over the event's cells and hours divided by its flash count."""
    if satellite.dt_min != 60:
        raise ValueError("satellite field must be hourly")
    cells, hours = event_support(event, grid, satellite)
    s = event.strikes
    on = grid.contains(s.x, s.y)
    h_idx = (s.t[on] - satellite.t0) // 3600
    n_flash = int(np.sum((h_idx >= 0) & (h_idx < satellite.T)))
    if n_flash == 0:
        raise ValueError(f"event {event.id}: no lightning on the satellite support")
    rain = np.nansum(satellite.values[np.ix_(hours, cells)])
    return float(mm_to_volume(rain, grid.cell_area_m2) / n_flash)


def correction_factors(gauge_hourly: SpaceTimeField, satellite: SpaceTimeField) -> tuple[float, float]:
    """Satellite bias corrections against gauges.

    f1 is the mean gauge-minus-satellite difference over paired records (mm);
    f2 = (N_sat / N_gauge) * (zeros_gauge / zeros_sat).
    """
    g = np.asarray(gauge_hourly.values, dtype=float)
    s = np.asarray(satellite.values, dtype=float)
    if g.shape != s.shape:
        raise ValueError("gauge and satellite fields must share a shape")
    paired = ~(np.isnan(g) | np.isnan(s))
    if not np.any(paired):
        raise ValueError("no paired gauge/satellite records")
    f1 = float(np.mean(g[paired] - s[paired]))
    n_sat = np.count_nonzero(~np.isnan(s))
    n_stat = np.count_nonzero(~np.isnan(g))
    zero_sat = np.count_nonzero(s == 0)
    zero_stat = np.count_nonzero(g == 0)
    if zero_sat == 0:
        raise ValueError("satellite field has no zero records; f2 undefined")
    f2 = (n_sat / n_stat) * (zero_stat / zero_sat)
    return f1, float(f2)


def corrected_product(f1: float, f2: float, floor: float = PRODUCT_FLOOR) -> float:
    # f1 is a mean difference and can be <= 0; the ratio must stay positive
    return max(f1 * f2, floor)


def _summary(name: str, z: np.ndarray, f1: float, f2: float) -> RlrEstimate:
    return RlrEstimate(
        event_class=name,
        median=float(np.median(z)),
        mean=float(np.mean(z)),
        sd=float(np.std(z, ddof=1)) if z.size > 1 else 0.0,
        n_events=int(z.size),
        f1=f1,
        f2=f2,
    )


def rlr_by_class(events: Sequence[ConvectiveEvent], satellite: SpaceTimeField, grid: Grid,
                 f1: float, f2: float, min_strikes: int = MIN_STRIKES_FOR_RLR,
                 floor: float = PRODUCT_FLOOR, include_entire: bool = False) -> dict[str, RlrEstimate]:
    """Corrected per-class ratios (Small, Medium, Large with VeryLarge pooled).

    Classes without qualifying events are absent from the result.
    """
    k = corrected_product(f1, f2, floor)
    per_class: dict[EventClass, list[float]] = {}
    for ev in events:
        if ev.count < min_strikes:
            continue
        try:
            z = rlr_single(ev, satellite, grid)
        except ValueError:
            continue
        per_class.setdefault(ev.event_class.merged(), []).append(k * z)
    out = {}
    for cls in (EventClass.SMALL, EventClass.MEDIUM, EventClass.LARGE):
        if cls in per_class:
            out[cls.value] = _summary(cls.value, np.array(per_class[cls]), f1, f2)
    if include_entire and per_class:
        allz = np.concatenate([np.array(v) for v in per_class.values()])
        out["Entire"] = _summary("Entire", allz, f1, f2)
    return out


# ---------------------------------------------------------------------------
# Reconstruction


def neighbor_sum(values: np.ndarray, grid: Grid, order: int = 2) -> np.ndarray:
    """Sum over each cell's neighbours, for a (T, n_cells) array."""
    v = np.asarray(values, dtype=float)
    out = np.zeros_like(v)
    for p, nb in enumerate(grid.neighbors(order)):
        if nb.size:
            out[:, p] = v[:, nb].sum(axis=1)
    return out


def _disk_cell_fractions(x: float, y: float, grid: Grid, radius: float, resolution: int):
    """Share of a disk falling in each grid cell, by a fine point lattice.

    Lattice points sit at sub-pixel centres, so with an even ``resolution``
    none falls on the disk centre's row/column and cell edges through the
    centre split the disk symmetrically.
    """
    h = 2.0 * radius / resolution
    u = -radius + (np.arange(resolution) + 0.5) * h
    dx, dy = np.meshgrid(u, u)
    inside = dx**2 + dy**2 <= radius**2
    px, py = x + dx[inside], y + dy[inside]
    total = px.size
    on = grid.contains(px, py)
    cells = grid.locate(px[on], py[on])
    frac = np.bincount(cells, minlength=grid.n_cells) / total
    return frac


def tapia_reconstruct(strikes: StrikeSet, Z: float, grid: Grid, t0: int, dt_min: int, T: int,
                      mode: str = "cell", c_star: float = C_STAR, radius_m: float = 5000.0,
                      half_window_s: int = 300, resolution: int = 200) -> SpaceTimeField:
    """Rain depth (mm) per (interval, cell) predicted from flashes.

    ``mode="cell"`` is the gridded form: each flash adds its ratio to its own
    cell and 1/8 of it to each of the 8 surrounding cells, within its own
    interval.  ``mode="uniform"`` spreads each flash uniformly over a disk of
    ``radius_m`` and a ``+-half_window_s`` time window; its volume is split
    among cells and intervals by overlap, so a flash fully inside the window
    deposits a total of ``c_star / A_p * Z`` summed over the field.
    """
    if not Z > 0:
        raise ValueError("Z must be positive")
    scale = c_star / grid.cell_area_m2 * Z
    if mode == "cell":
        L = bin_lightning(strikes, grid, t0, dt_min, T).values
        return SpaceTimeField(t0, dt_min, scale * (L + neighbor_sum(L, grid) / 8.0))
    if mode != "uniform":
        raise ValueError("mode must be 'cell' or 'uniform'")
    dt = dt_min * 60
    out = np.zeros((T, grid.n_cells))
    starts = t0 + np.arange(T) * dt
    width = 2.0 * half_window_s
    for t, x, y in zip(strikes.t, strikes.x, strikes.y):
        lo, hi = t - half_window_s, t + half_window_s
        overlap = np.clip(np.minimum(starts + dt, hi) - np.maximum(starts, lo), 0, None) / width
        if not np.any(overlap > 0):
            continue
        frac = _disk_cell_fractions(x, y, grid, radius_m, resolution)
        out += scale * np.outer(overlap, frac)
    return SpaceTimeField(t0, dt_min, out)


def evaluate_reconstruction(recon: SpaceTimeField, gauge: SpaceTimeField,
                            threshold: float = RAIN_THRESHOLD_MM) -> dict:
    """RMSE and rain detection scores of a reconstruction against gauges."""
    pred = np.asarray(recon.values, dtype=float)
    obs = np.asarray(gauge.values, dtype=float)
    s = scores(contingency(pred, obs, threshold))
    ok = ~(np.isnan(pred) | np.isnan(obs))
    return {
        "rmse_mm": rmse(pred, obs),
        "pod": s["pod"],
        "pofd": s["pofd"],
        "n_occurrences": int(np.count_nonzero(ok)),
    }
