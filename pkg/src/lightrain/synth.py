"""Synthetic storms with known ground truth.

A single storm cell drifts across the grid; its flash rate rises to a peak
and decays.  Rain is drawn from the same model the sampler fits: an M1
lightning mean plus AR(1) temporal and CAR spatial effects and Gaussian
noise on the log scale, then observed by gauges (15/30-minute, stamped at
interval end) and by a biased hourly satellite product.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, asdict, field
from pathlib import Path

import numpy as np

from .bayes.car import car_precision
from .ingest import (GAUGE_HEADER, LIGHTNING_HEADER, SATELLITE_HEADER, GaugeReading, Grid,
                     SatelliteCellHour, StrikeSet, bin_lightning, format_instant, parse_instant)
from .meanfield import MeanContext, MeanKind, MeanVariant, mean_field
from .rlr import C_STAR
from .scan import detect_phase

LARGE_CLASS_Z = 24.1  # 10^3 m^3 per flash, typical Large-event ratio


@dataclass(frozen=True)
class TrueParams:
    alpha: float = 0.5
    prec_eta: float = 10.0
    prec_s: float = 20.0
    rho_s: float = 0.05
    prec_y: float = 4.0


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 7
    n1: int = 10
    n2: int = 10
    cell_size: float = 10000.0
    origin_x: float = 500000.0
    origin_y: float = 4500000.0
    t0: str = "2004-08-05T14:00:00Z"
    dt_min: int = 15
    T: int = 32
    n_storm: int = 1500
    n_background: int = 60
    peak_frac: float = 0.35
    spread_m: float = 7000.0
    Z: float = LARGE_CLASS_Z
    params: TrueParams = field(default_factory=TrueParams)
    gauge_fraction: float = 0.9
    gauge_missing: float = 0.02
    satellite_bias: float = 0.8
    satellite_floor_mm: float = 0.1

    @property
    def t0_seconds(self) -> int:
        return parse_instant(self.t0)

    def grid(self) -> Grid:
        return Grid(self.origin_x, self.origin_y, self.n1, self.n2, self.cell_size)


@dataclass
class SynthDataset:
    config: SynthConfig
    strikes: StrikeSet
    gauges: list
    satellite: list
    truth: dict


def simulate_ar1(rng: np.random.Generator, T: int, alpha: float, prec_eta: float) -> np.ndarray:
    eta = rng.standard_normal(T) / np.sqrt(prec_eta)
    out = np.empty(T)
    prev = 0.0
    for t in range(T):
        prev = alpha * prev + eta[t]
        out[t] = prev
    return out


def simulate_car(rng: np.random.Generator, B, rho_s: float, prec_s: float) -> np.ndarray:
    Q = car_precision(B, rho_s, prec_s).toarray()
    L = np.linalg.cholesky(Q)
    # x = L^-T z has covariance Q^-1
    return np.linalg.solve(L.T, rng.standard_normal(Q.shape[0]))


def simulate_latent(rng: np.random.Generator, mu, B, params: TrueParams):
    """(Y, Tt, Sp) on the log scale around the mean surface ``mu``."""
    mu = np.asarray(mu, dtype=float)
    T, n = mu.shape
    Tt = simulate_ar1(rng, T, params.alpha, params.prec_eta)
    Sp = simulate_car(rng, B, params.rho_s, params.prec_s)
    Y = mu + Tt[:, None] + Sp[None, :] + rng.standard_normal((T, n)) / np.sqrt(params.prec_y)
    return Y, Tt, Sp


def _storm_strikes(rng, cfg: SynthConfig) -> StrikeSet:
    t0 = cfg.t0_seconds
    span = cfg.T * cfg.dt_min * 60
    # triangular flash-rate profile peaking at peak_frac of the span
    u = rng.triangular(0.0, cfg.peak_frac, 1.0, size=cfg.n_storm)
    t = t0 + np.floor(u * (span - 1)).astype(np.int64)
    w = cfg.n2 * cfg.cell_size
    h = cfg.n1 * cfg.cell_size
    start = np.array([cfg.origin_x + 0.25 * w, cfg.origin_y + 0.3 * h])
    end = np.array([cfg.origin_x + 0.75 * w, cfg.origin_y + 0.7 * h])
    centre = start + np.outer(u, end - start)
    xy = centre + rng.standard_normal((cfg.n_storm, 2)) * cfg.spread_m
    bt = t0 + rng.integers(0, span, size=cfg.n_background)
    bx = cfg.origin_x + rng.uniform(0, w, size=cfg.n_background)
    by = cfg.origin_y + rng.uniform(0, h, size=cfg.n_background)
    tt = np.concatenate([t, bt])
    xx = np.round(np.concatenate([xy[:, 0], bx]), 1)
    yy = np.round(np.concatenate([xy[:, 1], by]), 1)
    lo_x, hi_x = cfg.origin_x, cfg.origin_x + w - 0.1
    lo_y, hi_y = cfg.origin_y, cfg.origin_y + h - 0.1
    xx = np.clip(xx, lo_x, hi_x)
    yy = np.clip(yy, lo_y, hi_y)
    order = np.lexsort((yy, xx, tt))
    return StrikeSet(t=tt[order], x=xx[order], y=yy[order])


def synth_storm(cfg: SynthConfig = SynthConfig()) -> SynthDataset:
    root = np.random.SeedSequence(cfg.seed)
    s_light, s_rain, s_gauge = (np.random.default_rng(s) for s in root.spawn(3))
    grid = cfg.grid()
    t0 = cfg.t0_seconds
    dt = cfg.dt_min * 60
    strikes = _storm_strikes(s_light, cfg)

    L = bin_lightning(strikes, grid, t0, cfg.dt_min, cfg.T).values
    T_ch = detect_phase(strikes, cfg.dt_min)
    T_ch_index = int(min(max((T_ch - t0) // dt, 0), cfg.T - 1))
    C = C_STAR / grid.cell_area_m2 * cfg.Z
    ctx = MeanContext(L=L, grid=grid, C=C, T_ch_index=T_ch_index, dt_min=cfg.dt_min)
    mu = mean_field(MeanVariant(MeanKind.M1), ctx)
    B = grid.adjacency(2)
    Y, Tt, Sp = simulate_latent(s_rain, mu, B, cfg.params)
    rain = np.maximum(np.expm1(Y), 0.0)

    # gauges: one station in most cells, plus a flaky extra one that the
    # missing-record filter should drop
    n = grid.n_cells
    gauged = np.sort(s_gauge.choice(n, size=max(2, int(round(cfg.gauge_fraction * n))), replace=False))
    rows, cols = grid.rowcol(gauged)
    gauges: list[GaugeReading] = []
    stations = [(f"S{p:03d}", p, r, c) for p, r, c in zip(gauged, rows, cols)]
    stations.append(("X999", int(gauged[0]), int(rows[0]), int(cols[0])))
    for sid, p, r, c in stations:
        gx = round(cfg.origin_x + (c + s_gauge.uniform(0.1, 0.9)) * cfg.cell_size, 1)
        gy = round(cfg.origin_y + (r + s_gauge.uniform(0.1, 0.9)) * cfg.cell_size, 1)
        drop = cfg.gauge_missing if sid != "X999" else 0.3
        for i in range(cfg.T):
            if s_gauge.random() < drop:
                continue
            value = rain[i, p] if sid != "X999" else rain[i, p] * 3.0
            gauges.append(GaugeReading(sid, gx, gy, t0 + (i + 1) * dt, round(float(value), 3), cfg.dt_min))

    per = 60 // cfg.dt_min
    hours = cfg.T // per
    hourly = rain[: hours * per].reshape(hours, per, n).sum(axis=1) * cfg.satellite_bias
    hourly = np.where(hourly < cfg.satellite_floor_mm, 0.0, np.round(hourly, 3))
    satellite = []
    for h in range(hours):
        for p in range(n):
            r, c = grid.rowcol(p)
            satellite.append(SatelliteCellHour((int(r), int(c)), t0 + h * 3600, float(hourly[h, p])))

    truth = {
        "params": asdict(cfg.params),
        "Z": cfg.Z,
        "C": C,
        "T_ch": format_instant(T_ch),
        "T_ch_index": T_ch_index,
        "Tt": Tt.tolist(),
        "Sp": Sp.tolist(),
    }
    return SynthDataset(cfg, strikes, gauges, satellite, truth)


def _fmt(x) -> str:
    return repr(float(x))


def write_dataset(ds: SynthDataset, outdir) -> dict:
    """Write the CSV inputs, a pipeline config and the truth file; returns their paths."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = ds.config
    paths = {
        "lightning": out / "lightning.csv",
        "gauges": out / "gauges.csv",
        "satellite": out / "satellite.csv",
        "config": out / "pipeline.cfg",
        "truth": out / "truth.json",
    }
    with open(paths["lightning"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LIGHTNING_HEADER)
        for s in ds.strikes:
            w.writerow([format_instant(s.timestamp), _fmt(s.x), _fmt(s.y)])
    with open(paths["gauges"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GAUGE_HEADER)
        for g in ds.gauges:
            w.writerow([g.station_id, _fmt(g.x), _fmt(g.y), format_instant(g.timestamp),
                        _fmt(g.accum_mm), g.interval_min])
    with open(paths["satellite"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SATELLITE_HEADER)
        for s in ds.satellite:
            w.writerow([s.cell[0], s.cell[1], format_instant(s.hour_start), _fmt(s.rain_mm)])
    cfg_lines = [
        "lightning = lightning.csv",
        "gauges = gauges.csv",
        "satellite = satellite.csv",
        f"origin_x_m = {cfg.origin_x!r}",
        f"origin_y_m = {cfg.origin_y!r}",
        f"cell_size_m = {cfg.cell_size!r}",
        f"n1 = {cfg.n1}",
        f"n2 = {cfg.n2}",
        f"t0 = {cfg.t0}",
        f"dt_min = {cfg.dt_min}",
        f"T = {cfg.T}",
        f"seed = {cfg.seed}",
    ]
    paths["config"].write_text("\n".join(cfg_lines) + "\n")
    paths["truth"].write_text(json.dumps(ds.truth, indent=2, sort_keys=True) + "\n")
    return {k: str(v) for k, v in paths.items()}
