"""Forecast verification: continuous errors, rain/no-rain skill scores and
the hourly satellite-baseline comparison."""
from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

RAIN_THRESHOLD_MM = 0.2


@dataclass(frozen=True)
class ContingencyTable:
    a: int  # hit
    b: int  # false alarm
    c: int  # miss
    d: int  # correct negative

    def __post_init__(self):
        if min(self.a, self.b, self.c, self.d) < 0:
            raise ValueError("contingency counts must be non-negative")
        if self.n < 1:
            raise ValueError("contingency table is empty")

    @property
    def n(self) -> int:
        return self.a + self.b + self.c + self.d


@dataclass
class VerificationReport:
    variant: str
    dic: float | None
    ec_pct: float | None
    poht_pct: float | None
    pod_pct: float | None
    pofd_pct: float | None
    rmse_mm: float | None
    hss: float | None
    label: str = ""

    def as_dict(self) -> dict:
        return asdict(self)


def _paired(pred, obs):
    pred = np.asarray(pred, dtype=float).ravel()
    obs = np.asarray(obs, dtype=float).ravel()
    if pred.shape != obs.shape:
        raise ValueError("prediction and observation shapes differ")
    ok = ~(np.isnan(pred) | np.isnan(obs))
    if not np.any(ok):
        raise ValueError("no paired non-missing values")
    return pred[ok], obs[ok]


def contingency(pred_mm, obs_mm, threshold: float = RAIN_THRESHOLD_MM) -> ContingencyTable:
    """2x2 rain/no-rain table; rain means a value >= threshold."""
    p, o = _paired(pred_mm, obs_mm)
    pr, ob = p >= threshold, o >= threshold
    return ContingencyTable(
        a=int(np.sum(pr & ob)),
        b=int(np.sum(pr & ~ob)),
        c=int(np.sum(~pr & ob)),
        d=int(np.sum(~pr & ~ob)),
    )


def _ratio(num, den):
    return None if den == 0 else num / den


def scores(table: ContingencyTable) -> dict:
    """POHT, POD, POFD and Heidke skill as fractions.  ``None`` marks an
    undefined score (zero denominator)."""
    a, b, c, d, n = table.a, table.b, table.c, table.d, table.n
    expected = ((a + c) * (a + b) + (d + c) * (d + b)) / n
    return {
        "poht": (a + d) / n,
        "pod": _ratio(a, a + c),
        "pofd": _ratio(b, b + d),
        "hss": _ratio((a + d) - expected, n - expected),
    }


def rmse(pred_mm, obs_mm) -> float:
    p, o = _paired(pred_mm, obs_mm)
    return float(np.sqrt(np.mean((p - o) ** 2)))


def hourly_totals(values, dt_min: int) -> np.ndarray:
    """Sum a (T, n) sub-hourly array into whole hours (trailing partial hour dropped)."""
    v = np.asarray(values, dtype=float)
    per = 60 // dt_min
    if 60 % dt_min:
        raise ValueError("dt_min must divide 60")
    h = v.shape[0] // per
    return v[: h * per].reshape(h, per, *v.shape[1:]).sum(axis=1)


def baseline_compare(pred_hourly, satellite_hourly, gauge_hourly) -> dict:
    """Model and satellite residuals against gauges at the same hourly support.

    All inputs are (hours, cells) arrays with NaN for missing; the comparison
    uses cells/hours where all three are present.
    """
    pred = np.asarray(pred_hourly, dtype=float)
    sat = np.asarray(satellite_hourly, dtype=float)
    gauge = np.asarray(gauge_hourly, dtype=float)
    if not (pred.shape == sat.shape == gauge.shape):
        raise ValueError("hourly arrays must share a shape")
    ok = ~(np.isnan(pred) | np.isnan(sat) | np.isnan(gauge))
    if not np.any(ok):
        raise ValueError("no gauged overlap between model, satellite and gauges")
    model_res = (pred - gauge)[ok]
    sat_res = (sat - gauge)[ok]
    diff_model = np.where(ok, pred - gauge, 0.0)
    diff_sat = np.where(ok, sat - gauge, 0.0)
    cells = np.flatnonzero(ok.any(axis=0))
    return {
        "model_residuals": model_res,
        "satellite_residuals": sat_res,
        "model_median": float(np.median(model_res)),
        "model_variance": float(np.var(model_res, ddof=1)) if model_res.size > 1 else 0.0,
        "satellite_median": float(np.median(sat_res)),
        "satellite_variance": float(np.var(sat_res, ddof=1)) if sat_res.size > 1 else 0.0,
        "cells": cells,
        "model_volume_diff": diff_model.sum(axis=0)[cells],
        "satellite_volume_diff": diff_sat.sum(axis=0)[cells],
    }


def report(variant: str, pred_mm, obs_mm, dic: float | None = None, ec_pct: float | None = None,
           label: str = "") -> VerificationReport:
    s = scores(contingency(pred_mm, obs_mm))

    def pct(x):
        return None if x is None else 100.0 * x

    return VerificationReport(
        variant=variant,
        dic=dic,
        ec_pct=ec_pct,
        poht_pct=pct(s["poht"]),
        pod_pct=pct(s["pod"]),
        pofd_pct=pct(s["pofd"]),
        rmse_mm=rmse(pred_mm, obs_mm),
        hss=s["hss"],
        label=label,
    )
