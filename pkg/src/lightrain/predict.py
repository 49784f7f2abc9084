"""Posterior predictive draws at (interval, cell) targets and their summaries."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bayes.censoring import CONTINUOUS, DEFAULT_DISCRETIZATION, Discretization, censor_array
from .bayes.sampler import PosteriorDraws

MIN_SAMPLES = 100


@dataclass
class PredictionSummary:
    """Per-target summaries on the log-latent and the mm scale."""

    targets: np.ndarray  # (k, 2) rows of (t, cell)
    level: float
    n_draws: int
    log_mean: np.ndarray
    log_sd: np.ndarray
    log_lower: np.ndarray
    log_upper: np.ndarray
    mm_mean: np.ndarray
    mm_sd: np.ndarray
    mm_lower: np.ndarray
    mm_upper: np.ndarray
    mm_median: np.ndarray

    def point(self, kind: str = "mean") -> np.ndarray:
        """mm-scale point prediction used for dichotomous scoring."""
        if kind == "mean":
            return self.mm_mean
        if kind == "median":
            return self.mm_median
        raise ValueError("point summary must be 'mean' or 'median'")


def _targets(targets, T: int, n: int) -> np.ndarray:
    tg = np.asarray(targets, dtype=np.int64).reshape(-1, 2)
    bad = (tg[:, 0] < 0) | (tg[:, 0] >= T) | (tg[:, 1] < 0) | (tg[:, 1] >= n)
    if np.any(bad):
        t, p = tg[np.argmax(bad)]
        raise ValueError(f"target (t={t}, cell={p}) outside the modeled domain {T}x{n}")
    return tg


def predictive_draws(draws: PosteriorDraws, targets, mean, seed: int = 0) -> np.ndarray:
    """Log-scale predictive samples, shape (n_samples, n_targets).

    For every posterior sample j, Y_j = mu(theta_j) + Tt_j(t) + Sp_j(p) +
    N(0, 1/prec_y_j).  ``mean`` maps kernel parameters to the (T, n) mean
    surface (a ``MeanModel`` or ``FixedMean``).
    """
    T, n = draws.Tt.shape[-1], draws.Sp.shape[-1]
    tg = _targets(targets, T, n)
    names = tuple(getattr(mean, "param_names", ()))
    Tt = draws.Tt.reshape(-1, T)
    Sp = draws.Sp.reshape(-1, n)
    prec = draws.params["prec_y"].reshape(-1)
    kp = {k: draws.params[k].reshape(-1) for k in names}
    S = prec.size
    loc = np.empty((S, tg.shape[0]))
    if names:
        for j in range(S):
            mu = np.asarray(mean({k: float(v[j]) for k, v in kp.items()}))
            loc[j] = mu[tg[:, 0], tg[:, 1]]
    else:
        loc[:] = np.asarray(mean(None))[tg[:, 0], tg[:, 1]]
    loc += Tt[:, tg[:, 0]] + Sp[:, tg[:, 1]]
    rng = np.random.default_rng(seed)
    return loc + rng.standard_normal(loc.shape) / np.sqrt(prec)[:, None]


def to_mm(y_log) -> np.ndarray:
    return np.maximum(np.expm1(np.asarray(y_log, dtype=float)), 0.0)


def summarize(samples, level: float = 0.9, targets=None) -> PredictionSummary:
    """Equal-tailed intervals; the mm scale is summarized draw-by-draw after
    back-transforming, so its quantiles are the transformed log quantiles."""
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    s = np.asarray(samples, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    if s.shape[0] < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples per target")
    q = [(1 - level) / 2, 0.5, (1 + level) / 2]
    # inverted_cdf picks order statistics, which commute with monotone maps
    lq = np.quantile(s, q, axis=0, method="inverted_cdf")
    mm = to_mm(s)
    mq = np.quantile(mm, q, axis=0, method="inverted_cdf")
    if targets is None:
        targets = np.column_stack([np.zeros(s.shape[1], np.int64), np.arange(s.shape[1])])
    lmean = s.mean(axis=0)
    mmean = mm.mean(axis=0)
    return PredictionSummary(
        targets=np.asarray(targets),
        level=level,
        n_draws=s.shape[0],
        log_mean=lmean,
        log_sd=s.std(axis=0, ddof=1),
        log_lower=np.minimum(lq[0], lmean),
        log_upper=np.maximum(lq[2], lmean),
        mm_mean=mmean,
        mm_sd=mm.std(axis=0, ddof=1),
        mm_lower=np.minimum(mq[0], mmean),
        mm_upper=np.maximum(mq[2], mmean),
        mm_median=mq[1],
    )


def covered(lower, upper, obs_mm, disc: Discretization = DEFAULT_DISCRETIZATION) -> np.ndarray:
    """Coverage flags on the log scale.

    Continuous readings are covered when inside [lower, upper]; plateau
    readings when the interval meets the plateau's latent interval.
    NaN observations give False and should be excluded by the caller.
    """
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    obs = np.asarray(obs_mm, dtype=float)
    kind, value = censor_array(obs, disc)
    out = (value >= lo) & (value <= hi)
    plate = (kind != CONTINUOUS) & ~np.isnan(obs)
    if np.any(plate):
        blo, bhi = disc.latent_bounds(kind[plate])
        out[plate] = (hi[plate] >= blo) & (lo[plate] < bhi)
    return out & ~np.isnan(obs)


def empirical_coverage(summary: PredictionSummary, observations_mm,
                       disc: Discretization = DEFAULT_DISCRETIZATION) -> float:
    """Percentage of non-missing observations covered by their interval."""
    obs = np.asarray(observations_mm, dtype=float).ravel()
    ok = ~np.isnan(obs)
    if not np.any(ok):
        raise ValueError("no paired observations")
    flags = covered(summary.log_lower[ok], summary.log_upper[ok], obs[ok], disc)
    return float(100.0 * flags.mean())
