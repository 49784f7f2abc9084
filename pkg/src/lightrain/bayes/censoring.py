"""Partially discrete observation model for gauge rain.

Readings under 1 mm are only known up to a 0.2 mm bin; each bin is a
plateau carrying the log of its midpoint (plus one).  Readings of 1 mm or
more are continuous on the ``log(y + 1)`` scale.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CONTINUOUS = -1


@dataclass(frozen=True)
class Discretization:
    thresholds: tuple[float, ...] = (0.2, 0.4, 0.6, 0.8, 1.0)

    def __post_init__(self):
        c = np.asarray(self.thresholds, dtype=float)
        if c.size < 1 or np.any(np.diff(c) <= 0) or c[0] <= 0:
            raise ValueError("thresholds must be positive and strictly increasing")

    @property
    def n_plateaus(self) -> int:
        return len(self.thresholds)

    @property
    def edges(self) -> np.ndarray:
        """Bin edges on the mm scale, starting at 0."""
        return np.concatenate([[0.0], np.asarray(self.thresholds, dtype=float)])

    @property
    def midpoints(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[:-1] + e[1:])

    @property
    def plateau_values(self) -> np.ndarray:
        """Log-scale plateau values log(midpoint + 1)."""
        return np.log(self.midpoints + 1.0)

    def latent_bounds(self, k):
        """[lower, upper) of the latent log-rain for plateau ``k``; plateau 0
        is open below because the latent Gaussian is unbounded."""
        k = np.asarray(k)
        lo_mm = np.asarray(self.edges)[k]
        hi_mm = np.asarray(self.thresholds, dtype=float)[k]
        lo = np.where(k == 0, -np.inf, np.log1p(lo_mm))
        return lo, np.log1p(hi_mm)


DEFAULT_DISCRETIZATION = Discretization()


def censor_array(y_mm, disc: Discretization = DEFAULT_DISCRETIZATION):
    """Vectorised censoring.

    Returns ``(kind, value)``: ``kind`` is the plateau index or
    ``CONTINUOUS``; ``value`` is the plateau log value or ``log(y + 1)``.
    NaN inputs give kind ``CONTINUOUS`` and NaN value.
    """
    y = np.asarray(y_mm, dtype=float)
    if np.any(y[~np.isnan(y)] < 0):
        raise ValueError("rain must be non-negative")
    c = np.asarray(disc.thresholds, dtype=float)
    k = np.searchsorted(c, np.nan_to_num(y, nan=np.inf), side="right")
    plateau = k < c.size
    kind = np.where(plateau, k, CONTINUOUS)
    value = np.where(plateau, disc.plateau_values[np.minimum(k, c.size - 1)], np.log1p(y))
    return kind.astype(np.int64), value


def censor(y_mm: float, disc: Discretization = DEFAULT_DISCRETIZATION) -> tuple[str, int | None, float]:
    """Censor a single reading: ``("plateau", k, lambda_k)`` or ``("continuous", None, log(y+1))``."""
    if y_mm < 0:
        raise ValueError("rain must be non-negative")
    kind, value = censor_array(np.array([y_mm]), disc)
    if kind[0] == CONTINUOUS:
        return "continuous", None, float(value[0])
    return "plateau", int(kind[0]), float(value[0])
