"""Lightning-driven mean of the log-rain process.

For every variant the mean at interval ``t`` and cell ``p`` is

    mu(t, p) = log(C * sum_i L(i, p) f(t, i) [gate] + C * sum_i w(i, p) [gate] + 1)

with ``f`` an exponential time kernel (phase-, velocity- or activity-aware),
``w`` the neighbour spatial weights and ``C`` the flash-to-depth factor.
Times are interval indices; ``Delta = t - i`` is measured in aggregation steps.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .ingest import Grid
from .rlr import neighbor_sum

FIXED_SPEED = 16.1  # m/s, propagation speed assumed by M2
ACTIVITY_THRESHOLD = 5.0
ACTIVITY_HOLD_MIN = 30
MEMORY_WINDOW_MIN = 30
MAX_NEIGHBORS = 8


class MeanKind(str, enum.Enum):
    M1 = "M1"
    M2 = "M2"
    M3 = "M3"
    M4 = "M4"
    M5 = "M5"
    M6 = "M6"


PHASED = {MeanKind.M1, MeanKind.M2, MeanKind.M3, MeanKind.M6}
GATED = {MeanKind.M4, MeanKind.M5, MeanKind.M6}
KERNEL_PARAMS = {MeanKind.M2: ("a", "b"), MeanKind.M3: ("b1", "b2")}


@dataclass(frozen=True)
class MeanVariant:
    kind: MeanKind
    memory: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", MeanKind(self.kind))
        if self.memory and self.kind not in (MeanKind.M1, MeanKind.M2, MeanKind.M3):
            raise ValueError("memory weights are only defined for M1-M3")

    @classmethod
    def parse(cls, text: str) -> "MeanVariant":
        t = text.strip()
        if t.lower().endswith("memory"):
            return cls(MeanKind(t[:-6].upper()), memory=True)
        return cls(MeanKind(t.upper()))

    @property
    def name(self) -> str:
        return self.kind.value + ("memory" if self.memory else "")

    @property
    def param_names(self) -> tuple[str, ...]:
        return KERNEL_PARAMS.get(self.kind, ())


@dataclass
class MeanContext:
    L: np.ndarray  # (T, n) lightning counts
    grid: Grid
    C: float
    T_ch_index: int
    dt_min: int
    v1: float = float("nan")
    v2: float = float("nan")
    v: float = float("nan")
    V: float = FIXED_SPEED
    active: np.ndarray | None = None  # (T, n) bool; derived from L when omitted

    def __post_init__(self):
        self.L = np.asarray(self.L, dtype=float)
        if self.L.ndim != 2 or self.L.shape[1] != self.grid.n_cells:
            raise ValueError("L must be (T, n_cells) on the grid")
        if not self.C > 0:
            raise ValueError("C must be positive")
        if not 0 <= self.T_ch_index < self.T:
            raise ValueError("T_ch_index outside [0, T)")
        if self.active is None:
            self.active = activity_map(self.L, self.dt_min)
        self.active = np.asarray(self.active, dtype=bool)
        if self.active.shape != self.L.shape:
            raise ValueError("activity map must match L")

    @property
    def T(self) -> int:
        return self.L.shape[0]

    @property
    def A_p(self) -> float:
        return self.grid.cell_area_m2


# ---------------------------------------------------------------------------
# Spatial weights


def spatial_weights(L, grid: Grid) -> np.ndarray:
    """w(i, p) = (L(i,p) + L(i,N_p)/8) / L_p with L_p = sum_i (L(i,p) + L(i,N_p))."""
    L = np.asarray(L, dtype=float)
    LN = neighbor_sum(L, grid)
    Lp = (L + LN).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        w = (L + LN / MAX_NEIGHBORS) / Lp
    return np.where(Lp > 0, w, 0.0)


def memory_weights(L, grid: Grid, dt_min: int) -> np.ndarray:
    """Spatial weights restricted to a trailing 30-minute window.

    Numerator: current and lagged ``L + L_N/8`` terms (1 lag at 30 min,
    2 at 15 min).  Denominator: cumulative ``sum_{k<=i} w(k, p)``.
    """
    if dt_min not in (15, 30):
        raise ValueError("dt_min must be 15 or 30")
    L = np.asarray(L, dtype=float)
    LN = neighbor_sum(L, grid)
    term = L + LN / MAX_NEIGHBORS
    lags = MEMORY_WINDOW_MIN // dt_min
    num = term.copy()
    for k in range(1, lags + 1):
        num[k:] += term[:-k]
    den = np.cumsum(spatial_weights(L, grid), axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = num / den
    return np.where(den > 0, out, 0.0)


# ---------------------------------------------------------------------------
# Activity


def cell_activity(series, dt_min: int) -> np.ndarray:
    """Active intervals of one cell's count series.

    An interval is active when its centred 3-term moving average exceeds 5;
    each active interval keeps the cell active for the following 30 minutes.
    """
    c = np.asarray(series, dtype=float)
    active = np.zeros(c.size, dtype=bool)
    if c.size < 3:
        return active
    ma = np.convolve(c, np.ones(3) / 3.0, mode="valid")
    hit = np.flatnonzero(ma > ACTIVITY_THRESHOLD) + 1
    hold = ACTIVITY_HOLD_MIN // dt_min
    for i in hit:
        active[i : i + hold + 1] = True
    return active


def activity_map(L, dt_min: int) -> np.ndarray:
    L = np.asarray(L, dtype=float)
    return np.column_stack([cell_activity(L[:, p], dt_min) for p in range(L.shape[1])]) \
        if L.shape[1] else np.zeros(L.shape, dtype=bool)


# ---------------------------------------------------------------------------
# Temporal kernels


def _rates(variant: MeanVariant, ctx: MeanContext, params) -> tuple[float, float]:
    """Decay rates (charging, later) multiplying |Delta| and Delta^2."""
    kind = variant.kind
    if kind == MeanKind.M2:
        r = (params["a"] + params["b"] * ctx.V) / np.sqrt(ctx.A_p)
        return r, r
    if kind == MeanKind.M3:
        if not ctx.v > 0:
            raise ValueError("M3 needs a positive whole-event speed V")
        return params["b1"] * ctx.v1 / ctx.v, params["b2"] * ctx.v2 / ctx.v
    return 1.0, 1.0


def kernel_matrix(variant: MeanVariant, ctx: MeanContext, params=None) -> np.ndarray:
    """K[t, i]: time weight of lightning in interval i for prediction at t."""
    params = params or {}
    T = ctx.T
    t = np.arange(T)[:, None]
    i = np.arange(T)[None, :]
    d = np.abs(t - i).astype(float)
    kind = variant.kind
    if kind == MeanKind.M4:
        return np.exp(-d)
    if kind == MeanKind.M5:
        return np.exp(-(d**2))
    r_ch, r_late = _rates(variant, ctx, params)
    t_ch = t < ctx.T_ch_index
    i_ch = i < ctx.T_ch_index
    charging = t_ch & i_ch
    later = ~t_ch & ~i_ch
    return np.where(charging, np.exp(-r_ch * d), 0.0) + np.where(later, np.exp(-r_late * d**2), 0.0)


def temporal_weight(variant: MeanVariant, t_idx: int, i_idx: int, ctx: MeanContext,
                    params=None, cell: int | None = None) -> float:
    """Scalar time weight; activity-gated variants need ``cell``."""
    w = float(kernel_matrix(variant, ctx, params)[t_idx, i_idx])
    if variant.kind in GATED:
        if cell is None:
            raise ValueError(f"{variant.kind.value} is activity-gated; pass a cell")
        if not (ctx.active[t_idx, cell] or ctx.active[i_idx, cell]):
            return 0.0
    return w


# ---------------------------------------------------------------------------


class MeanModel:
    """Evaluates mu for one variant, caching everything that does not depend
    on the kernel parameters (used once per proposal inside MCMC)."""

    def __init__(self, variant: MeanVariant, ctx: MeanContext):
        self.variant = variant
        self.ctx = ctx
        L = ctx.L
        w = memory_weights(L, ctx.grid, ctx.dt_min) if variant.memory else spatial_weights(L, ctx.grid)
        if variant.kind in GATED:
            act = ctx.active
            # gate[t, i, p] = active(t, p) or active(i, p)
            self._gate = act[:, None, :] | act[None, :, :]
            self._wsum = ctx.C * np.einsum("tip,ip->tp", self._gate, w)
        else:
            self._gate = None
            self._wsum = ctx.C * np.broadcast_to(w.sum(axis=0), L.shape)
        self._fixed = None if variant.param_names else self._evaluate({})

    @property
    def param_names(self) -> tuple[str, ...]:
        return self.variant.param_names

    def _evaluate(self, params) -> np.ndarray:
        K = kernel_matrix(self.variant, self.ctx, params)
        L = self.ctx.L
        if self._gate is None:
            lsum = K @ L
        else:
            lsum = np.einsum("ti,tip,ip->tp", K, self._gate, L)
        inner = self.ctx.C * lsum + self._wsum + 1.0
        mu = np.log(inner)
        if not np.all(np.isfinite(mu)):
            t, p = np.argwhere(~np.isfinite(mu))[0]
            raise FloatingPointError(f"non-finite mean at (t={t}, cell={p})")
        return mu

    def __call__(self, params=None) -> np.ndarray:
        if self._fixed is not None:
            return self._fixed
        params = params or {}
        missing = [k for k in self.param_names if k not in params]
        if missing:
            raise ValueError(f"{self.variant.name} needs kernel parameters {missing}")
        return self._evaluate(params)


def mean_field(variant: MeanVariant, ctx: MeanContext, params=None) -> np.ndarray:
    """mu as a (T, n_cells) array on the log scale."""
    return MeanModel(variant, ctx)(params)
