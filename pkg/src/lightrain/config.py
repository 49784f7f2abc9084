"""Plain-text ``key = value`` configuration and the pipeline config dataclass."""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .bayes.censoring import Discretization
from .bayes.sampler import MCMCConfig, Priors
from .ingest import Grid, parse_instant
from .meanfield import MeanVariant
from .scan import ScanConfig


def read_kv(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment, blank lines are skipped."""
    out: dict[str, str] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key = key.strip()
            if not sep or not key:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            out[key] = value.strip()
    return out


def _bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text) -> tuple[float, ...]:
    if isinstance(text, (tuple, list)):
        return tuple(float(v) for v in text)
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def _strs(text) -> tuple[str, ...]:
    if isinstance(text, (tuple, list)):
        return tuple(str(v) for v in text)
    return tuple(v.strip() for v in str(text).split(",") if v.strip())


@dataclass(frozen=True)
class PipelineConfig:
    lightning: str = "lightning.csv"
    gauges: str = "gauges.csv"
    satellite: str = "satellite.csv"
    origin_x_m: float = 0.0
    origin_y_m: float = 0.0
    cell_size_m: float = 10000.0
    n1: int = 10
    n2: int = 10
    t0: str = "1970-01-01T00:00:00Z"
    dt_min: int = 15
    T: int = 32
    radius: float = 0.3
    min_points: int = 10
    variants: tuple[str, ...] = ("M1",)
    memory: bool = False
    chains: int = 2
    iters: int = 20000
    burnin: int = 5000
    thin: int = 15
    seed: int = 0
    val_fraction: float = 0.3
    max_missing_frac: float = 0.1
    Z: float | None = None
    level: float = 0.9
    point: str = "mean"
    alpha_mean: float = 0.5
    alpha_sd: float = 100.0
    gamma_shape: float = 0.001
    gamma_rate: float = 0.001
    thresholds: tuple[float, ...] = (0.2, 0.4, 0.6, 0.8, 1.0)
    base_dir: str = "."

    def __post_init__(self):
        if self.dt_min not in (15, 30):
            raise ValueError("dt_min must be 15 or 30")
        if self.T < 1:
            raise ValueError("T must be positive")
        if self.point not in ("mean", "median"):
            raise ValueError("point must be 'mean' or 'median'")
        for v in self.variants:
            MeanVariant.parse(v)

    # -- derived ------------------------------------------------------------
    def path(self, name: str) -> Path:
        p = Path(getattr(self, name))
        return p if p.is_absolute() else Path(self.base_dir) / p

    @property
    def t0_seconds(self) -> int:
        return parse_instant(self.t0)

    def grid(self) -> Grid:
        return Grid(self.origin_x_m, self.origin_y_m, self.n1, self.n2, self.cell_size_m)

    def scan_config(self) -> ScanConfig:
        return ScanConfig(radius=self.radius, min_points=self.min_points)

    def mcmc(self) -> MCMCConfig:
        return MCMCConfig(chains=self.chains, iterations=self.iters, burnin=self.burnin,
                          thin=self.thin, seed=self.seed)

    def priors(self) -> Priors:
        return Priors(alpha_mean=self.alpha_mean, alpha_sd=self.alpha_sd,
                      gamma_shape=self.gamma_shape, gamma_rate=self.gamma_rate,
                      kernel_shape=self.gamma_shape, kernel_rate=self.gamma_rate)

    def discretization(self) -> Discretization:
        return Discretization(tuple(self.thresholds))

    def mean_variants(self) -> list[MeanVariant]:
        out = []
        for v in self.variants:
            mv = MeanVariant.parse(v)
            if self.memory and not mv.memory:
                mv = MeanVariant(mv.kind, memory=True)
            out.append(mv)
        return out

    def echo(self) -> dict:
        """Config as plain JSON-able values (paths relative to the config dir)."""
        d = {}
        for f in fields(self):
            if f.name == "base_dir":
                continue
            v = getattr(self, f.name)
            d[f.name] = list(v) if isinstance(v, tuple) else v
        return d


_CASTS = {
    "int": int,
    "float": float,
    "bool": _bool,
    "str": str,
}


def _cast(name: str, value):
    if value is None:
        return None
    types = {f.name: f.type for f in fields(PipelineConfig)}
    t = str(types[name])
    if name in ("variants",):
        return _strs(value)
    if name == "thresholds":
        return _floats(value)
    if name == "Z":
        return None if str(value).strip().lower() in ("", "none") else float(value)
    for key, fn in _CASTS.items():
        if t.startswith(key):
            return fn(value)
    return value


ALIASES = {"variant": "variants", "iterations": "iters", "dt": "dt_min"}


def load_config(path=None, overrides: dict | None = None) -> PipelineConfig:
    """Read a config file (optional) and apply overrides; overrides win.

    Relative input paths are resolved against the config file's directory.
    """
    raw: dict = {}
    base = "."
    if path is not None:
        raw = read_kv(path)
        base = str(Path(path).parent)
    known = {f.name for f in fields(PipelineConfig)}
    values = {}
    for key, v in list(raw.items()) + list((overrides or {}).items()):
        name = ALIASES.get(key, key)
        if name not in known or name == "base_dir":
            raise ValueError(f"unknown config key {key!r}")
        if v is None:
            continue
        values[name] = _cast(name, v)
    # a dt override keeps the window span fixed
    if overrides and overrides.get("dt") is not None and "dt_min" in raw:
        span = int(values.get("T", PipelineConfig.T)) * int(raw["dt_min"])
        new_dt = int(overrides["dt"])
        if span % new_dt:
            raise ValueError(f"window of {span} min is not a multiple of dt={new_dt}")
        values["T"] = span // new_dt
    return replace(PipelineConfig(base_dir=base), **values)
