"""Simulation studies shared by the scripts and the acceptance suite."""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .bayes.sampler import FixedMean, MCMCConfig, ModelData, fit
from .cli import main as cli_main
from .ingest import bin_lightning
from .meanfield import MeanContext, MeanKind, MeanVariant, mean_field
from .rlr import C_STAR
from .scan import detect_phase
from .synth import SynthConfig, TrueParams, _storm_strikes, simulate_latent, synth_storm, write_dataset

RECOVERY_PARAMS = ("alpha", "prec_eta", "prec_s", "rho_s", "prec_y")


@dataclass
class RecoveryResult:
    seed: int
    truth: dict
    lower: dict
    upper: dict
    rhat: dict
    covered: dict = field(default_factory=dict)


def recovery_problem(seed: int, n1: int = 8, n2: int = 8, T: int = 24,
                     params: TrueParams = TrueParams()) -> ModelData:
    """Data simulated from the M1 model on a small storm."""
    cfg = SynthConfig(seed=seed, n1=n1, n2=n2, T=T, n_storm=800, params=params)
    root = np.random.SeedSequence([seed, 6])
    r_light, r_rain = (np.random.default_rng(s) for s in root.spawn(2))
    grid = cfg.grid()
    strikes = _storm_strikes(r_light, cfg)
    L = bin_lightning(strikes, grid, cfg.t0_seconds, cfg.dt_min, T).values
    t_ch = (detect_phase(strikes, cfg.dt_min) - cfg.t0_seconds) // (cfg.dt_min * 60)
    ctx = MeanContext(L=L, grid=grid, C=C_STAR / grid.cell_area_m2 * cfg.Z,
                      T_ch_index=int(min(max(t_ch, 0), T - 1)), dt_min=cfg.dt_min)
    mu = mean_field(MeanVariant(MeanKind.M1), ctx)
    B = grid.adjacency(2)
    Y, _, _ = simulate_latent(r_rain, mu, B, params)
    return ModelData(np.maximum(np.expm1(Y), 0.0), B, FixedMean(mu))


def recovery_replicate(seed: int, iterations: int = 5000, burnin: int = 1000, thin: int = 4,
                       chains: int = 2, level: float = 0.9,
                       params: TrueParams = TrueParams()) -> RecoveryResult:
    data = recovery_problem(seed, params=params)
    draws = fit(data, config=MCMCConfig(chains=chains, iterations=iterations, burnin=burnin,
                                        thin=thin, seed=seed))
    truth = asdict(params)
    q = ((1 - level) / 2, (1 + level) / 2)
    res = RecoveryResult(seed, truth, {}, {}, {})
    summ = draws.summary()
    for k in RECOVERY_PARAMS:
        lo, hi = np.quantile(draws.flat(k), q)
        res.lower[k], res.upper[k] = float(lo), float(hi)
        res.rhat[k] = summ[k]["Rhat"]
        res.covered[k] = bool(lo <= truth[k] <= hi)
    return res


def run_pipeline(dataset_dir, workdir, extra_args=()) -> int:
    cfg = Path(dataset_dir) / "pipeline.cfg"
    return cli_main(["all", "--config", str(cfg), "--workdir", str(workdir), *extra_args])


def make_dataset(outdir, seed: int = 7) -> Path:
    write_dataset(synth_storm(SynthConfig(seed=seed)), outdir)
    return Path(outdir)


def read_report(workdir) -> list[dict]:
    with open(Path(workdir) / "verify" / "report.csv", newline="") as fh:
        return list(csv.DictReader(fh))


def validation_pairs(workdir) -> int:
    """Number of non-missing gauge values at validation cells."""
    wd = Path(workdir)
    with open(wd / "fit" / "split.csv", newline="") as fh:
        val = {(r["row"], r["col"]) for r in csv.DictReader(fh) if r["role"] == "validation"}
    with open(wd / "ingest" / "gauge_field.csv", newline="") as fh:
        return sum(1 for r in csv.DictReader(fh)
                   if (r["row"], r["col"]) in val and r["rain_mm"] != "nan")
