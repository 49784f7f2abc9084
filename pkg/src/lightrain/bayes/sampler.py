"""MCMC for the censored Gaussian space-time model.

    Y(t, p) ~ N(mu(t, p) + Tt(t) + Sp(p), 1 / prec_y)
    Tt(t) = alpha * Tt(t-1) + eta(t),   eta ~ N(0, 1 / prec_eta),  Tt(-1) = 0
    Sp ~ N(0, [prec_s (I - rho_s B)]^-1),  rho_s ~ U(0, 1/m)

Gauge readings under 1 mm are interval-censored; their latent ``Y`` is
imputed each sweep.  Precisions carry Gamma(shape, rate) priors, alpha a
wide normal prior and the mean-kernel rates of M2/M3 Gamma priors sampled
by log-scale random-walk Metropolis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Callable, Mapping

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .car import coloring, max_neighbors
from .censoring import CONTINUOUS, DEFAULT_DISCRETIZATION, Discretization, censor_array
from .diagnostics import dic, summarize_chains
from .truncnorm import rtruncnorm

SCALARS = ("alpha", "prec_eta", "prec_s", "rho_s", "prec_y")
TARGET_ACCEPT = 0.44


@dataclass(frozen=True)
class Priors:
    alpha_mean: float = 0.5
    alpha_sd: float = 100.0
    gamma_shape: float = 0.001
    gamma_rate: float = 0.001
    kernel_shape: float = 0.001
    kernel_rate: float = 0.001


@dataclass(frozen=True)
class MCMCConfig:
    chains: int = 2
    iterations: int = 20000
    burnin: int = 5000
    thin: int = 15
    seed: int = 0
    adapt: bool = True

    def __post_init__(self):
        if self.chains < 1:
            raise ValueError("need at least one chain")
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if not 0 <= self.burnin < self.iterations:
            raise ValueError("burn-in must lie in [0, iterations)")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")

    @property
    def n_kept(self) -> int:
        return (self.iterations - self.burnin) // self.thin


class FixedMean:
    """A mean surface with no free parameters."""

    param_names: tuple[str, ...] = ()

    def __init__(self, mu):
        self.mu = np.asarray(mu, dtype=float)

    def __call__(self, params=None) -> np.ndarray:
        return self.mu


@dataclass
class ModelData:
    """Observations and structure for one fit.

    ``obs_mm`` is (T, n) with NaN wherever a cell/time contributes no
    likelihood (ungauged, held out or missing).  ``mean`` maps kernel
    parameters to mu.  ``fixed`` pins any of ``alpha, prec_eta, prec_s,
    rho_s, prec_y, Tt, Sp`` or a kernel parameter to a value.
    """

    obs_mm: np.ndarray
    B: object
    mean: Callable = None
    disc: Discretization = DEFAULT_DISCRETIZATION
    fixed: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        self.obs_mm = np.asarray(self.obs_mm, dtype=float)
        self.B = sp.csr_matrix(self.B, dtype=float)
        T, n = self.obs_mm.shape
        if self.B.shape != (n, n):
            raise ValueError("adjacency does not match the number of cells")
        if self.mean is None:
            self.mean = FixedMean(np.zeros((T, n)))
        self.mask = ~np.isnan(self.obs_mm)
        if not np.any(self.mask):
            raise ValueError("no observations carry likelihood")
        kind, value = censor_array(self.obs_mm, self.disc)
        self.kind = kind
        self.obs_log = np.where(self.mask, value, 0.0)
        self.plateau = self.mask & (kind != CONTINUOUS)
        lo, hi = self.disc.latent_bounds(kind[self.plateau])
        self.lower, self.upper = lo, hi

    @property
    def shape(self) -> tuple[int, int]:
        return self.obs_mm.shape

    @property
    def param_names(self) -> tuple[str, ...]:
        return tuple(getattr(self.mean, "param_names", ()))


@dataclass
class PosteriorDraws:
    params: dict  # name -> (chains, kept)
    Tt: np.ndarray  # (chains, kept, T)
    Sp: np.ndarray  # (chains, kept, n)
    deviance: np.ndarray  # (chains, kept)
    config: MCMCConfig
    chain_seeds: list
    variant: str = ""
    acceptance: dict = field(default_factory=dict)
    latent: np.ndarray | None = None

    @property
    def n_chains(self) -> int:
        return self.deviance.shape[0]

    @property
    def n_kept(self) -> int:
        return self.deviance.shape[1]

    def flat(self, name: str) -> np.ndarray:
        return np.asarray(self.params[name]).reshape(-1)

    def summary(self) -> dict:
        out = {name: summarize_chains(v) for name, v in self.params.items()}
        out["deviance"] = summarize_chains(self.deviance)
        return out

    def config_echo(self) -> dict:
        d = asdict(self.config)
        d["chain_seeds"] = list(self.chain_seeds)
        d["variant"] = self.variant
        return d


# ---------------------------------------------------------------------------


def deviance(data: ModelData, mu, Tt, Sp, prec_y: float) -> float:
    """-2 log-likelihood; plateau readings are scored at their plateau value."""
    m = np.asarray(mu) + np.asarray(Tt)[:, None] + np.asarray(Sp)[None, :]
    r = (data.obs_log - m)[data.mask]
    n = r.size
    return float(n * math.log(2.0 * math.pi / prec_y) + prec_y * np.dot(r, r))


def _ar1_precision(alpha: float, T: int) -> np.ndarray:
    Q = np.zeros((T, T))
    idx = np.arange(T)
    Q[idx, idx] = 1.0 + alpha * alpha
    Q[T - 1, T - 1] = 1.0
    Q[idx[1:], idx[:-1]] = -alpha
    Q[idx[:-1], idx[1:]] = -alpha
    return Q


def _gamma(rng, shape, rate) -> float:
    return float(rng.gamma(shape, 1.0 / rate))


def _log_gamma_prior(x, shape, rate):
    return (shape - 1.0) * math.log(x) - rate * x


class _Chain:
    def __init__(self, data: ModelData, priors: Priors, config: MCMCConfig, rng: np.random.Generator):
        self.d = data
        self.pr = priors
        self.cfg = config
        self.rng = rng
        T, n = data.shape
        self.T, self.n = T, n
        self.B = data.B
        self.m = max_neighbors(self.B)
        self.rho_max = 1.0 / self.m if self.m else 1.0
        self.lam = np.linalg.eigvalsh(self.B.toarray()) if n else np.zeros(0)
        colors = coloring(self.B)
        self.color_sets = [np.flatnonzero(colors == c) for c in range(colors.max() + 1)]
        self.color_rows = [self.B[idx] for idx in self.color_sets]
        self.maskf = data.mask.astype(float)
        self.n_t = self.maskf.sum(axis=1)
        self.n_p = self.maskf.sum(axis=0)
        self.N = int(data.mask.sum())
        self.fixed = dict(data.fixed)
        self.kernel_names = data.param_names
        self.step = {"rho_s": 0.5 * self.rho_max}
        self.step.update({k: 0.5 for k in self.kernel_names})
        self.accepts = {k: 0 for k in self.step}
        self.tries = {k: 0 for k in self.step}
        self._init_state()

    # -- state --------------------------------------------------------------
    def _init_state(self):
        rng, fx, d = self.rng, self.fixed, self.d
        obs = d.obs_log[d.mask]
        v = float(np.var(obs)) if obs.size > 1 else 1.0
        base_prec_y = 1.0 / max(v, 1e-3)
        s = {
            "alpha": 0.5 + 0.2 * rng.standard_normal(),
            "prec_eta": 10.0 * math.exp(0.5 * rng.standard_normal()),
            "prec_s": 10.0 * math.exp(0.5 * rng.standard_normal()),
            "rho_s": float(rng.uniform(0.05, 0.95)) * self.rho_max,
            "prec_y": base_prec_y * math.exp(0.5 * rng.standard_normal()),
        }
        for k in self.kernel_names:
            s[k] = math.exp(0.5 * rng.standard_normal())
        for k in list(s):
            if k in fx:
                s[k] = float(fx[k])
        self.s = s
        self.Tt = np.broadcast_to(np.asarray(fx.get("Tt", 0.0), float), (self.T,)).copy()
        self.Sp = np.broadcast_to(np.asarray(fx.get("Sp", 0.0), float), (self.n,)).copy()
        self.kparams = {k: s[k] for k in self.kernel_names}
        self.mu = np.asarray(d.mean(self.kparams), dtype=float)
        self.Y = d.obs_log.copy()

    # -- updates ------------------------------------------------------------
    def _latent(self):
        d = self.d
        if not d.plateau.any():
            return
        mean = (self.mu + self.Tt[:, None] + self.Sp[None, :])[d.plateau]
        sd = 1.0 / math.sqrt(self.s["prec_y"])
        self.Y[d.plateau] = rtruncnorm(self.rng, mean, sd, d.lower, d.upper)

    def _temporal(self):
        if "Tt" in self.fixed:
            return
        py, pe = self.s["prec_y"], self.s["prec_eta"]
        r = ((self.Y - self.mu - self.Sp[None, :]) * self.maskf).sum(axis=1)
        P = pe * _ar1_precision(self.s["alpha"], self.T)
        P[np.diag_indices(self.T)] += py * self.n_t
        c = sla.cholesky(P, lower=True, check_finite=False)
        mean = sla.cho_solve((c, True), py * r, check_finite=False)
        z = self.rng.standard_normal(self.T)
        self.Tt = mean + sla.solve_triangular(c.T, z, lower=False, check_finite=False)

    def _spatial(self):
        if "Sp" in self.fixed:
            return
        py, ps, rho = self.s["prec_y"], self.s["prec_s"], self.s["rho_s"]
        r = ((self.Y - self.mu - self.Tt[:, None]) * self.maskf).sum(axis=0)
        post = ps + py * self.n_p
        sd = 1.0 / np.sqrt(post)
        for idx, rows in zip(self.color_sets, self.color_rows):
            nb = rows @ self.Sp
            m = (ps * rho * nb + py * r[idx]) / post[idx]
            self.Sp[idx] = m + sd[idx] * self.rng.standard_normal(idx.size)

    def _alpha(self):
        if "alpha" in self.fixed or self.T < 2:
            return
        a0 = 1.0 / self.pr.alpha_sd**2
        prev, cur = self.Tt[:-1], self.Tt[1:]
        pe = self.s["prec_eta"]
        prec = a0 + pe * np.dot(prev, prev)
        mean = (a0 * self.pr.alpha_mean + pe * np.dot(prev, cur)) / prec
        self.s["alpha"] = float(mean + self.rng.standard_normal() / math.sqrt(prec))

    def _precisions(self):
        a, b = self.pr.gamma_shape, self.pr.gamma_rate
        if "prec_eta" not in self.fixed:
            eta = np.concatenate([[self.Tt[0]], self.Tt[1:] - self.s["alpha"] * self.Tt[:-1]])
            self.s["prec_eta"] = _gamma(self.rng, a + 0.5 * self.T, b + 0.5 * np.dot(eta, eta))
        if "prec_s" not in self.fixed:
            q = np.dot(self.Sp, self.Sp) - self.s["rho_s"] * np.dot(self.Sp, self.B @ self.Sp)
            self.s["prec_s"] = _gamma(self.rng, a + 0.5 * self.n, b + 0.5 * q)
        if "prec_y" not in self.fixed:
            e = (self.Y - self.mu - self.Tt[:, None] - self.Sp[None, :])[self.d.mask]
            self.s["prec_y"] = _gamma(self.rng, a + 0.5 * self.N, b + 0.5 * np.dot(e, e))

    def _metropolis(self, name, log_ratio_fn, propose):
        """One random-walk step; ``propose`` returns the candidate or None when outside support."""
        self.tries[name] += 1
        cand = propose(self.step[name])
        if cand is None:
            return
        lr = log_ratio_fn(cand)
        if not math.isfinite(lr) and not lr == -math.inf:
            raise FloatingPointError(f"non-finite log acceptance ratio for {name}")
        if math.log(self.rng.random()) < lr:
            self.accepts[name] += 1
            return cand
        return None

    def _rho(self):
        if "rho_s" in self.fixed:
            return
        rho = self.s["rho_s"]
        sbs = float(np.dot(self.Sp, self.B @ self.Sp))
        ps = self.s["prec_s"]

        def propose(step):
            c = rho + step * self.rng.standard_normal()
            return c if 0.0 <= c < self.rho_max else None

        def log_ratio(c):
            return (0.5 * np.sum(np.log1p(-c * self.lam)) - 0.5 * np.sum(np.log1p(-rho * self.lam))
                    + 0.5 * ps * (c - rho) * sbs)

        new = self._metropolis("rho_s", log_ratio, propose)
        if new is not None:
            self.s["rho_s"] = float(new)

    def _sse(self, mu):
        e = (self.Y - mu - self.Tt[:, None] - self.Sp[None, :])[self.d.mask]
        return float(np.dot(e, e))

    def _kernel(self):
        py = self.s["prec_y"]
        sh, rt = self.pr.kernel_shape, self.pr.kernel_rate
        for name in self.kernel_names:
            if name in self.fixed:
                continue
            cur = self.kparams[name]
            sse_cur = self._sse(self.mu)
            holder = {}

            def propose(step):
                return cur * math.exp(step * self.rng.standard_normal())

            def log_ratio(c):
                params = dict(self.kparams, **{name: c})
                mu = np.asarray(self.d.mean(params), dtype=float)
                holder["mu"] = mu
                ll = -0.5 * py * (self._sse(mu) - sse_cur)
                lp = _log_gamma_prior(c, sh, rt) - _log_gamma_prior(cur, sh, rt)
                return ll + lp + math.log(c) - math.log(cur)

            new = self._metropolis(name, log_ratio, propose)
            if new is not None:
                self.kparams[name] = float(new)
                self.s[name] = float(new)
                self.mu = holder["mu"]

    def _adapt(self, it):
        if (it + 1) % 50:
            return
        k = (it + 1) // 50
        gain = min(0.5, 1.0 / math.sqrt(k))
        for name in self.step:
            if self.tries[name]:
                rate = self.accepts[name] / self.tries[name]
                self.step[name] *= math.exp(gain * (rate - TARGET_ACCEPT))
                if name == "rho_s":
                    self.step[name] = min(self.step[name], self.rho_max)
            self.accepts[name] = 0
            self.tries[name] = 0

    def _check(self, it):
        for k, v in self.s.items():
            if not math.isfinite(v):
                raise FloatingPointError(f"iteration {it}: non-finite {k}")
        if not (np.isfinite(self.Tt).all() and np.isfinite(self.Sp).all()):
            raise FloatingPointError(f"iteration {it}: non-finite space-time effects")

    def sweep(self, it):
        self._latent()
        self._temporal()
        self._spatial()
        self._alpha()
        self._precisions()
        self._rho()
        self._kernel()
        self._check(it)
        if self.cfg.adapt and it < self.cfg.burnin:
            self._adapt(it)

    def run(self):
        cfg = self.cfg
        kept = cfg.n_kept
        names = list(SCALARS) + list(self.kernel_names)
        out = {k: np.empty(kept) for k in names}
        Tt = np.empty((kept, self.T))
        Sp = np.empty((kept, self.n))
        dev = np.empty(kept)
        j = 0
        for it in range(cfg.iterations):
            if it == cfg.burnin:
                self.accepts = {k: 0 for k in self.step}
                self.tries = {k: 0 for k in self.step}
            self.sweep(it)
            if it >= cfg.burnin and (it - cfg.burnin + 1) % cfg.thin == 0 and j < kept:
                for k in names:
                    out[k][j] = self.s[k]
                Tt[j] = self.Tt
                Sp[j] = self.Sp
                dev[j] = deviance(self.d, self.mu, self.Tt, self.Sp, self.s["prec_y"])
                j += 1
        acc = {k: (self.accepts[k] / self.tries[k] if self.tries[k] else float("nan")) for k in self.step}
        return out, Tt, Sp, dev, acc


def chain_seeds(seed: int, chains: int) -> list[int]:
    """Independent per-chain seeds derived from one root seed."""
    ss = np.random.SeedSequence(seed)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in ss.spawn(chains)]


def fit(data: ModelData, priors: Priors = Priors(), config: MCMCConfig = MCMCConfig(),
        variant: str = "") -> PosteriorDraws:
    """Run ``config.chains`` independent chains sequentially."""
    if config.n_kept < 1:
        raise ValueError("configuration keeps no draws")
    seeds = chain_seeds(config.seed, config.chains)
    results = [_Chain(data, priors, config, np.random.default_rng(s)).run() for s in seeds]
    names = list(results[0][0])
    params = {k: np.stack([r[0][k] for r in results]) for k in names}
    acc = {k: [r[4][k] for r in results] for k in results[0][4]}
    return PosteriorDraws(
        params=params,
        Tt=np.stack([r[1] for r in results]),
        Sp=np.stack([r[2] for r in results]),
        deviance=np.stack([r[3] for r in results]),
        config=config,
        chain_seeds=seeds,
        variant=variant,
        acceptance=acc,
    )


def posterior_dic(draws: PosteriorDraws, data: ModelData) -> dict:
    """DIC with the plug-in deviance at posterior means of all parameters and effects."""
    kp = {k: float(draws.params[k].mean()) for k in data.param_names}
    mu = np.asarray(data.mean(kp), dtype=float)
    dhat = deviance(data, mu, draws.Tt.mean(axis=(0, 1)), draws.Sp.mean(axis=(0, 1)),
                    float(draws.params["prec_y"].mean()))
    return dic(draws.deviance, dhat)
