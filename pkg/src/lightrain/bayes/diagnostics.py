"""Convergence diagnostics, DIC and the estimation/validation cell split."""
from __future__ import annotations

import numpy as np

SUMMARY_QUANTILES = (0.025, 0.25, 0.5, 0.75, 0.975)


def gelman_rubin(chains) -> float:
    """Potential scale reduction factor for one scalar.

    ``chains`` is (m, n).  The pooled variance estimate is compared with the
    within-chain variance on the same (n-1)/n footing, so identical chains
    give exactly 1 and the factor never drops below 1.
    """
    x = np.asarray(chains, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need at least 2 chains as an (m, n) array")
    m, n = x.shape
    if n < 10:
        raise ValueError("chains must have length >= 10")
    means = x.mean(axis=1)
    between = n * means.var(ddof=1)
    within = x.var(axis=1, ddof=1).mean()
    within_n = (n - 1) / n * within
    if within_n == 0:
        return 1.0 if between == 0 else np.inf
    return float(np.sqrt((within_n + between / n) / within_n))


def effective_size(chains) -> float:
    """Effective sample size from chain-averaged autocorrelations, truncated
    at the first negative sum of adjacent lag pairs (Geyer)."""
    x = np.asarray(chains, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    m, n = x.shape
    if n < 4:
        return float(m * n)
    xc = x - x.mean(axis=1, keepdims=True)
    var = xc.var(axis=1).mean()
    if var == 0:
        return float(m * n)
    f = np.fft.rfft(xc, n=2 * n, axis=1)
    acov = np.fft.irfft(f * np.conj(f), axis=1)[:, :n].mean(axis=0) / n
    rho = acov / acov[0]
    tau = -1.0
    for k in range(0, n - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair < 0:
            break
        tau += 2.0 * pair
    tau = max(tau, 1.0 / np.log10(m * n + 10))
    return float(min(m * n / tau, m * n))


def dic(deviance_draws, deviance_at_mean: float) -> dict:
    """DIC = mean deviance + pD, pD = mean deviance - deviance at posterior means."""
    d = np.asarray(deviance_draws, dtype=float).ravel()
    if d.size == 0:
        raise ValueError("no deviance draws")
    dbar = float(d.mean())
    pd = dbar - float(deviance_at_mean)
    return {"dic": dbar + pd, "pD": pd, "Dbar": dbar, "Dhat": float(deviance_at_mean)}


def summarize_chains(chains) -> dict:
    """Mean, sd, quantiles, R-hat and effective size for one (m, n) array."""
    x = np.asarray(chains, dtype=float)
    flat = x.ravel()
    q = np.quantile(flat, SUMMARY_QUANTILES)
    out = {"mean": float(flat.mean()), "sd": float(flat.std(ddof=1)) if flat.size > 1 else 0.0}
    for p, v in zip(SUMMARY_QUANTILES, q):
        out[f"{100 * p:g}%"] = float(v)
    out["Rhat"] = gelman_rubin(x) if x.shape[0] >= 2 and x.shape[1] >= 10 else float("nan")
    out["n_eff"] = effective_size(x)
    return out


def split_cells(gauged_cells, val_fraction: float, seed: int):
    """Random estimation/validation split of gauged cells; both parts sorted."""
    cells = np.unique(np.asarray(gauged_cells, dtype=np.int64))
    if cells.size < 2:
        raise ValueError("need at least 2 gauged cells to split")
    if not 0 < val_fraction < 1:
        raise ValueError("val_fraction must lie in (0, 1)")
    n_val = int(round(val_fraction * cells.size))
    n_val = min(max(n_val, 1), cells.size - 1)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(cells)
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])
