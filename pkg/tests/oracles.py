"""Independent reference implementations used as test oracles."""
import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import cdist


def brute_dbscan(points, radius, min_points):
    """Dense-distance density clustering: core graph components, border
    points to their nearest core (lowest index on ties), rest noise."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    if n == 0:
        return np.zeros(0, dtype=int)
    d = cdist(pts, pts)
    within = d <= radius
    core = within.sum(axis=1) >= min_points
    labels = np.full(n, -1)
    if core.any():
        ci = np.flatnonzero(core)
        adj = csr_matrix(within[np.ix_(ci, ci)])
        _, comp = connected_components(adj, directed=False)
        labels[ci] = comp
        for p in np.flatnonzero(~core):
            near = ci[within[p, ci]]
            if near.size:
                labels[p] = labels[near[np.argmin(d[p, near])]]
    return labels


def canonical(labels):
    """Relabel clusters by first appearance so partitions compare directly."""
    out = np.full(len(labels), -1)
    mapping = {}
    for i, l in enumerate(labels):
        if l < 0:
            continue
        out[i] = mapping.setdefault(l, len(mapping))
    return out


def random_point_set(rng, n_max=200):
    """Mixture of blobs plus uniform noise, standardized."""
    n = int(rng.integers(20, n_max + 1))
    k = int(rng.integers(1, 5))
    centres = rng.uniform(-3, 3, size=(k, 3))
    which = rng.integers(0, k + 1, size=n)
    pts = np.where((which < k)[:, None], centres[np.minimum(which, k - 1)] + 0.25 * rng.standard_normal((n, 3)),
                   rng.uniform(-4, 4, size=(n, 3)))
    return (pts - pts.mean(axis=0)) / pts.std(axis=0, ddof=1)


def conjugate_precision_case(seed, n_cells=9, T=30, prec_y=4.0, draws=5000):
    """Sampler draws of prec_y with every other unknown pinned, plus the exact
    Gamma posterior (shape, rate) they should follow."""
    from lightrain.bayes.sampler import FixedMean, MCMCConfig, ModelData, Priors, fit
    rng = np.random.default_rng(seed)
    mu = rng.uniform(1.0, 2.0, size=(T, n_cells))
    y_log = mu + rng.standard_normal(mu.shape) / np.sqrt(prec_y)
    y_log = np.maximum(y_log, np.log(2.0) + 1e-9)  # keep every reading continuous (>= 1 mm)
    obs = np.expm1(y_log)
    B = np.zeros((n_cells, n_cells))
    B[np.arange(n_cells - 1), np.arange(1, n_cells)] = 1
    B = B + B.T
    fixed = {"Tt": 0.0, "Sp": 0.0, "alpha": 0.5, "prec_eta": 1.0, "prec_s": 1.0, "rho_s": 0.1}
    data = ModelData(obs, B, FixedMean(mu), fixed=fixed)
    pr = Priors()
    out = fit(data, pr, MCMCConfig(chains=1, iterations=draws, burnin=0, thin=1, seed=seed))
    resid = np.log1p(obs) - mu
    shape = pr.gamma_shape + 0.5 * resid.size
    rate = pr.gamma_rate + 0.5 * float(np.sum(resid ** 2))
    return out.flat("prec_y"), shape, rate
