"""Censored Gaussian space-time model with AR(1) and CAR effects."""
from .car import car_precision, coloring, max_neighbors, rho_upper
from .censoring import CONTINUOUS, DEFAULT_DISCRETIZATION, Discretization, censor, censor_array
from .diagnostics import dic, effective_size, gelman_rubin, split_cells, summarize_chains
from .sampler import (FixedMean, MCMCConfig, ModelData, PosteriorDraws, Priors, deviance, fit,
                      posterior_dic)
from .truncnorm import rtruncnorm

__all__ = [
    "CONTINUOUS", "DEFAULT_DISCRETIZATION", "Discretization", "FixedMean", "MCMCConfig",
    "ModelData", "PosteriorDraws", "Priors", "car_precision", "censor", "censor_array",
    "coloring", "deviance", "dic", "effective_size", "fit", "gelman_rubin", "max_neighbors",
    "posterior_dic", "rho_upper", "rtruncnorm", "split_cells", "summarize_chains",
]
