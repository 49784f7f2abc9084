"""Lightning-driven rainfall estimation: event scanning, rainfall-lightning
ratios, lightning mean fields and a Bayesian space-time model."""

__version__ = "0.1.0"
