"""Mixing-density estimation for discrete mixtures.

Projection estimators for power-series mixtures (Poisson, negative
binomial, custom series), deconvolution on the integers and mixtures of
discrete uniforms, with exact MISE oracles, minimax bound evaluators and a
seeded simulation harness.
"""

from .mixands import EmpiricalCounts, NoisePmf, PowerSeriesFamily
from .orthopoly import MeasureSpec, orthonormal_basis, recurrence_for
from .projector import (
    estimate_gram,
    estimate_halfline,
    estimate_projection,
    exact_mise,
    phi_matrix,
    project_density,
    variance_bound,
)

__version__ = "0.1.0"

__all__ = [
    "EmpiricalCounts",
    "MeasureSpec",
    "NoisePmf",
    "PowerSeriesFamily",
    "estimate_gram",
    "estimate_halfline",
    "estimate_projection",
    "exact_mise",
    "orthonormal_basis",
    "phi_matrix",
    "project_density",
    "recurrence_for",
    "variance_bound",
]
