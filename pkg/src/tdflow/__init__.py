"""Minimizing-movement schemes for gradient flows of time-dependent energies."""

from .metric_core import PLUS_INF, ProxResult, is_infinite, moreau_yosida_value, prox
from .wasserstein1d import EnergyTerms, QuantileMeasure, w2_distance

__version__ = "0.1.0"

__all__ = [
    "PLUS_INF",
    "EnergyTerms",
    "ProxResult",
    "QuantileMeasure",
    "is_infinite",
    "moreau_yosida_value",
    "prox",
    "w2_distance",
]
