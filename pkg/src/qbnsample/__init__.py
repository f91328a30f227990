"""Sampling classical Bayesian nets on classical and simulated quantum hardware."""

from .cbnet import BayesNet, Cpt, Node, PosteriorTable, Query, exact_posterior
from .errors import NetFormatError, NumericError, QbnError

__all__ = [
    "BayesNet",
    "Cpt",
    "Node",
    "PosteriorTable",
    "Query",
    "exact_posterior",
    "NetFormatError",
    "NumericError",
    "QbnError",
]
