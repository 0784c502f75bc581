"""Numerical laboratory for crosslingual consistency of finite prompted models."""

from xlconsist.core import (
    DIVERGENCE_KINDS,
    INFINITE_DIVERGENCE,
    LOG_EPS,
    DivergenceSpec,
    LogDist,
    StochasticKernel,
    StructuralError,
    Temperature,
    anneal,
    compose,
    embed,
    entropy,
    f_divergence,
    forward_kl,
    is_invertible_pair,
    pushforward,
    round_trip,
    total_variation,
)

__version__ = "0.1.0"
