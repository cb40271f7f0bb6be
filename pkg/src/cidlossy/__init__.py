"""Finite-alphabet toolkit for content identification with lossy recovery.

Computes the first-order rate-distortion region, strong-converse exponents,
and biometrical-identification asymptotics of the three-phase
enrollment / identification / lossy-recovery system, and verifies them
against Monte Carlo simulation and exact small-instance oracles.

All information quantities are in nats unless stated otherwise.
"""

from cidlossy.prob_core import (
    Channel,
    FiniteRandomVariable,
    Pmf,
    SystemTriple,
    ValidationError,
    compose_triple,
)

__version__ = "0.1.0"

__all__ = [
    "Channel",
    "FiniteRandomVariable",
    "Pmf",
    "SystemTriple",
    "ValidationError",
    "compose_triple",
    "__version__",
]
