"""Annealing-approximation phase diagram of the quantum adiabatic algorithm
for positive 1-in-K SAT and K-NAE SAT."""
from __future__ import annotations

__version__ = "0.1.0"
