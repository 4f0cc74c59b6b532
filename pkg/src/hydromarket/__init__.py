"""Hydrothermal market simulation: centralized stochastic dispatch, spot
price Markov chains, agent bidding policies and Nash-equilibrium search."""

__version__ = "0.1.0"

from .system import SystemModel, load_system, system_from_dict  # noqa: F401
