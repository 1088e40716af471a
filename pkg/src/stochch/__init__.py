"""Stochastic Cahn-Hilliard simulations and their sharp-interface references."""
from . import diagnostics, experiments, field_core, hele_shaw, noise, solver
from .errors import *  # noqa: F401,F403

__version__ = "0.1.0"
