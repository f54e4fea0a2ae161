"""Stability, Hopf and simulation toolkit for a within-host virus model with
diffusing virions on a periodic square."""

from .model import (
    TABLE1,
    Equilibrium,
    ParameterError,
    Parameters,
    infected_equilibrium,
    n_crit,
    r_crit,
    reaction_rhs,
    reproduction_ratio,
    uninfected_equilibrium,
)

__version__ = "0.1.0"

__all__ = [
    "TABLE1",
    "Equilibrium",
    "ParameterError",
    "Parameters",
    "infected_equilibrium",
    "n_crit",
    "r_crit",
    "reaction_rhs",
    "reproduction_ratio",
    "uninfected_equilibrium",
]
