"""Stochastic flows, pullback measures and exact finite-state oracles."""

import json
from fractions import Fraction

from ._sflow import (
    AlignmentError,
    ConfigError,
    DyadicTime,
    OrderingError,
    PreconditionError,
    SflowError,
    counterexample_verdicts,
    energy_distance,
    experiment_kinds,
    linear_evolve,
    linear_pullback,
    wiener_at,
    wiener_increments,
)
from . import _sflow

__all__ = [
    "AlignmentError",
    "ConfigError",
    "DyadicTime",
    "OrderingError",
    "PreconditionError",
    "SflowError",
    "counterexample_verdicts",
    "energy_distance",
    "experiment_kinds",
    "finite_stationary",
    "linear_evolve",
    "linear_pullback",
    "run_experiment",
    "wiener_at",
    "wiener_increments",
]


def finite_stationary(name):
    """(unique, family) with each measure a list of Fractions."""
    unique, family = _sflow.finite_stationary(name)
    return unique, [[Fraction(q) for q in mu] for mu in family]


def run_experiment(config, jobs=1):
    """Run an experiment from config text or a dict; returns the summary dict."""
    if isinstance(config, dict):
        config = "\n".join(f"{k} = {v}" for k, v in config.items())
    return json.loads(_sflow.run_experiment_json(config, jobs))
