"""Input checks shared by the estimator and the CLI."""

from __future__ import annotations

import numbers
from typing import Iterable

import numpy as np

from .learning import Model
from .sim_kernel import Observation, SimConfig


def check_sim_config(X) -> SimConfig:
    """Accept a SimConfig, None (defaults) or a mapping of SimConfig fields."""
    if X is None:
        return SimConfig()
    if isinstance(X, SimConfig):
        return X
    if isinstance(X, dict):
        return SimConfig(**X)
    raise TypeError(f"expected a SimConfig, a dict of its fields or None, got {type(X).__name__}")


def check_observations(X) -> list[Observation]:
    if isinstance(X, Observation):
        return [X]
    if not isinstance(X, Iterable):
        raise TypeError(f"expected a sequence of Observation, got {type(X).__name__}")
    obs = list(X)
    bad = [type(o).__name__ for o in obs if not isinstance(o, Observation)]
    if bad:
        raise TypeError(f"expected Observation items, got {sorted(set(bad))}")
    return obs


def check_seed(random_state) -> int:
    """Map ``random_state`` onto a 64-bit integer master seed."""
    if random_state is None:
        return int(np.random.SeedSequence().entropy % 2**64)
    if isinstance(random_state, numbers.Integral):
        if not 0 <= int(random_state) < 2**64:
            raise ValueError(f"random_state must fit in 64 bits, got {random_state}")
        return int(random_state)
    if isinstance(random_state, np.random.Generator):
        return int(random_state.integers(2**63))
    raise TypeError(f"random_state must be None, an int or a Generator, got {type(random_state).__name__}")


def check_model(model) -> Model:
    return Model.parse(model)


def check_positive_int(value, name: str) -> int:
    if not isinstance(value, numbers.Integral) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)
