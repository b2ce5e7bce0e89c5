"""Input validation helpers shared by the estimators and the public functions."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .exceptions import ConfigError, DomainError
from .routes import Route, SectionedRoute, discretize
from .utility import UtilityFunction


def check_e_av(e_av) -> float:
    """Return ``e_av`` as a float, rejecting negative or non-finite values."""
    try:
        value = float(e_av)
    except (TypeError, ValueError):
        raise ConfigError(f"e_av must be a number, got {e_av!r}") from None
    if not math.isfinite(value) or value < 0:
        raise ConfigError(f"e_av must be a finite number >= 0, got {e_av!r}")
    return value


def check_utilities(utilities) -> tuple[UtilityFunction, ...]:
    """Accept a non-empty sequence of utilities with unique bus ids."""
    if isinstance(utilities, UtilityFunction):
        utilities = [utilities]
    utilities = tuple(utilities)
    if not utilities:
        raise ConfigError("need at least one utility function")
    for u in utilities:
        if not isinstance(u, UtilityFunction):
            raise ConfigError(f"expected UtilityFunction, got {type(u).__name__}")
    ids = [u.bus_id for u in utilities]
    if len(set(ids)) != len(ids):
        raise ConfigError("utility bus ids must be unique")
    return utilities


def check_routes(routes) -> list[SectionedRoute]:
    """Discretise :class:`Route` objects and pass :class:`SectionedRoute` through."""
    if isinstance(routes, (Route, SectionedRoute)):
        routes = [routes]
    out = []
    for r in routes:
        if isinstance(r, Route):
            out.append(discretize(r))
        elif isinstance(r, SectionedRoute):
            out.append(r)
        else:
            raise ConfigError(f"expected Route or SectionedRoute, got {type(r).__name__}")
    if not out:
        raise ConfigError("need at least one route")
    return out


def check_allocation(d, capacities: Sequence[float], atol: float = 1e-9) -> np.ndarray:
    """1-D float allocation with ``0 <= d_i <= capacity_i`` (up to ``atol``)."""
    d = np.asarray(d, dtype=float)
    caps = np.asarray(capacities, dtype=float)
    if d.ndim != 1 or d.shape != caps.shape:
        raise ConfigError(f"allocation must be a vector of length {len(caps)}, got shape {d.shape}")
    if np.any(~np.isfinite(d)):
        raise DomainError("allocation contains non-finite values")
    if np.any(d < -atol) or np.any(d > caps + atol * np.maximum(caps, 1.0)):
        raise DomainError("allocation outside [0, capacity] for some bus")
    return np.clip(d, 0.0, caps)
