"""Speed-dependent energy and CO2 emission models.

Units are fixed across the package: speed in km/h, distance in km, energy in
kWh and emissions in grams. Both models are rates per kilometre; conversion to
per-section quantities happens in :mod:`pheballoc.utility`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Mapping, Sequence

import numpy as np

from .exceptions import ConfigError, DomainError

DEFAULT_VALID_RANGE = (5.0, 100.0)

EMISSION_COEFFICIENTS = ("a", "b", "c", "d", "e", "f", "g")


def parse_number(value: Any) -> float:
    """Parse a config number given as a number, a decimal/rational string or a pair.

    >>> parse_number("22/28777") == 22 / 28777
    True
    >>> parse_number([-213, 2599]) == -213 / 2599
    True
    """
    if isinstance(value, bool):
        raise ConfigError(f"expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(Fraction(value.strip()))
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"cannot parse number {value!r}") from exc
    if isinstance(value, (list, tuple)) and len(value) == 2:
        num, den = (parse_number(v) for v in value)
        if den == 0:
            raise ConfigError(f"zero denominator in rational pair {value!r}")
        return num / den
    raise ConfigError(f"expected a number, got {value!r}")


def _check_range(valid_range: Sequence[float]) -> tuple[float, float]:
    lo, hi = (float(v) for v in valid_range)
    if not lo < hi:
        raise ConfigError(f"valid_range must satisfy lo < hi, got [{lo}, {hi}]")
    return lo, hi


def _check_speed(s, valid_range: tuple[float, float]) -> np.ndarray:
    arr = np.asarray(s, dtype=float)
    lo, hi = valid_range
    if np.any(~np.isfinite(arr)) or np.any(arr < lo) or np.any(arr > hi):
        raise DomainError(f"speed {s!r} km/h outside valid range [{lo}, {hi}] km/h")
    return arr


def _scalar_or_array(arr: np.ndarray):
    return float(arr) if arr.ndim == 0 else arr


@dataclass(frozen=True)
class EnergyModel:
    """Quadratic electrical energy consumption ``e(s) = alpha0 s^2 + alpha1 s + alpha2`` in kWh/km.

    The defaults are the least-squares fit for a BYD electric bus. A constant
    model (``alpha0 = alpha1 = 0``) is allowed since it is still convex.
    """

    alpha0: float = 22 / 28777
    alpha1: float = -213 / 2599
    alpha2: float = 2384 / 783
    valid_range: tuple[float, float] = DEFAULT_VALID_RANGE

    def __post_init__(self):
        object.__setattr__(self, "valid_range", _check_range(self.valid_range))
        if self.alpha0 < 0:
            raise ConfigError(f"alpha0 must be >= 0 for a convex model, got {self.alpha0}")
        lo, hi = self.valid_range
        candidates = [lo, hi]
        if self.alpha0 > 0:
            vertex = -self.alpha1 / (2 * self.alpha0)
            if lo < vertex < hi:
                candidates.append(vertex)
        if min(self._raw(s) for s in candidates) <= 0:
            raise ConfigError(f"energy model is not positive on [{lo}, {hi}] km/h")

    def _raw(self, s):
        return (self.alpha0 * s + self.alpha1) * s + self.alpha2

    @property
    def vertex(self) -> float:
        """Speed of minimum consumption (only meaningful for ``alpha0 > 0``)."""
        return -self.alpha1 / (2 * self.alpha0)

    @classmethod
    def from_config(cls, block: Mapping[str, Any] | None) -> "EnergyModel":
        block = dict(block or {})
        kwargs: dict[str, Any] = {}
        for key in ("alpha0", "alpha1", "alpha2"):
            if key in block:
                kwargs[key] = parse_number(block.pop(key))
        if "valid_range" in block:
            kwargs["valid_range"] = tuple(parse_number(v) for v in block.pop("valid_range"))
        if block:
            raise ConfigError(f"unknown energy model keys: {sorted(block)}")
        return cls(**kwargs)

    def to_config(self) -> dict:
        return {
            "alpha0": self.alpha0,
            "alpha1": self.alpha1,
            "alpha2": self.alpha2,
            "valid_range": list(self.valid_range),
        }


@dataclass(frozen=True)
class EmissionModel:
    """Average-speed CO2 model ``h(s) = k (a + b s + ... + g s^6) / s`` in g/km.

    No default coefficients are provided: the vehicle-class table has to be
    supplied by the caller.
    """

    a: float
    b: float = 0.0
    c: float = 0.0
    d: float = 0.0
    e: float = 0.0
    f: float = 0.0
    g: float = 0.0
    k: float = 1.0
    valid_range: tuple[float, float] = DEFAULT_VALID_RANGE
    _poly: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        lo, hi = _check_range(self.valid_range)
        object.__setattr__(self, "valid_range", (lo, hi))
        if lo <= 0:
            raise ConfigError(f"emission model needs a positive lower speed bound, got {lo}")
        coeffs = np.array([getattr(self, name) for name in EMISSION_COEFFICIENTS], dtype=float)
        object.__setattr__(self, "_poly", coeffs)
        grid = np.linspace(lo, hi, 2001)
        if np.any(self._raw(grid) <= 0):
            raise ConfigError(f"emission model is not positive on [{lo}, {hi}] km/h")

    def _raw(self, s):
        return self.k * np.polynomial.polynomial.polyval(s, self._poly) / s

    @property
    def coefficients(self) -> tuple[float, ...]:
        return tuple(float(c) for c in self._poly)

    @classmethod
    def from_config(cls, block: Mapping[str, Any] | None) -> "EmissionModel":
        if not block:
            raise ConfigError("an emission model coefficient table is required")
        block = dict(block)
        kwargs: dict[str, Any] = {}
        if "coefficients" in block:
            coeffs = block.pop("coefficients")
            if not 1 <= len(coeffs) <= 7:
                raise ConfigError("emission 'coefficients' must list 1 to 7 values (a..g)")
            kwargs.update(zip(EMISSION_COEFFICIENTS, (parse_number(c) for c in coeffs)))
        for key in (*EMISSION_COEFFICIENTS, "k"):
            if key in block:
                kwargs[key] = parse_number(block.pop(key))
        if "valid_range" in block:
            kwargs["valid_range"] = tuple(parse_number(v) for v in block.pop("valid_range"))
        block.pop("label", None)
        if block:
            raise ConfigError(f"unknown emission model keys: {sorted(block)}")
        if "a" not in kwargs:
            raise ConfigError("emission model requires at least coefficient 'a'")
        return cls(**kwargs)

    def to_config(self) -> dict:
        return {
            "coefficients": list(self.coefficients),
            "k": self.k,
            "valid_range": list(self.valid_range),
        }


def energy_per_km(model: EnergyModel, s):
    """Electrical energy in kWh/km at speed ``s`` km/h."""
    arr = _check_speed(s, model.valid_range)
    return _scalar_or_array(model._raw(arr))


def emission_rate(model: EmissionModel, s):
    """CO2 emission rate in g/km at speed ``s`` km/h."""
    arr = _check_speed(s, model.valid_range)
    if np.any(arr <= 0):
        raise DomainError(f"speed must be positive, got {s!r}")
    return _scalar_or_array(model._raw(arr))


# Synthetic diesel-bus-like table used by the shipped fixtures. It is NOT a
# published vehicle-class table. Its speed dependence is deliberately steep
# (emission/energy ratio falls roughly like exp(-s/10) up to ~60 km/h) so the
# fixture allocation problem is well conditioned.
SYNTHETIC_BUS_EMISSIONS = {
    "label": "synthetic steep diesel-bus-like table (not a published emission-factor table)",
    "coefficients": [76150.0, -3168.0, 43.06, -0.1816, 0.0, 0.0, 0.0],
    "k": 1.0,
    "valid_range": [5.0, 100.0],
}


def synthetic_emission_model() -> EmissionModel:
    return EmissionModel.from_config(SYNTHETIC_BUS_EMISSIONS)
