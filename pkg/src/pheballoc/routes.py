"""Bus routes, route files and one-second discretisation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .exceptions import RouteFileError
from .models import DEFAULT_VALID_RANGE

SECTION_SECONDS = 1.0


@dataclass(frozen=True)
class RouteSegment:
    """Stretch of road with a constant speed limit. ``length`` in km, ``speed_limit`` in km/h."""

    length: float
    speed_limit: float

    def __post_init__(self):
        if not (math.isfinite(self.length) and self.length > 0):
            raise ValueError(f"segment length must be > 0 km, got {self.length}")
        if not (math.isfinite(self.speed_limit) and self.speed_limit > 0):
            raise ValueError(f"segment speed limit must be > 0 km/h, got {self.speed_limit}")


@dataclass(frozen=True)
class Route:
    bus_id: str
    segments: tuple[RouteSegment, ...]

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise ValueError(f"route {self.bus_id!r} has no segments")

    @property
    def length(self) -> float:
        return math.fsum(seg.length for seg in self.segments)


@dataclass(frozen=True, eq=False)
class SectionedRoute:
    """A route cut into the sections a bus covers in one second at the speed limit.

    The last section of a segment may be shorter than one second of travel so
    that segment lengths are conserved.
    """

    bus_id: str
    lengths: np.ndarray
    speeds: np.ndarray
    parent_segment: np.ndarray

    def __len__(self) -> int:
        return len(self.lengths)

    @property
    def sections(self) -> list[tuple[float, float, int]]:
        return list(zip(self.lengths.tolist(), self.speeds.tolist(), self.parent_segment.tolist()))


def discretize(route: Route, section_seconds: float = SECTION_SECONDS) -> SectionedRoute:
    lengths, speeds, parents = [], [], []
    for idx, seg in enumerate(route.segments):
        step = seg.speed_limit * section_seconds / 3600.0
        n_full = int(math.floor(seg.length / step + 1e-9))
        remainder = seg.length - n_full * step
        seg_lengths = np.full(n_full, step)
        if remainder > 1e-12:
            seg_lengths = np.append(seg_lengths, remainder)
        lengths.append(seg_lengths)
        speeds.append(np.full(len(seg_lengths), seg.speed_limit))
        parents.append(np.full(len(seg_lengths), idx, dtype=np.int64))
    return SectionedRoute(
        bus_id=route.bus_id,
        lengths=np.concatenate(lengths),
        speeds=np.concatenate(speeds),
        parent_segment=np.concatenate(parents),
    )


def validate_fleet(routes: Sequence[Route], valid_range=DEFAULT_VALID_RANGE) -> None:
    lo, hi = valid_range
    seen = set()
    for route in routes:
        if route.bus_id in seen:
            raise RouteFileError(f"duplicate bus_id {route.bus_id!r}")
        seen.add(route.bus_id)
        for j, seg in enumerate(route.segments):
            if not lo <= seg.speed_limit <= hi:
                raise RouteFileError(
                    f"bus {route.bus_id!r} segment {j}: speed {seg.speed_limit} km/h "
                    f"outside model range [{lo}, {hi}]"
                )


def _field(obj, key, where):
    if not isinstance(obj, dict) or key not in obj:
        raise RouteFileError(f"{where}: missing field {key!r}")
    return obj[key]


def parse_fleet(data, valid_range=DEFAULT_VALID_RANGE, source: str = "<fleet>") -> list[Route]:
    fleet = _field(data, "fleet", source)
    if not isinstance(fleet, list) or not fleet:
        raise RouteFileError(f"{source}: 'fleet' must be a non-empty list")
    routes = []
    for i, entry in enumerate(fleet):
        where = f"{source}: fleet[{i}]"
        bus_id = _field(entry, "bus_id", where)
        if not isinstance(bus_id, str) or not bus_id:
            raise RouteFileError(f"{where}.bus_id: expected a non-empty string")
        raw_segments = _field(entry, "segments", where)
        if not isinstance(raw_segments, list) or not raw_segments:
            raise RouteFileError(f"{where}.segments: expected a non-empty list (bus {bus_id!r})")
        segments = []
        for j, raw in enumerate(raw_segments):
            seg_where = f"{where}.segments[{j}]"
            length = _field(raw, "length_km", seg_where)
            speed = _field(raw, "speed_kmh", seg_where)
            if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in (length, speed)):
                raise RouteFileError(f"{seg_where}: length_km and speed_kmh must be numbers")
            try:
                segments.append(RouteSegment(float(length), float(speed)))
            except ValueError as exc:
                raise RouteFileError(f"{seg_where} (bus {bus_id!r}): {exc}") from None
        routes.append(Route(bus_id, tuple(segments)))
    validate_fleet(routes, valid_range)
    return routes


def load_fleet(path, valid_range=DEFAULT_VALID_RANGE) -> list[Route]:
    """Read and validate a JSON route file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise RouteFileError(f"cannot read route file {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise RouteFileError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return parse_fleet(data, valid_range, source=str(path))


def fleet_to_json(routes: Iterable[Route]) -> dict:
    return {
        "fleet": [
            {
                "bus_id": r.bus_id,
                "segments": [{"length_km": s.length, "speed_kmh": s.speed_limit} for s in r.segments],
            }
            for r in routes
        ]
    }


def generate_fleet(n_buses: int = 15, seed: int = 0) -> list[Route]:
    """Synthetic urban fleet with heterogeneous speed profiles.

    Every bus gets its own trip length, speed band and speed skew. Speeds are
    drawn from a density growing like ``exp(s / tau)`` so most distance is
    driven near cruising speed. Segments are 5-30 m long with continuous speed
    values so every utility has a fine staircase of slopes.
    """
    if n_buses < 1:
        raise ValueError("n_buses must be >= 1")
    rng = np.random.default_rng(seed)
    routes = []
    for i in range(n_buses):
        trip_km = rng.uniform(25.0, 45.0)
        lo = rng.uniform(5.0, 10.0)
        hi = rng.uniform(50.0, 75.0)
        tau = 40.0 * rng.uniform(0.7, 1.4)
        e_lo, e_hi = math.exp(lo / tau), math.exp(hi / tau)
        segments = []
        total = 0.0
        while total < trip_km:
            length = round(float(rng.uniform(0.005, 0.03)), 4)
            speed = round(tau * math.log(e_lo + float(rng.random()) * (e_hi - e_lo)), 3)
            segments.append(RouteSegment(length, speed))
            total += length
        routes.append(Route(f"bus{i + 1:02d}", tuple(segments)))
    return routes


def fleet_manifest(routes: Sequence[Route], energy_model=None, emission_model=None) -> dict:
    """Per-bus totals computed segment by segment (no discretisation)."""
    buses = []
    for route in routes:
        entry = {
            "bus_id": route.bus_id,
            "n_segments": len(route.segments),
            "total_length_km": math.fsum(s.length for s in route.segments),
        }
        if energy_model is not None:
            entry["total_energy_kwh"] = math.fsum(
                energy_model._raw(s.speed_limit) * s.length for s in route.segments
            )
        if emission_model is not None:
            entry["total_emission_g"] = math.fsum(
                float(emission_model._raw(s.speed_limit)) * s.length for s in route.segments
            )
        buses.append(entry)
    return {"n_buses": len(routes), "buses": buses}
