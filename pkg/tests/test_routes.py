import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pheballoc import Route, RouteFileError, RouteSegment, data_path, discretize, generate_fleet, load_fleet
from pheballoc.routes import fleet_to_json, parse_fleet


def write(tmp_path, payload, name="fleet.json"):
    path = tmp_path / name
    path.write_text(payload if isinstance(payload, str) else json.dumps(payload))
    return path


def test_load_minimal(tmp_path):
    path = write(tmp_path, {"fleet": [{"bus_id": "b1", "segments": [{"length_km": 1, "speed_kmh": 50}]}]})
    routes = load_fleet(path)
    assert len(routes) == 1 and routes[0].segments == (RouteSegment(1.0, 50.0),)


def test_duplicate_bus_id(tmp_path):
    seg = [{"length_km": 1, "speed_kmh": 50}]
    path = write(tmp_path, {"fleet": [{"bus_id": "b7", "segments": seg}, {"bus_id": "b7", "segments": seg}]})
    with pytest.raises(RouteFileError, match="b7"):
        load_fleet(path)


def test_parse_error_has_position(tmp_path):
    path = write(tmp_path, '{"fleet": [\n  {"bus_id": "b1",, }\n]}')
    with pytest.raises(RouteFileError, match=r"fleet\.json:2:\d+"):
        load_fleet(path)


@pytest.mark.parametrize(
    "segment, match",
    [
        ({"length_km": 1}, r"fleet\[0\]\.segments\[1\].*speed_kmh"),
        ({"length_km": -1, "speed_kmh": 30}, r"segments\[1\].*length"),
        ({"length_km": 1, "speed_kmh": 140}, r"segment 1.*140"),
        ({"length_km": "1", "speed_kmh": 30}, r"segments\[1\].*numbers"),
    ],
)
def test_validation_names_segment(tmp_path, segment, match):
    payload = {"fleet": [{"bus_id": "b1", "segments": [{"length_km": 1, "speed_kmh": 50}, segment]}]}
    with pytest.raises(RouteFileError, match=match):
        load_fleet(write(tmp_path, payload))


def test_missing_file(tmp_path):
    with pytest.raises(RouteFileError, match="cannot read"):
        load_fleet(tmp_path / "nope.json")


def test_fixture_matches_manifest():
    routes = load_fleet(data_path("fleet15.json"))
    manifest = json.loads(data_path("fleet15_manifest.json").read_text())
    assert len(routes) == 15 == manifest["n_buses"]
    for r, m in zip(routes, manifest["buses"]):
        assert r.bus_id == m["bus_id"]
        assert len(r.segments) == m["n_segments"]
        assert r.length == pytest.approx(m["total_length_km"], abs=1e-9)


def test_fixture_is_reproducible():
    shipped = json.loads(data_path("fleet15.json").read_text())
    assert json.loads(json.dumps(fleet_to_json(generate_fleet(15, 0)))) == shipped


def test_discretize_one_second():
    sr = discretize(Route("b", (RouteSegment(50 / 3600, 50.0),)))
    assert len(sr) == 1 and sr.lengths[0] == pytest.approx(50 / 3600)


def test_discretize_hundred_sections():
    sr = discretize(Route("b", (RouteSegment(1.0, 36.0),)))
    assert len(sr) == 100
    assert np.allclose(sr.lengths, 0.01)


def test_discretize_remainder():
    sr = discretize(Route("b", (RouteSegment(0.025, 36.0),)))
    assert len(sr) == 3
    assert sr.lengths[:2] == pytest.approx([0.01, 0.01])
    assert sr.lengths[2] == pytest.approx(0.005)
    assert sr.sections[2][1:] == (36.0, 0)


def test_cyclic_route_representable():
    seg = RouteSegment(0.5, 30.0)
    sr = discretize(Route("loop", (seg, RouteSegment(0.2, 60.0), seg)))
    assert sr.parent_segment[0] == 0 and sr.parent_segment[-1] == 2
    assert sr.lengths.sum() == pytest.approx(1.2, abs=1e-9)


segments = st.lists(
    st.builds(RouteSegment, st.floats(1e-4, 5.0), st.floats(5.0, 100.0)), min_size=1, max_size=20
)


@given(segments)
def test_length_conservation(segs):
    route = Route("b", tuple(segs))
    sr = discretize(route)
    assert math.fsum(sr.lengths) == pytest.approx(route.length, abs=1e-9)
    for j, seg in enumerate(segs):
        own = sr.lengths[sr.parent_segment == j]
        assert math.fsum(own) == pytest.approx(seg.length, abs=1e-9)
        full = own[:-1]
        assert np.allclose(full, seg.speed_limit / 3600.0, rtol=1e-12)
        assert own[-1] <= seg.speed_limit / 3600.0 * (1 + 1e-9)


@given(segments)
def test_discretize_deterministic(segs):
    a, b = discretize(Route("b", tuple(segs))), discretize(Route("b", tuple(segs)))
    assert np.array_equal(a.lengths, b.lengths) and np.array_equal(a.parent_segment, b.parent_segment)
    assert np.all(np.diff(a.parent_segment) >= 0)


def test_generator_heterogeneous():
    routes = generate_fleet(15, 0)
    lengths = [r.length for r in routes]
    assert len({r.bus_id for r in routes}) == 15
    assert max(lengths) - min(lengths) > 5.0
    with pytest.raises(ValueError):
        generate_fleet(0)


def test_parse_fleet_needs_list():
    with pytest.raises(RouteFileError, match="non-empty list"):
        parse_fleet({"fleet": []})
