import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slitspiral.errors import InfeasibleError, InputError
from slitspiral.slitmap import Slit
from slitspiral.toolpath import (Toolpath, export_toolpath, extract_isocurves, level_spacing,
                                 load_toolpath, polyline_length, segment_intersections,
                                 synthesize_spiral, to_gcode)


def test_level_spacing_example():
    assert level_spacing(0.0125, 0.2) == pytest.approx(4.0, abs=1e-12)
    assert level_spacing(0.0125, 0.8) == pytest.approx(2 * level_spacing(0.0125, 0.2))
    with pytest.raises(ValueError):
        level_spacing(0.0125, 0.0)
    with pytest.raises(ValueError):
        level_spacing(0.0, 0.2)


def test_isocurve_on_linear_field(grid):
    T = grid.vertices[:, 0]
    curves = extract_isocurves(grid, T, 0.5)
    assert len(curves) == 1 and not curves[0]["closed"]
    assert polyline_length(curves[0]["points"]) == pytest.approx(1.0, abs=1e-9)
    assert np.allclose(curves[0]["points"][:, 0], 0.5)
    assert extract_isocurves(grid, T, 2.0) == []


def test_isocurve_circle(flat_annulus):
    r = np.linalg.norm(flat_annulus.vertices[:, :2], axis=1)
    curves = extract_isocurves(flat_annulus, r, 0.75)
    assert len(curves) == 1 and curves[0]["closed"]
    rr = np.linalg.norm(curves[0]["points"][:, :2], axis=1)
    assert np.all(rr <= 0.75 + 1e-9)
    assert polyline_length(curves[0]["points"], closed=True) == pytest.approx(2 * np.pi * 0.75, rel=5e-3)


@pytest.fixture(scope="module")
def polar_spiral(polar_annulus):
    P = polar_annulus.vertices[:, :2]
    return synthesize_spiral(polar_annulus, P, 0.1, mode="annulus", rho_start=0.5, rho_end=1.0)


def test_spiral_turns_and_spacing(polar_spiral):
    path = polar_spiral
    assert path.meta["turns"] == pytest.approx(5.0)
    cum = np.unwrap(path.phi)
    cum -= cum[0]
    assert np.allclose(path.rho, 0.5 + 0.1 * cum / (2 * np.pi), atol=1e-9)
    assert path.rho[0] == pytest.approx(0.5) and path.rho[-1] == pytest.approx(1.0)
    assert np.all(np.diff(path.rho) >= -1e-12)
    # flat mesh with identity domain: surface points equal the domain points
    inner = path.rho < 0.99  # the outer circle bulges past the polygonal boundary
    assert np.allclose(path.points[inner, :2], path.domain[inner], atol=1e-9)
    assert segment_intersections(path.domain) == 0


def test_spiral_consecutive_faces_adjacent(polar_annulus, polar_spiral):
    # consecutive points share a face, an edge, or (when passing exactly
    # through a mesh vertex) a vertex
    F = polar_annulus.faces
    a, b = polar_spiral.faces[:-1], polar_spiral.faces[1:]
    shared = (F[a][:, :, None] == F[b][:, None, :]).any(axis=(1, 2))
    assert np.all(shared)


def test_spiral_needs_one_turn(polar_annulus):
    P = polar_annulus.vertices[:, :2]
    with pytest.raises(InfeasibleError):
        synthesize_spiral(polar_annulus, P, 0.6, mode="annulus", rho_start=0.5, rho_end=1.0)


def test_spiral_slit_deflection(polar_annulus):
    P = polar_annulus.vertices[:, :2]
    # the undeflected spiral reaches radius 0.73 at angle 0.6 * pi (about 1.885)
    slit = Slit(boundary=2, radius=0.73, start=1.5, end=2.3)
    path = synthesize_spiral(polar_annulus, P, 0.1, mode="annulus", slits=[slit],
                             rho_start=0.5, rho_end=1.0)
    assert len(path.meta["holds"]) == 1
    side = np.sign(path.rho - slit.radius)
    inside = slit.contains(path.phi, 0.0)
    both = inside[:-1] & inside[1:]
    # no segment within the slit's angular extent crosses its radius
    assert np.all(side[:-1][both] * side[1:][both] > 0)
    kind, level, a, b = path.meta["holds"][0]
    assert abs(level - slit.radius) == pytest.approx(0.1 / 8)
    assert segment_intersections(path.domain) == 0
    wide = Slit(boundary=2, radius=0.73, start=0.0, end=2 * np.pi - 0.01)
    with pytest.raises(InfeasibleError):
        synthesize_spiral(polar_annulus, P, 0.1, mode="annulus", slits=[wide],
                          rho_start=0.5, rho_end=1.0)


def _brute_intersections(Q):
    from fractions import Fraction

    def orient(p, q, r):
        v = ((Fraction(q[0]) - Fraction(p[0])) * (Fraction(r[1]) - Fraction(p[1]))
             - (Fraction(q[1]) - Fraction(p[1])) * (Fraction(r[0]) - Fraction(p[0])))
        return (v > 0) - (v < 0)

    def on(p, q, r):
        return min(p[0], q[0]) <= r[0] <= max(p[0], q[0]) and min(p[1], q[1]) <= r[1] <= max(p[1], q[1])

    n = len(Q) - 1
    count = 0
    for i in range(n):
        for j in range(i + 2, n):
            p1, p2, p3, p4 = Q[i], Q[i + 1], Q[j], Q[j + 1]
            d1, d2, d3, d4 = orient(p3, p4, p1), orient(p3, p4, p2), orient(p1, p2, p3), orient(p1, p2, p4)
            if (d1 * d2 < 0 and d3 * d4 < 0) or (d1 == 0 and on(p3, p4, p1)) or \
                    (d2 == 0 and on(p3, p4, p2)) or (d3 == 0 and on(p1, p2, p3)) or (d4 == 0 and on(p1, p2, p4)):
                count += 1
    return count


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(-5, 5), st.integers(-5, 5)), min_size=4, max_size=12))
def test_sweep_matches_brute_force(pts):
    Q = np.array(pts, dtype=float)
    assert segment_intersections(Q) == _brute_intersections(Q)


def test_segment_intersections_examples():
    assert segment_intersections(np.array([[0, 0], [2, 2], [2, 0], [0, 2.0]])) == 1
    assert segment_intersections(np.array([[0, 0], [1, 0], [1, 1], [0, 1.0]])) == 0


def _three_points():
    return Toolpath.from_points([[0, 0, 0], [1, 0, 0], [1, 1, 0]], meta={"config_hash": "abc123"})


def test_gcode_structure():
    g = to_gcode(_three_points(), feed=1200)
    lines = g.splitlines()
    assert sum(ln.startswith("G0 ") for ln in lines) == 1
    assert sum(ln.startswith("G1 ") for ln in lines) == 2
    assert "G21" in lines and "G90" in lines and lines[-1] == "M2"
    assert "(config abc123)" in lines
    assert "F1200.0" in g


def test_csv_and_json_roundtrip(tmp_path, polar_spiral):
    for suffix in ("csv", "json"):
        f = export_toolpath(polar_spiral, tmp_path / f"p.{suffix}")
        back = load_toolpath(f)
        assert np.array_equal(back.points, polar_spiral.points)
        assert np.array_equal(back.faces, polar_spiral.faces)
        assert np.array_equal(back.rho, polar_spiral.rho)
        assert back.meta["delta_T"] == polar_spiral.meta["delta_T"]
    d = json.loads((tmp_path / "p.json").read_text())
    assert {"points", "faces", "bary", "phi", "rho", "turn", "meta"} <= set(d)


def test_bare_csv_and_empty(tmp_path):
    f = tmp_path / "bare.csv"
    f.write_text("x,y,z\n0,0,0\n1,0,0\n")
    back = load_toolpath(f)
    assert back.points.shape == (2, 3) and np.all(back.faces == -1)
    e = tmp_path / "empty.csv"
    e.write_text("x,y,z\n")
    with pytest.raises(InputError):
        load_toolpath(e)
    with pytest.raises(FileNotFoundError):
        load_toolpath(tmp_path / "missing.csv")


def test_svg_export(tmp_path, polar_annulus, polar_spiral):
    f = export_toolpath(polar_spiral, tmp_path / "p.svg", mesh=polar_annulus)
    text = f.read_text()
    assert text.startswith("<svg") or text.startswith("<?xml")
    assert "<polyline" in text
