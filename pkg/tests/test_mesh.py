import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slitspiral import meshgen
from slitspiral.errors import MeshError
from slitspiral.mesh import (TriMesh, curvature_tensor, face_gradient, load_mesh, save_obj,
                             vertex_divergence)


def test_unit_square_obj_roundtrip(tmp_path, square):
    p = tmp_path / "sq.obj"
    save_obj(square, p)
    m = load_mesh(p)
    assert (m.n_vertices, m.n_faces) == (4, 2)
    assert len(m.boundary_loops) == 1
    assert m.loop_lengths()[0] == pytest.approx(4.0)


def test_annulus_outer_loop_is_gamma0(flat_annulus):
    loops = flat_annulus.boundary_loops
    assert len(loops) == 2
    r0 = np.linalg.norm(flat_annulus.vertices[loops[0], :2], axis=1)
    assert np.allclose(r0, 1.0, atol=1e-9)


def test_closed_torus_rejected():
    v, f = meshgen.torus()
    with pytest.raises(MeshError, match="genus/boundary requirements violated"):
        TriMesh(v, f)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError, match="mesh not found"):
        load_mesh(tmp_path / "nope.obj")


def test_non_manifold_rejected():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1]], float)
    f = [[0, 1, 2], [1, 0, 3], [0, 1, 4]]
    with pytest.raises(MeshError):
        TriMesh(v, f)


def test_degenerate_face_rejected():
    v = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 1, 0]], float)
    with pytest.raises(MeshError, match="degenerate"):
        TriMesh(v, [[0, 1, 2], [0, 2, 3]])


def test_gradient_of_linear_fields(square, grid):
    g = face_gradient(square, square.vertices[:, 0])
    assert np.allclose(g, [1, 0, 0])
    assert np.allclose(face_gradient(grid, np.full(grid.n_vertices, 3.0)), 0)
    x, y = grid.vertices[:, 0], grid.vertices[:, 1]
    assert np.allclose(face_gradient(grid, x + 2 * y)[:, :2], [1, 2], atol=1e-12)


def test_area_sums(flat_annulus):
    total = flat_annulus.face_areas.sum()
    assert flat_annulus.dual_areas.sum() == pytest.approx(total)
    assert total == pytest.approx(np.pi * (1 - 0.25), rel=2e-2)


def test_planar_curvature_zero(grid):
    assert np.allclose(curvature_tensor(grid).tensor, 0, atol=1e-12)


def test_sphere_curvature(ico):
    k = curvature_tensor(ico).principal_curvatures()
    assert np.all(np.abs(np.abs(k) - 1.0) < 0.05)


def test_cylinder_curvature():
    m = meshgen.cylinder(2.0)
    k = np.sort(np.abs(curvature_tensor(m).principal_curvatures()), axis=1)
    # rims carry one-sided estimates; check the middle band
    z = m.vertices[m.faces].mean(axis=1)[:, 2]
    mid = np.abs(z - z.mean()) < 0.3 * np.ptp(z)
    assert np.all(np.abs(k[mid, 1] - 0.5) < 0.025)
    assert np.all(k[mid, 0] < 0.025)


def test_divergence_of_constant_field(grid):
    X = np.tile([1.0, 0.0, 0.0], (grid.n_faces, 1))
    d = vertex_divergence(grid, X)
    assert np.all(np.abs(d[grid.interior_vertices]) < 1e-6)


def test_divergence_of_radial_field():
    m = meshgen.disk(4.0, h=0.08)
    c = m.vertices[m.faces].mean(axis=1)
    X = c / np.linalg.norm(c, axis=1, keepdims=True)
    d = vertex_divergence(m, X)
    r = np.linalg.norm(m.vertices, axis=1)
    v = int(np.argmin(np.abs(r - 2.0)))
    assert d[v] == pytest.approx(0.5, rel=0.05)


def test_normalized_gradient_divergence_free(grid):
    g = face_gradient(grid, grid.vertices[:, 0])
    X = g / np.linalg.norm(g, axis=1, keepdims=True)
    assert np.all(np.abs(vertex_divergence(grid, X)[grid.interior_vertices]) < 1e-9)


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5), c=st.floats(-5, 5), seed=st.integers(0, 10_000))
def test_linear_gradient_exact_on_random_planar_mesh(a, b, c, seed):
    rng = np.random.default_rng(seed)
    m = meshgen.grid_square(5, 1.0)
    v = m.vertices.copy()
    inner = m.interior_vertices
    v[inner, :2] += rng.uniform(-0.04, 0.04, (len(inner), 2))
    m = TriMesh(v, m.faces)
    g = face_gradient(m, a * v[:, 0] + b * v[:, 1] + c)
    assert np.allclose(g[:, :2], [a, b], atol=1e-9)
