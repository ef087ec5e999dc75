import numpy as np
import pytest

from slitspiral import meshgen
from slitspiral.errors import SlitSpiralError
from slitspiral.mesh import signed_areas_2d
from slitspiral.slitmap import Anchor, slit_map, slit_quality


def nearest_face(mesh, xy):
    c = mesh.vertices[mesh.faces].mean(axis=1)[:, :2]
    return int(np.argmin(np.linalg.norm(c - np.asarray(xy), axis=1)))


def test_flat_annulus_is_identity(flat_annulus):
    dom = slit_map(flat_annulus, Anchor.on_boundary(1))
    assert dom.mode == "annulus"
    assert dom.inner_radius == pytest.approx(0.5, abs=1e-3)
    r_img = np.linalg.norm(dom.positions, axis=1)
    r_3d = np.linalg.norm(flat_annulus.vertices[:, :2], axis=1)
    assert np.max(np.abs(r_img - r_3d)) < 5e-3
    q = slit_quality(flat_annulus, dom)
    assert np.median(q.distortion) == pytest.approx(1.0, abs=0.02)
    assert q.inverted_faces == 0


def test_hole_free_disk():
    m = meshgen.disk(1.0, h=0.08)
    dom = slit_map(m, Anchor.interior(nearest_face(m, (0, 0))))
    r = np.linalg.norm(dom.positions, axis=1)
    assert np.allclose(r[m.boundary_loops[0]], 1.0, atol=1e-9)
    assert not dom.slits
    # radial monotone: image radius increases with 3D radius
    r3 = np.linalg.norm(m.vertices[:, :2], axis=1)
    order = np.argsort(r3)
    assert np.corrcoef(r3[order], r[order])[0, 1] > 0.999


def test_three_hole_slits(small_three_hole):
    m = small_three_hole
    dom = slit_map(m, Anchor.interior(nearest_face(m, (0, 0))))
    q = slit_quality(m, dom)
    assert len(dom.slits) == 3
    assert q.outer_radius_error < 1e-6
    assert max(q.slit_spread.values()) < 1e-3
    assert max(abs(v) for v in q.flux_residuals.values()) < 1e-8
    assert np.all(signed_areas_2d(dom.positions, m.faces) > 0)


def test_fault_injection_flags_face(flat_annulus):
    dom = slit_map(flat_annulus, Anchor.on_boundary(1))
    pos = dom.positions.copy()
    v = flat_annulus.interior_vertices[0]
    pos[v] += 0.2 * flat_annulus.mean_edge_length * np.array([3.0, 2.0])
    q = slit_quality(flat_annulus, dom, positions=pos, threshold=1.5)
    assert np.any(np.isin(q.flagged_faces, flat_annulus.faces_of(v)))


def test_disk_mode_anchor_near_boundary_rejected(flat_annulus):
    loop = flat_annulus.boundary_loops[0]
    f = flat_annulus.faces_of(loop[0])[0]
    with pytest.raises(SlitSpiralError):
        slit_map(flat_annulus, Anchor.interior(int(f)))


def test_outer_loop_is_not_an_annulus_anchor(flat_annulus):
    with pytest.raises((SlitSpiralError, ValueError)):
        slit_map(flat_annulus, Anchor.on_boundary(0))
