"""Deterministic test and demo meshes.

Planar domains are triangulated by Delaunay over boundary samples plus an
interior hexagonal lattice, then lifted to 3D through a height function when
a freeform surface is wanted.
"""

from __future__ import annotations

from importlib import resources

import numpy as np
from scipy.spatial import Delaunay

from .mesh import TriMesh, load_mesh, save_obj


def _circle(center, radius, h):
    n = max(8, int(np.ceil(2 * np.pi * radius / h)))
    t = 2 * np.pi * np.arange(n) / n
    return np.column_stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)])


def _hex_lattice(xmin, xmax, ymin, ymax, h):
    dy = h * np.sqrt(3) / 2
    ys = np.arange(ymin, ymax + dy, dy)
    pts = []
    for i, y in enumerate(ys):
        xs = np.arange(xmin + (h / 2 if i % 2 else 0.0), xmax + h, h)
        pts.append(np.column_stack([xs, np.full_like(xs, y)]))
    return np.vstack(pts)


def planar_domain(outer_radius, holes=(), h=None, inner_radius=None, smooth=5):
    """Triangulate a disk of ``outer_radius`` minus circular ``holes``.

    ``holes`` is a sequence of ``(cx, cy, r)``. ``inner_radius`` is shorthand
    for one concentric hole. Returns ``(points2d, faces)`` with ccw faces.
    """
    holes = list(holes)
    if inner_radius is not None:
        holes.insert(0, (0.0, 0.0, inner_radius))
    if h is None:
        h = outer_radius / 20
    circles = [((0.0, 0.0), outer_radius)] + [((cx, cy), r) for cx, cy, r in holes]
    bnd = [_circle(c, r, h) for c, r in circles]
    lat = _hex_lattice(-outer_radius, outer_radius, -outer_radius, outer_radius, h)
    margin = 0.7 * h
    keep = np.hypot(lat[:, 0], lat[:, 1]) < outer_radius - margin
    for cx, cy, r in holes:
        keep &= np.hypot(lat[:, 0] - cx, lat[:, 1] - cy) > r + margin
    lat = lat[keep]
    pts = np.vstack(bnd + [lat])
    nb = sum(len(b) for b in bnd)
    faces = _carve(pts, holes, outer_radius)
    pts = _smooth_interior(pts, faces, nb, smooth)
    faces = _carve(pts, holes, outer_radius)
    return pts, faces


def _carve(pts, holes, outer_radius):
    tri = Delaunay(pts).simplices
    c = pts[tri].mean(axis=1)
    keep = np.hypot(c[:, 0], c[:, 1]) < outer_radius
    for cx, cy, r in holes:
        keep &= np.hypot(c[:, 0] - cx, c[:, 1] - cy) > r
    tri = tri[keep]
    a = pts[tri[:, 1]] - pts[tri[:, 0]]
    b = pts[tri[:, 2]] - pts[tri[:, 0]]
    cw = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0] < 0
    tri[cw] = tri[cw][:, [0, 2, 1]]
    return tri


def _smooth_interior(pts, faces, n_fixed, iters):
    pts = pts.copy()
    n = len(pts)
    e = np.vstack([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e = np.unique(np.sort(e, axis=1), axis=0)
    deg = np.bincount(e.ravel(), minlength=n).astype(float)
    for _ in range(iters):
        acc = np.zeros_like(pts)
        np.add.at(acc, e[:, 0], pts[e[:, 1]])
        np.add.at(acc, e[:, 1], pts[e[:, 0]])
        new = acc / np.maximum(deg, 1)[:, None]
        pts[n_fixed:] = new[n_fixed:]
    return pts


def lift(points2d, height=None):
    if height is None:
        return np.column_stack([points2d, np.zeros(len(points2d))])
    return np.column_stack([points2d, height(points2d[:, 0], points2d[:, 1])])


def unit_square():
    v = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], float)
    return TriMesh(v, [[0, 1, 2], [0, 2, 3]])


def grid_square(n=10, size=1.0):
    """Regular ``n x n`` grid on ``[0, size]^2`` split into triangles."""
    x = np.linspace(0, size, n + 1)
    X, Y = np.meshgrid(x, x, indexing="xy")
    v = np.column_stack([X.ravel(), Y.ravel(), np.zeros(X.size)])
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    a, b = idx[:-1, :-1].ravel(), idx[:-1, 1:].ravel()
    c, d = idx[1:, 1:].ravel(), idx[1:, :-1].ravel()
    f = np.vstack([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    return TriMesh(v, f)


def annulus(inner=0.5, outer=1.0, h=None, height=None):
    pts, f = planar_domain(outer, inner_radius=inner, h=h or outer / 20)
    return TriMesh(lift(pts, height), f)


def polar_annulus(inner=0.5, outer=1.0, n_rad=8, n_ang=64):
    """Rotationally symmetric annulus on a polar grid with alternating diagonals."""
    r = np.linspace(inner, outer, n_rad + 1)
    t = 2 * np.pi * np.arange(n_ang) / n_ang
    R, Tt = np.meshgrid(r, t, indexing="ij")
    v = np.column_stack([(R * np.cos(Tt)).ravel(), (R * np.sin(Tt)).ravel(), np.zeros(R.size)])
    idx = np.arange(R.size).reshape(n_rad + 1, n_ang)
    f = []
    for i in range(n_rad):
        for j in range(n_ang):
            a, b = idx[i, j], idx[i, (j + 1) % n_ang]
            c, d = idx[i + 1, (j + 1) % n_ang], idx[i + 1, j]
            f += [[a, b, c], [a, c, d]]
    return TriMesh(v, f)


def disk(radius=1.0, h=None, height=None):
    pts, f = planar_domain(radius, h=h or radius / 20)
    return TriMesh(lift(pts, height), f)


THREE_HOLES = ((-22.0, 14.0, 8.0), (24.0, 10.0, 7.0), (2.0, -26.0, 9.0))


def three_hole_disk(radius=60.0, h=None, height=None):
    """Disk of radius 60 mm with three circular holes."""
    pts, f = planar_domain(radius, THREE_HOLES, h=h or radius / 40)
    return TriMesh(lift(pts, height), f)


def freeform_height(x, y):
    """Gentle saddle plus a round boss; curvature stays well above -1/10 mm."""
    boss = 6.0 * np.exp(-((x - 12.0) ** 2 + (y + 8.0) ** 2) / (2 * 14.0 ** 2))
    return 0.004 * (x ** 2 - 0.5 * y ** 2) + boss


FREEFORM_HOLES = ((-20.0, 12.0, 7.0), (18.0, 22.0, 6.0))


def freeform(radius=50.0, h=None):
    """Curved two-hole patch with a boss feature."""
    pts, f = planar_domain(radius, FREEFORM_HOLES, h=h or radius / 18)
    return TriMesh(lift(pts, freeform_height), f)


def icosphere(subdivisions=3, radius=1.0):
    t = (1 + 5 ** 0.5) / 2
    v = np.array(
        [[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0], [0, -1, t], [0, 1, t],
         [0, -1, -t], [0, 1, -t], [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]], float)
    f = np.array(
        [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11], [1, 5, 9], [5, 11, 4],
         [11, 10, 2], [10, 7, 6], [7, 1, 8], [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8],
         [3, 8, 9], [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]])
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    for _ in range(subdivisions):
        mids = {}
        verts = list(v)

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in mids:
                p = verts[a] + verts[b]
                verts.append(p / np.linalg.norm(p))
                mids[key] = len(verts) - 1
            return mids[key]

        nf = []
        for a, b, c in f:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            nf += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        v, f = np.array(verts), np.array(nf)
    return v * radius, f


def sphere_cap(subdivisions=4, radius=1.0, z_min=-0.5):
    """Open icosphere cap (faces with all vertices above ``z_min * radius``)."""
    v, f = icosphere(subdivisions, radius)
    keep = np.all(v[f][:, :, 2] > z_min * radius, axis=1)
    f = f[keep]
    used = np.unique(f)
    remap = np.full(len(v), -1)
    remap[used] = np.arange(len(used))
    return TriMesh(v[used], remap[f])


def cylinder(radius=2.0, height=4.0, n_ang=96, n_z=48):
    """Open cylinder with outward normals."""
    t = 2 * np.pi * np.arange(n_ang) / n_ang
    z = np.linspace(0, height, n_z + 1)
    Z, Tt = np.meshgrid(z, t, indexing="ij")
    v = np.column_stack([(radius * np.cos(Tt)).ravel(), (radius * np.sin(Tt)).ravel(), Z.ravel()])
    idx = np.arange(Z.size).reshape(n_z + 1, n_ang)
    f = []
    for i in range(n_z):
        for j in range(n_ang):
            a, b = idx[i, j], idx[i, (j + 1) % n_ang]
            c, d = idx[i + 1, (j + 1) % n_ang], idx[i + 1, j]
            f += [[a, b, c], [a, c, d]]
    return TriMesh(v, f, validate=False)


def torus(R=2.0, r=0.5, n=24, m=12):
    u = 2 * np.pi * np.arange(n) / n
    w = 2 * np.pi * np.arange(m) / m
    U, W = np.meshgrid(u, w, indexing="ij")
    v = np.column_stack([
        ((R + r * np.cos(W)) * np.cos(U)).ravel(),
        ((R + r * np.cos(W)) * np.sin(U)).ravel(),
        (r * np.sin(W)).ravel(),
    ])
    idx = np.arange(n * m).reshape(n, m)
    f = []
    for i in range(n):
        for j in range(m):
            a, b = idx[i, j], idx[(i + 1) % n, j]
            c, d = idx[(i + 1) % n, (j + 1) % m], idx[i, (j + 1) % m]
            f += [[a, b, c], [a, c, d]]
    return v, np.array(f)


BUNDLED = {
    "annulus": lambda: annulus(25.0, 60.0, h=3.0),
    "threehole": three_hole_disk,
    "freeform": freeform,
}


def bundled_path(name):
    """Filesystem path of a bundled OBJ mesh."""
    return resources.files("slitspiral") / "data" / f"{name}.obj"


def load_bundled(name):
    if name not in BUNDLED:
        raise KeyError(f"unknown bundled mesh {name!r}; choose from {sorted(BUNDLED)}")
    with resources.as_file(bundled_path(name)) as p:
        return load_mesh(p)


def write_bundled(directory=None):
    """Regenerate the bundled OBJ files (used when refreshing package data)."""
    from pathlib import Path

    directory = Path(directory) if directory else Path(str(resources.files("slitspiral") / "data"))
    directory.mkdir(parents=True, exist_ok=True)
    for name, make in BUNDLED.items():
        save_obj(make(), directory / f"{name}.obj")
