"""Triangle mesh container, boundary topology and discrete differential operators.

A :class:`TriMesh` holds one connectivity shared by several vertex-position
channels: the 3D surface itself plus optional planar channels (the slit
domain ``"S"`` and the optimized domain ``"H"``). All operators here are pure
functions of a mesh and a channel.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import sparse

from .errors import MeshError

log = logging.getLogger(__name__)

DEGENERATE_REL_AREA = 1e-12


class TriMesh:
    """Oriented, edge-manifold, genus-0 triangle mesh with boundary.

    Parameters
    ----------
    vertices : (n, 3) array
        3D positions in mm.
    faces : (m, 3) int array
        Consistently wound triangles.
    channels : dict, optional
        Extra per-vertex planar positions, each ``(n, 2)``.
    """

    def __init__(self, vertices, faces, channels=None, *, validate=True):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.faces = np.ascontiguousarray(faces, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise MeshError("vertices must be an (n, 3) array")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise MeshError("faces must be an (m, 3) array of triangles")
        if len(self.faces) == 0:
            raise MeshError("mesh has no faces")
        if self.faces.min() < 0 or self.faces.max() >= len(self.vertices):
            raise MeshError("face index out of range")
        self.channels = {}
        for name, pos in (channels or {}).items():
            self.set_channel(name, pos)
        if validate:
            self._validate()

    # ------------------------------------------------------------------
    # sizes and basic connectivity
    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    @cached_property
    def _halfedges(self):
        f = self.faces
        tail = f.reshape(-1)
        head = f[:, [1, 2, 0]].reshape(-1)
        return tail, head

    @cached_property
    def edges(self):
        """Unique undirected edges, shape ``(E, 2)`` with ``i < j``."""
        tail, head = self._halfedges
        e = np.sort(np.column_stack([tail, head]), axis=1)
        return np.unique(e, axis=0)

    @cached_property
    def _halfedge_lookup(self):
        tail, head = self._halfedges
        n = self.n_vertices
        # value = halfedge index + 1 so that 0 means absent
        return sparse.csr_matrix(
            (np.arange(1, len(tail) + 1), (tail, head)), shape=(n, n)
        )

    @cached_property
    def halfedge_twin(self):
        """Index of the opposite halfedge (``3*face + corner``) or -1 on the boundary."""
        tail, head = self._halfedges
        twin = np.asarray(self._halfedge_lookup[head, tail]).ravel() - 1
        return twin

    @cached_property
    def face_adjacency(self):
        """``(m, 3)`` neighbour face across edge ``(f[k], f[k+1])``, -1 on the boundary."""
        twin = self.halfedge_twin
        adj = np.where(twin >= 0, twin // 3, -1)
        return adj.reshape(-1, 3)

    @cached_property
    def vertex_faces(self):
        """CSR incidence ``(n_vertices, n_faces)``; row ``i`` lists faces around ``i``."""
        m = self.n_faces
        rows = self.faces.reshape(-1)
        cols = np.repeat(np.arange(m), 3)
        inc = sparse.csr_matrix(
            (np.ones(3 * m), (rows, cols)), shape=(self.n_vertices, m)
        )
        inc.sort_indices()
        return inc

    def faces_of(self, v):
        vf = self.vertex_faces
        return vf.indices[vf.indptr[v]:vf.indptr[v + 1]]

    @cached_property
    def adjacency(self):
        """Symmetric vertex adjacency (CSR, unit weights)."""
        e = self.edges
        n = self.n_vertices
        a = sparse.coo_matrix(
            (np.ones(2 * len(e)), (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])),
            shape=(n, n),
        ).tocsr()
        a.sort_indices()
        return a

    def neighbors(self, v):
        a = self.adjacency
        return a.indices[a.indptr[v]:a.indptr[v + 1]]

    # ------------------------------------------------------------------
    # boundary
    @cached_property
    def boundary_loops(self):
        """Ordered boundary cycles; index 0 is the loop of greatest 3D length."""
        tail, head = self._halfedges
        is_b = self.halfedge_twin < 0
        bt, bh = tail[is_b], head[is_b]
        nxt = {}
        for a, b in zip(bt.tolist(), bh.tolist()):
            if a in nxt:
                raise MeshError(f"non-manifold boundary vertex {a}")
            nxt[a] = b
        loops = []
        seen = set()
        for start in sorted(nxt):
            if start in seen:
                continue
            loop = [start]
            seen.add(start)
            cur = nxt[start]
            while cur != start:
                if cur in seen or cur not in nxt:
                    raise MeshError("boundary edges do not form simple cycles")
                loop.append(cur)
                seen.add(cur)
                cur = nxt[cur]
            loops.append(np.array(loop, dtype=np.int64))
        lengths = [self._loop_length(lp) for lp in loops]
        order = sorted(range(len(loops)), key=lambda i: (-round(lengths[i], 9), loops[i].min()))
        return [loops[i] for i in order]

    def _loop_length(self, loop):
        p = self.vertices[loop]
        return float(np.linalg.norm(np.roll(p, -1, axis=0) - p, axis=1).sum())

    def loop_lengths(self):
        return np.array([self._loop_length(lp) for lp in self.boundary_loops])

    @cached_property
    def boundary_id(self):
        """Per-vertex boundary loop index, -1 for interior vertices."""
        bid = np.full(self.n_vertices, -1, dtype=np.int64)
        for i, loop in enumerate(self.boundary_loops):
            bid[loop] = i
        return bid

    @property
    def interior_vertices(self):
        return np.flatnonzero(self.boundary_id < 0)

    # ------------------------------------------------------------------
    # geometry of the 3D channel
    @cached_property
    def face_normals_raw(self):
        p = self.vertices
        f = self.faces
        return np.cross(p[f[:, 1]] - p[f[:, 0]], p[f[:, 2]] - p[f[:, 0]])

    @cached_property
    def face_areas(self):
        return 0.5 * np.linalg.norm(self.face_normals_raw, axis=1)

    @cached_property
    def face_normals(self):
        nr = self.face_normals_raw
        ln = np.linalg.norm(nr, axis=1, keepdims=True)
        return nr / np.where(ln > 0, ln, 1.0)

    @cached_property
    def dual_areas(self):
        """Barycentric dual-cell area per vertex (one third of incident faces)."""
        return np.bincount(
            self.faces.reshape(-1), np.repeat(self.face_areas / 3.0, 3), self.n_vertices
        )

    @cached_property
    def bbox_diagonal(self):
        return float(np.linalg.norm(self.vertices.max(0) - self.vertices.min(0)))

    @cached_property
    def mean_edge_length(self):
        e = self.edges
        return float(np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1).mean())

    @cached_property
    def vertex_normals(self):
        """Vertex normals with Max's weights (exact on spheres)."""
        p = self.vertices
        f = self.faces
        n = np.zeros_like(p)
        for k in range(3):
            a = p[f[:, (k + 1) % 3]] - p[f[:, k]]
            b = p[f[:, (k + 2) % 3]] - p[f[:, k]]
            w = np.cross(a, b) / (
                np.einsum("ij,ij->i", a, a) * np.einsum("ij,ij->i", b, b)
            )[:, None]
            np.add.at(n, f[:, k], w)
        ln = np.linalg.norm(n, axis=1, keepdims=True)
        return n / np.where(ln > 0, ln, 1.0)

    @cached_property
    def hat_gradients(self):
        """Per-face gradients of the three linear hat functions, ``(m, 3, 3)``.

        ``hat_gradients[f, k]`` is the 3D gradient of the barycentric
        coordinate of corner ``k``; faces below the degeneracy threshold get
        NaN rows.
        """
        return _hat_gradients(self.vertices, self.faces, self.face_normals_raw, self.degenerate_floor)

    @cached_property
    def degenerate_floor(self):
        return DEGENERATE_REL_AREA * self.bbox_diagonal ** 2

    @cached_property
    def divergence_weights(self):
        """Corner vectors ``c[f, k]`` with ``div_j = sum c[f,k] . X_f / C_j``.

        Combines the cotangent divergence of a face-constant field with the
        outward flux through boundary edges, so that constant fields have zero
        divergence on boundary vertices too.
        """
        p = self.vertices
        f = self.faces
        c = np.zeros((self.n_faces, 3, 3))
        cots = self.cotangents
        for k in range(3):
            i, j1, j2 = f[:, k], f[:, (k + 1) % 3], f[:, (k + 2) % 3]
            e1 = p[j1] - p[i]
            e2 = p[j2] - p[i]
            # cot of the angle opposite e1 sits at j2, opposite e2 at j1
            c[:, k] = 0.5 * (cots[:, (k + 2) % 3, None] * e1 + cots[:, (k + 1) % 3, None] * e2)
        adj = self.face_adjacency
        n = self.face_normals
        for k in range(3):
            bf = np.flatnonzero(adj[:, k] < 0)
            if len(bf) == 0:
                continue
            a = p[f[bf, k]]
            b = p[f[bf, (k + 1) % 3]]
            flux = 0.5 * np.cross(b - a, n[bf])
            c[bf, k] += flux
            c[bf, (k + 1) % 3] += flux
        return c

    @cached_property
    def cotangents(self):
        """Cotangent of the interior angle at each corner, ``(m, 3)``."""
        return _cotangents(self.vertices, self.faces)

    @cached_property
    def cotan_laplacian(self):
        """Positive semi-definite cotangent Laplacian ``L`` (``x.T L x = Dirichlet energy * 2``)."""
        return cotan_laplacian(self.vertices, self.faces)

    # ------------------------------------------------------------------
    # channels
    def set_channel(self, name, positions):
        pos = np.array(positions, dtype=float)
        if pos.shape != (self.n_vertices, 2):
            raise MeshError(f"channel {name!r} must have shape ({self.n_vertices}, 2)")
        self.channels[name] = pos

    def channel(self, name):
        try:
            return self.channels[name]
        except KeyError:
            raise MeshError(f"mesh has no channel {name!r}") from None

    def signed_areas(self, name):
        """Signed 2D areas of all faces in a planar channel."""
        return signed_areas_2d(self.channel(name), self.faces)

    def with_channels(self, **channels):
        """Shallow copy that shares connectivity but carries new channels."""
        other = object.__new__(TriMesh)
        other.__dict__.update(self.__dict__)
        other.channels = dict(self.channels)
        for k, v in channels.items():
            other.set_channel(k, v)
        return other

    # ------------------------------------------------------------------
    def _validate(self):
        used = np.zeros(self.n_vertices, dtype=bool)
        used[self.faces.reshape(-1)] = True
        if not used.all():
            raise MeshError(f"{int((~used).sum())} unreferenced vertices")
        f = self.faces
        if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
            raise MeshError("face with repeated vertex")
        tail, head = self._halfedges
        lookup = self._halfedge_lookup
        if lookup.nnz != len(tail):
            raise MeshError("non-manifold edge or inconsistent winding (duplicate halfedge)")
        und = np.sort(np.column_stack([tail, head]), axis=1)
        _, counts = np.unique(und, axis=0, return_counts=True)
        if np.any(counts > 2):
            raise MeshError("non-manifold edge shared by more than two faces")
        n_deg = int(np.count_nonzero(self.face_areas < self.degenerate_floor))
        if n_deg:
            raise MeshError(f"{n_deg} degenerate (zero-area) faces")
        loops = self.boundary_loops
        b = len(loops)
        chi = self.n_vertices - len(self.edges) + self.n_faces
        if b == 0:
            raise MeshError("genus/boundary requirements violated: closed surface")
        genus2 = 2 - b - chi
        if genus2 != 0:
            raise MeshError(
                f"genus/boundary requirements violated: chi={chi}, boundaries={b}"
            )
        if _components(self) != 1:
            raise MeshError("mesh is not connected")


def _components(mesh):
    from scipy.sparse.csgraph import connected_components

    return connected_components(mesh.adjacency, directed=False)[0]


def _cotangents(p, f):
    cots = np.empty((len(f), 3))
    for k in range(3):
        a = p[f[:, (k + 1) % 3]] - p[f[:, k]]
        b = p[f[:, (k + 2) % 3]] - p[f[:, k]]
        dot = np.einsum("ij,ij->i", a, b)
        cr = np.linalg.norm(np.cross(a, b), axis=1)
        cots[:, k] = dot / np.where(cr > 0, cr, np.inf)
    return cots


def _hat_gradients(p, f, nraw, floor):
    area2 = np.linalg.norm(nraw, axis=1)
    bad = 0.5 * area2 < floor
    n = nraw / np.where(bad, 1.0, area2)[:, None]
    g = np.empty((len(f), 3, 3))
    for k in range(3):
        e = p[f[:, (k + 2) % 3]] - p[f[:, (k + 1) % 3]]
        g[:, k] = np.cross(n, e) / np.where(bad, 1.0, area2)[:, None]
    g[bad] = np.nan
    return g


def cotan_laplacian(p, f):
    """Assemble the cotangent Laplacian for positions ``p`` (2D or 3D)."""
    if p.shape[1] == 2:
        p = np.column_stack([p, np.zeros(len(p))])
    cots = _cotangents(p, f)
    n = len(p)
    rows, cols, vals = [], [], []
    for k in range(3):
        i, j = f[:, (k + 1) % 3], f[:, (k + 2) % 3]
        w = 0.5 * cots[:, k]
        rows += [i, j, i, j]
        cols += [j, i, i, j]
        vals += [-w, -w, w, w]
    L = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    L.sum_duplicates()
    return L


def signed_areas_2d(q, f):
    a = q[f[:, 1]] - q[f[:, 0]]
    b = q[f[:, 2]] - q[f[:, 0]]
    return 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])


# ----------------------------------------------------------------------
# operators


def face_gradient(mesh, field, channel=None):
    """Per-face gradient of the piecewise-linear interpolant of ``field``.

    Returns ambient vectors, ``(m, 3)`` for the surface and ``(m, 2)`` for a
    planar channel. Degenerate faces get NaN rows.
    """
    field = np.asarray(field, dtype=float)
    if field.shape != (mesh.n_vertices,):
        raise ValueError("field must have one value per vertex")
    if channel is None:
        g = mesh.hat_gradients
        return np.einsum("fk,fkd->fd", field[mesh.faces], g)
    q = mesh.channel(channel)
    q3 = np.column_stack([q, np.zeros(len(q))])
    f = mesh.faces
    nraw = np.cross(q3[f[:, 1]] - q3[f[:, 0]], q3[f[:, 2]] - q3[f[:, 0]])
    # the raw normal follows the winding, so inverted faces still get a gradient
    g = _hat_gradients(q3, f, nraw, DEGENERATE_REL_AREA * _diag2(q))
    return np.einsum("fk,fkd->fd", field[f], g)[:, :2]


def _diag2(q):
    return float(np.sum((q.max(0) - q.min(0)) ** 2))


@dataclass
class FaceFrame:
    """Per-face tangent frames and curvature tensors.

    ``basis[f]`` holds two orthonormal tangent vectors (rows); ``tensor[f]``
    is the symmetric 2x2 shape operator in that basis, in 1/mm. Positive
    curvature means the surface bends away from the normal side.
    """

    basis: np.ndarray
    tensor: np.ndarray

    def ambient(self):
        """Tensors as ``(m, 3, 3)`` ambient matrices ``B^T C B``."""
        return np.einsum("fai,fab,fbj->fij", self.basis, self.tensor, self.basis)

    def principal_curvatures(self):
        return np.linalg.eigvalsh(self.tensor)

    def directional(self, directions):
        """Normal curvature along ambient tangent directions (normalized here)."""
        d = np.asarray(directions, dtype=float)
        u = np.einsum("fai,fi->fa", self.basis, d)
        ln = np.linalg.norm(u, axis=1, keepdims=True)
        u = u / np.where(ln > 0, ln, 1.0)
        return np.einsum("fa,fab,fb->f", u, self.tensor, u)


def face_bases(mesh):
    p = mesh.vertices
    f = mesh.faces
    t = p[f[:, 1]] - p[f[:, 0]]
    t /= np.linalg.norm(t, axis=1, keepdims=True)
    b = np.cross(mesh.face_normals, t)
    return np.stack([t, b], axis=1)


def _rotation_between(a, b):
    """Batched rotation matrices taking unit vectors ``a`` onto ``b``."""
    v = np.cross(a, b)
    c = np.einsum("ij,ij->i", a, b)
    k = 1.0 / np.maximum(1.0 + c, 1e-12)
    vx = np.zeros((len(a), 3, 3))
    vx[:, 0, 1], vx[:, 0, 2] = -v[:, 2], v[:, 1]
    vx[:, 1, 0], vx[:, 1, 2] = v[:, 2], -v[:, 0]
    vx[:, 2, 0], vx[:, 2, 1] = -v[:, 1], v[:, 0]
    return np.eye(3)[None] + vx + np.einsum("fij,fjk->fik", vx, vx) * k[:, None, None]


def curvature_tensor(mesh):
    """Per-face curvature tensors from the vertex-based estimate of Rusinkiewicz.

    Each face gets a least-squares shape operator from its normal variation;
    these are rotated into vertex tangent planes and averaged with area
    weights, then the vertex tensors are rotated back and averaged into faces.
    """
    p = mesh.vertices
    f = mesh.faces
    nv = mesh.vertex_normals
    nf = mesh.face_normals
    basis = face_bases(mesh)
    m = mesh.n_faces

    # per-face least squares: II e_i = dn_i (two equations per edge)
    A = np.zeros((m, 6, 3))
    rhs = np.zeros((m, 6))
    for k in range(3):
        e = p[f[:, (k + 2) % 3]] - p[f[:, (k + 1) % 3]]
        dn = nv[f[:, (k + 2) % 3]] - nv[f[:, (k + 1) % 3]]
        u = np.einsum("fi,fi->f", e, basis[:, 0])
        v = np.einsum("fi,fi->f", e, basis[:, 1])
        A[:, 2 * k, 0], A[:, 2 * k, 1] = u, v
        A[:, 2 * k + 1, 1], A[:, 2 * k + 1, 2] = u, v
        rhs[:, 2 * k] = np.einsum("fi,fi->f", dn, basis[:, 0])
        rhs[:, 2 * k + 1] = np.einsum("fi,fi->f", dn, basis[:, 1])
    AtA = np.einsum("fki,fkj->fij", A, A)
    Atb = np.einsum("fki,fk->fi", A, rhs)
    sol = np.linalg.solve(AtA + 1e-30 * np.eye(3)[None], Atb[..., None])[..., 0]
    II2 = np.empty((m, 2, 2))
    II2[:, 0, 0] = sol[:, 0]
    II2[:, 0, 1] = II2[:, 1, 0] = sol[:, 1]
    II2[:, 1, 1] = sol[:, 2]
    II3 = np.einsum("fai,fab,fbj->fij", basis, II2, basis)

    # faces -> vertices
    w = np.repeat(mesh.face_areas / 3.0, 3)
    corner_v = f.reshape(-1)
    corner_f = np.repeat(np.arange(m), 3)
    R = _rotation_between(nf[corner_f], nv[corner_v])
    rot = np.einsum("cij,cjk,clk->cil", R, II3[corner_f], R)
    Vt = np.zeros((mesh.n_vertices, 3, 3))
    np.add.at(Vt, corner_v, rot * w[:, None, None])
    wsum = np.bincount(corner_v, w, mesh.n_vertices)
    bad = wsum <= 0
    if bad.any():
        warnings.warn(f"{int(bad.sum())} vertices without valid umbrella; curvature set to 0")
    Vt /= np.where(bad, 1.0, wsum)[:, None, None]
    Vt[bad] = 0.0

    # vertices -> faces
    R2 = np.transpose(R, (0, 2, 1))
    back = np.einsum("cij,cjk,clk->cil", R2, Vt[corner_v], R2).reshape(m, 3, 3, 3).mean(axis=1)
    T2 = np.einsum("fai,fij,fbj->fab", basis, back, basis)
    T2 = 0.5 * (T2 + np.transpose(T2, (0, 2, 1)))
    return FaceFrame(basis=basis, tensor=T2)


def vertex_divergence(mesh, unit_field, valid=None):
    """Pointwise divergence at vertices of a face-constant tangent field.

    Faces flagged invalid (or holding NaN) are skipped. Vertices without any
    valid incident face get 0.
    """
    X = np.asarray(unit_field, dtype=float)
    if valid is None:
        valid = np.all(np.isfinite(X), axis=1)
    X = np.where(valid[:, None], np.nan_to_num(X), 0.0)
    c = mesh.divergence_weights
    contrib = np.einsum("fkd,fd->fk", c, X)
    total = np.bincount(mesh.faces.reshape(-1), contrib.reshape(-1), mesh.n_vertices)
    has = np.bincount(mesh.faces.reshape(-1), np.repeat(valid, 3).astype(float), mesh.n_vertices) > 0
    if not has.all():
        log.warning("%d vertices have no valid incident face", int((~has).sum()))
    return np.where(has, total / mesh.dual_areas, 0.0)


# ----------------------------------------------------------------------
# I/O


def load_mesh(path, format=None):
    """Read an OBJ, PLY or STL file into a validated :class:`TriMesh`.

    Polygons are fan-triangulated and unreferenced vertices dropped.
    """
    import meshio

    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"mesh not found: {path}")
    fmt = (format or path.suffix.lstrip(".")).lower()
    if fmt not in {"obj", "ply", "stl"}:
        raise MeshError(f"unsupported mesh format {fmt!r}")
    try:
        m = meshio.read(path, file_format=fmt)
    except Exception as exc:  # meshio raises a zoo of types
        raise MeshError(f"cannot parse {path}: {exc}") from exc
    tris = []
    for block in m.cells:
        data = np.asarray(block.data, dtype=np.int64)
        if block.type in ("line", "vertex"):
            continue
        if data.ndim != 2 or data.shape[1] < 3:
            raise MeshError(f"unsupported cell type {block.type}")
        for k in range(1, data.shape[1] - 1):
            tris.append(data[:, [0, k, k + 1]])
    if not tris:
        raise MeshError("no polygonal faces in file")
    faces = np.concatenate(tris)
    pts = np.asarray(m.points, dtype=float)
    if pts.shape[1] == 2:
        pts = np.column_stack([pts, np.zeros(len(pts))])
    if fmt == "stl":
        pts, faces = merge_duplicate_vertices(pts, faces)
    used = np.unique(faces)
    remap = np.full(len(pts), -1)
    remap[used] = np.arange(len(used))
    return TriMesh(pts[used], remap[faces])


def merge_duplicate_vertices(pts, faces, decimals=9):
    key = np.round(pts, decimals)
    _, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    return pts[first], inverse.reshape(-1)[faces]


def save_obj(mesh, path, channel=None):
    """Write the surface (or a planar channel, with z = 0) as OBJ."""
    pos = mesh.vertices if channel is None else np.column_stack(
        [mesh.channel(channel), np.zeros(mesh.n_vertices)]
    )
    with open(path, "w", encoding="ascii") as fh:
        for x, y, z in pos:
            fh.write(f"v {x:.12g} {y:.12g} {z:.12g}\n")
        for a, b, c in mesh.faces + 1:
            fh.write(f"f {a} {b} {c}\n")


def save_channel_ply(mesh, path, channel=None, scalars=None, comments=()):
    """Write an ASCII PLY; planar channels go to x, y with z = 0.

    ``scalars`` maps property names to per-vertex arrays appended after xyz.
    """
    pos = mesh.vertices if channel is None else np.column_stack(
        [mesh.channel(channel), np.zeros(mesh.n_vertices)]
    )
    scalars = scalars or {}
    cols = [pos] + [np.asarray(v, dtype=float)[:, None] for v in scalars.values()]
    table = np.hstack(cols)
    header = [
        "ply",
        "format ascii 1.0",
        *[f"comment {c}" for c in comments],
        f"element vertex {mesh.n_vertices}",
        "property double x",
        "property double y",
        "property double z",
    ]
    header += [f"property double {name}" for name in scalars]
    header += [f"element face {mesh.n_faces}", "property list uchar int vertex_indices", "end_header"]
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(header) + "\n")
        np.savetxt(fh, table, fmt="%.17g")
        np.savetxt(fh, np.column_stack([np.full(mesh.n_faces, 3), mesh.faces]), fmt="%d")
