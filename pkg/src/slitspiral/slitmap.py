"""Discrete conformal slit maps onto the unit disk or a concentric annulus.

The log-radius ``u`` is a cotangent-harmonic function with ``u = 0`` on the
outer boundary. Every slit boundary is collapsed into one unknown constant
whose row of the Laplacian enforces zero total flux, so the conjugate angle is
single valued around it. Disk mode places a logarithmic source at an interior
point; annulus mode pins one inner boundary and rescales so that the angle
period around it is ``2*pi``. The angle ``v`` is the least-squares integral of
the rotated gradient of ``u`` on the surface cut from the pole (or the inner
circle) to the outer boundary.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse.linalg import spsolve

from .errors import InfeasibleError, SolverError
from .mesh import face_bases, signed_areas_2d

log = logging.getLogger(__name__)

SOLVE_RTOL = 1e-10


@dataclass(frozen=True)
class Anchor:
    """Pole of the map: an interior point (disk) or an inner boundary (annulus)."""

    kind: str
    face: int = -1
    bary: tuple = (1 / 3, 1 / 3, 1 / 3)
    boundary: int = -1

    @classmethod
    def interior(cls, face, bary=(1 / 3, 1 / 3, 1 / 3)):
        b = np.asarray(bary, dtype=float)
        if b.shape != (3,) or np.any(b < 0) or abs(b.sum() - 1) > 1e-9:
            raise ValueError("barycentric coordinates must be 3 non-negative weights summing to 1")
        return cls("interior", face=int(face), bary=tuple(float(x) for x in b))

    @classmethod
    def on_boundary(cls, index):
        return cls("boundary", boundary=int(index))

    @property
    def mode(self):
        return "disk" if self.kind == "interior" else "annulus"

    def point(self, mesh):
        if self.kind != "interior":
            raise ValueError("boundary anchors have no single point")
        return np.asarray(self.bary) @ mesh.vertices[mesh.faces[self.face]]


@dataclass
class Slit:
    boundary: int
    radius: float
    start: float
    end: float

    @property
    def width(self):
        return self.end - self.start

    def contains(self, phi, clearance=0.0):
        """Whether angles ``phi`` fall inside the slit's angular extent."""
        d = np.mod(np.asarray(phi) - (self.start - clearance), 2 * np.pi)
        return d <= self.width + 2 * clearance


@dataclass
class SlitDomain:
    """Canonical planar domain together with the per-vertex image positions."""

    mode: str
    anchor: Anchor
    positions: np.ndarray
    inner_radius: float | None
    slits: list = field(default_factory=list)
    log_radius: np.ndarray | None = None
    angle: np.ndarray | None = None
    flux_residuals: dict = field(default_factory=dict)
    outer_flux: float = float("nan")
    cut_path: np.ndarray | None = None
    outer_radius: float = 1.0
    center: tuple = (0.0, 0.0)

    @property
    def radii(self):
        return np.linalg.norm(self.positions, axis=1)

    @property
    def min_radius(self):
        return 0.0 if self.mode == "disk" else float(self.inner_radius)


def slit_map(mesh, anchor):
    """Map ``mesh`` conformally onto a circular slit disk or annulus.

    Parameters
    ----------
    mesh : TriMesh
    anchor : Anchor
        ``Anchor.interior(face, bary)`` for the disk map (the point goes to
        the origin) or ``Anchor.on_boundary(i)`` with ``i >= 1`` for the
        annulus map (boundary ``i`` goes to the inner circle).

    Returns
    -------
    SlitDomain
    """
    loops = mesh.boundary_loops
    bid = mesh.boundary_id
    n = mesh.n_vertices
    if anchor.kind == "interior":
        if not 0 <= anchor.face < mesh.n_faces:
            raise ValueError("anchor face out of range")
        fv = mesh.faces[anchor.face]
        if np.any(bid[fv] >= 0):
            raise InfeasibleError("disk-mode anchor lies on a boundary face")
        p = anchor.point(mesh)
        bverts = np.flatnonzero(bid >= 0)
        dmin = np.linalg.norm(mesh.vertices[bverts] - p, axis=1).min()
        if dmin < 2 * mesh.mean_edge_length:
            raise InfeasibleError(
                f"disk-mode anchor is {dmin:.3g} mm from a boundary (< 2 mean edge lengths)"
            )
        pinned = {}
        slits = list(range(1, len(loops)))
    else:
        if not 1 <= anchor.boundary < len(loops):
            raise InfeasibleError("annulus anchor must be an inner boundary index >= 1")
        pinned = {anchor.boundary: 1.0}
        slits = [i for i in range(1, len(loops)) if i != anchor.boundary]

    L = mesh.cotan_laplacian
    u_fixed = np.zeros(n)
    fixed = bid == 0
    for i, val in pinned.items():
        u_fixed[loops[i]] = val
        fixed |= bid == i
    b = np.zeros(n)
    if anchor.kind == "interior":
        b[mesh.faces[anchor.face]] = -2 * np.pi * np.asarray(anchor.bary)

    # reduced unknowns: free interior vertices, then one constant per slit
    col = np.full(n, -1)
    free = np.flatnonzero((bid < 0))
    col[free] = np.arange(len(free))
    for k, i in enumerate(slits):
        col[loops[i]] = len(free) + k
    rows = np.flatnonzero(col >= 0)
    P = sparse.csr_matrix((np.ones(len(rows)), (rows, col[rows])), shape=(n, len(free) + len(slits)))
    A = (P.T @ L @ P).tocsc()
    rhs = P.T @ (b - L @ u_fixed)
    x = spsolve(A, rhs)
    if not np.all(np.isfinite(x)):
        raise SolverError("slit map: singular harmonic system")
    res = np.linalg.norm(A @ x - rhs) / max(np.linalg.norm(rhs), 1e-300)
    if res > SOLVE_RTOL:
        raise SolverError(f"slit map: relative residual {res:.2e} exceeds {SOLVE_RTOL:g}")
    u = P @ x + u_fixed

    flux = L @ u - b
    residuals = {i: float(flux[loops[i]].sum()) for i in slits}
    inner_radius = None
    if anchor.kind == "boundary":
        F = float(flux[loops[anchor.boundary]].sum())
        if not F > 0:
            raise SolverError("annulus map: non-positive flux through the inner boundary")
        u = -(2 * np.pi / F) * u
        flux = L @ u - b
        residuals = {i: float(flux[loops[i]].sum()) for i in slits}
        inner_radius = float(np.exp(u[loops[anchor.boundary]].mean()))
    outer_flux = float(flux[loops[0]].sum())

    cut = _cut_path(mesh, anchor)
    v = _conjugate_angle(mesh, u, cut, anchor)
    pos = np.exp(u)[:, None] * np.column_stack([np.cos(v), np.sin(v)])
    pos = untangle(mesh, pos)

    slit_info = []
    for i in slits:
        lp = loops[i]
        r = np.exp(u[lp])
        start, end = _angular_extent(np.arctan2(pos[lp, 1], pos[lp, 0]))
        slit_info.append(Slit(boundary=i, radius=float(r.mean()), start=start, end=end))

    dom = SlitDomain(
        mode=anchor.mode,
        anchor=anchor,
        positions=pos,
        inner_radius=inner_radius,
        slits=slit_info,
        log_radius=u,
        angle=v,
        flux_residuals=residuals,
        outer_flux=outer_flux,
        cut_path=cut,
    )
    n_inv = int(np.count_nonzero(signed_areas_2d(pos, mesh.faces) <= 0))
    if n_inv:
        log.warning("slit map produced %d inverted faces", n_inv)
    return dom


def untangle(mesh, pos, max_sweeps=20):
    """Move interior vertices of inverted faces to restore positive orientation.

    Discrete slit maps fold the hole boundary at both slit tips and the
    faces fanning around a tip can come out with tiny negative area. Each
    interior vertex of such a face is moved to the point of its one-ring that
    maximizes the smallest incident signed area (a small LP). Boundary
    vertices never move.
    """
    from scipy.optimize import linprog

    pos = pos.copy()
    F = mesh.faces
    bid = mesh.boundary_id
    floor = 1e-14 * float(np.sum((pos.max(0) - pos.min(0)) ** 2))
    for _ in range(max_sweeps):
        bad = np.flatnonzero(signed_areas_2d(pos, F) <= floor)
        if len(bad) == 0:
            break
        moved = False
        for v in np.unique(F[bad].reshape(-1)):
            if bid[v] >= 0:
                continue
            star = mesh.faces_of(v)
            # area of (v, a, b) = 0.5 * ((a - v) x (b - v)), linear in v
            k = np.argmax(F[star] == v, axis=1)
            a = pos[F[star, (k + 1) % 3]]
            b = pos[F[star, (k + 2) % 3]]
            const = 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])
            coef = 0.5 * np.column_stack([a[:, 1] - b[:, 1], b[:, 0] - a[:, 0]])
            cap = float(np.median(np.abs(signed_areas_2d(pos, F[star]))))
            # maximize t subject to coef @ p + const >= t
            res = linprog(
                c=[0.0, 0.0, -1.0],
                A_ub=np.column_stack([-coef, np.ones(len(star))]),
                b_ub=const,
                bounds=[(None, None), (None, None), (None, cap)],
                method="highs",
            )
            if res.status == 0 and res.x[2] > floor:
                pos[v] = res.x[:2]
                moved = True
        if not moved:
            break
    return pos


def _angular_extent(phi):
    """Smallest arc ``[start, end]`` (``end - start < 2*pi``) covering all angles."""
    s = np.sort(np.mod(phi, 2 * np.pi))
    gaps = np.diff(np.r_[s, s[0] + 2 * np.pi])
    k = int(np.argmax(gaps))
    start = s[(k + 1) % len(s)]
    end = s[k]
    if end < start:
        end += 2 * np.pi
    return float(start), float(end)


def _cut_path(mesh, anchor):
    """Shortest edge path from the pole (or inner circle) to the outer boundary."""
    bid = mesh.boundary_id
    e = mesh.edges
    if anchor.kind == "interior":
        sources = mesh.faces[anchor.face]
        allowed = (bid < 0) | (bid == 0)
    else:
        sources = mesh.boundary_loops[anchor.boundary]
        allowed = (bid < 0) | (bid == 0) | (bid == anchor.boundary)
    ok = allowed[e[:, 0]] & allowed[e[:, 1]]
    # never walk along a boundary loop
    ok &= ~((bid[e[:, 0]] >= 0) & (bid[e[:, 0]] == bid[e[:, 1]]))
    if anchor.kind == "interior":
        ok &= ~(np.isin(e[:, 0], sources) & np.isin(e[:, 1], sources))
    ee = e[ok]
    w = np.linalg.norm(mesh.vertices[ee[:, 0]] - mesh.vertices[ee[:, 1]], axis=1)
    n = mesh.n_vertices
    G = sparse.coo_matrix((np.r_[w, w], (np.r_[ee[:, 0], ee[:, 1]], np.r_[ee[:, 1], ee[:, 0]])), shape=(n, n)).tocsr()
    dist, pred, _ = csgraph.dijkstra(G, directed=False, indices=sources, min_only=True, return_predecessors=True)
    targets = mesh.boundary_loops[0]
    t = targets[np.argmin(dist[targets])]
    if not np.isfinite(dist[t]):
        raise InfeasibleError("no interior path from the anchor to the outer boundary")
    path = [int(t)]
    while pred[path[-1]] >= 0:
        path.append(int(pred[path[-1]]))
    return np.array(path[::-1], dtype=np.int64)


def _star_sectors(mesh, v, barriers, start_face, blocked_faces):
    """Faces around ``v`` reachable from ``start_face`` without crossing ``barriers``."""
    star = set(mesh.faces_of(v).tolist()) - blocked_faces
    adj = mesh.face_adjacency
    F = mesh.faces
    seen = {start_face}
    stack = [start_face]
    while stack:
        f = stack.pop()
        for k in range(3):
            a, b = F[f, k], F[f, (k + 1) % 3]
            if v not in (a, b):
                continue
            other = b if a == v else a
            if other in barriers:
                continue
            g = adj[f, k]
            if g >= 0 and g in star and g not in seen:
                seen.add(g)
                stack.append(g)
    return seen


def _face_with_halfedge(mesh, a, b):
    F = mesh.faces
    for f in mesh.faces_of(a):
        for k in range(3):
            if F[f, k] == a and F[f, (k + 1) % 3] == b:
                return int(f)
    raise RuntimeError(f"halfedge {a}->{b} not found")


def _cut_offsets(mesh, path, anchor):
    """Integer ``(m, 3)`` corner offsets: 1 where a corner sees the far side of the cut."""
    s = np.zeros((mesh.n_faces, 3))
    blocked = {anchor.face} if anchor.kind == "interior" else set()
    nxt = {int(path[j]): int(path[j + 1]) for j in range(len(path) - 1)}
    prv = {int(path[j + 1]): int(path[j]) for j in range(len(path) - 1)}
    for p in path.tolist():
        barriers = {x for x in (nxt.get(p), prv.get(p)) if x is not None}
        if p in nxt:
            left0 = _face_with_halfedge(mesh, p, nxt[p])
        else:
            left0 = _face_with_halfedge(mesh, prv[p], p)
        left = _star_sectors(mesh, p, barriers, left0, blocked)
        for f in mesh.faces_of(p):
            if f in blocked or f in left:
                continue
            k = int(np.flatnonzero(mesh.faces[f] == p)[0])
            s[f, k] = 1.0
    return s


def _conjugate_angle(mesh, u, path, anchor):
    G = mesh.hat_gradients
    A = mesh.face_areas.copy()
    if anchor.kind == "interior":
        A[anchor.face] = 0.0
    grad_u = np.einsum("fk,fkd->fd", u[mesh.faces], G)
    Y = np.cross(mesh.face_normals, grad_u)
    s = _cut_offsets(mesh, path, anchor)
    target = Y - 2 * np.pi * np.einsum("fk,fkd->fd", s, G)
    n = mesh.n_vertices
    F = mesh.faces
    rows, cols, vals = [], [], []
    for a in range(3):
        for b in range(3):
            rows.append(F[:, a])
            cols.append(F[:, b])
            vals.append(A * np.einsum("fd,fd->f", G[:, a], G[:, b]))
    K = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)).tocsr()
    r = np.bincount(F.reshape(-1), (A[:, None] * np.einsum("fkd,fd->fk", G, target)).reshape(-1), n)
    gauge = int(path[-1])
    keep = np.ones(n, dtype=bool)
    keep[gauge] = False
    Kr = K[keep][:, keep].tocsc()
    v = np.zeros(n)
    v[keep] = spsolve(Kr, r[keep])
    if not np.all(np.isfinite(v)):
        raise SolverError("slit map: conjugate angle solve failed")
    return v


def distortion(mesh, positions):
    """Per-face ratio of singular values of the surface-to-plane differential."""
    G = mesh.hat_gradients
    F = mesh.faces
    gx = np.einsum("fk,fkd->fd", positions[F, 0], G)
    gy = np.einsum("fk,fkd->fd", positions[F, 1], G)
    basis = face_bases(mesh)
    J = np.stack([np.einsum("fd,fad->fa", gx, basis), np.einsum("fd,fad->fa", gy, basis)], axis=1)
    sv = np.linalg.svd(J, compute_uv=False)
    return sv[:, 0] / np.maximum(sv[:, 1], 1e-300)


@dataclass
class SlitQuality:
    outer_radius_error: float
    slit_spread: dict
    flux_residuals: dict
    inverted_faces: int
    distortion: np.ndarray
    flagged_faces: np.ndarray
    histogram: tuple

    def as_dict(self):
        return {
            "outer_radius_error": self.outer_radius_error,
            "slit_spread": {str(k): v for k, v in self.slit_spread.items()},
            "flux_residuals": {str(k): v for k, v in self.flux_residuals.items()},
            "inverted_faces": self.inverted_faces,
            "distortion_max": float(self.distortion.max()),
            "distortion_median": float(np.median(self.distortion)),
            "flagged_faces": self.flagged_faces.tolist(),
            "histogram_counts": self.histogram[0].tolist(),
            "histogram_edges": self.histogram[1].tolist(),
        }


def slit_quality(mesh, domain, positions=None, threshold=2.0):
    """Diagnostics of a slit map; ``positions`` overrides ``domain.positions``."""
    pos = domain.positions if positions is None else np.asarray(positions, dtype=float)
    loops = mesh.boundary_loops
    r = np.linalg.norm(pos, axis=1)
    outer_err = float(np.abs(r[loops[0]] - 1.0).max())
    spread = {}
    for i in range(1, len(loops)):
        ri = r[loops[i]]
        spread[i] = float(ri.std() / ri.mean())
    if domain.log_radius is not None:
        flux = mesh.cotan_laplacian @ domain.log_radius
        if domain.mode == "disk":
            a = domain.anchor
            flux[mesh.faces[a.face]] += 2 * np.pi * np.asarray(a.bary)
        fres = {s.boundary: float(flux[loops[s.boundary]].sum()) for s in domain.slits}
    else:
        fres = dict(domain.flux_residuals)
    d = distortion(mesh, pos)
    inv = int(np.count_nonzero(signed_areas_2d(pos, mesh.faces) <= 0))
    hist = np.histogram(np.minimum(d, 10.0), bins=[1.0, 1.05, 1.1, 1.25, 1.5, 2.0, 3.0, 5.0, 10.0])
    return SlitQuality(
        outer_radius_error=outer_err,
        slit_spread=spread,
        flux_residuals=fres,
        inverted_faces=inv,
        distortion=d,
        flagged_faces=np.flatnonzero((d > threshold) | ~np.isfinite(d)),
        histogram=hist,
    )
