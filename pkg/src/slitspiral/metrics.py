"""Path and surface quality metrics.

A ball-end tool moving along contact points ``p`` with surface normals ``n``
has its ball center on ``p + r n``; the volume it sweeps between two path
samples is a capsule of radius ``r``. Coverage counts and scallop residuals
are computed exactly against these capsules.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import InputError, SlitSpiralError

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.05


# ----------------------------------------------------------------------
# path shape
def _dedupe(P, tol=1e-12):
    P = np.asarray(P, dtype=float)
    if len(P) == 0:
        return P
    keep = np.r_[True, np.linalg.norm(np.diff(P, axis=0), axis=1) > tol]
    return P[keep]


def discrete_curvature(P, closed=False):
    """Circumscribed-circle curvature at interior points of a polyline."""
    P = np.asarray(P, dtype=float)
    if closed:
        a, b, c = np.roll(P, 1, axis=0), P, np.roll(P, -1, axis=0)
    else:
        a, b, c = P[:-2], P[1:-1], P[2:]
    ab = np.linalg.norm(b - a, axis=1)
    bc = np.linalg.norm(c - b, axis=1)
    ca = np.linalg.norm(a - c, axis=1)
    cr = np.linalg.norm(np.cross(b - a, c - a), axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        k = np.where(ab * bc * ca > 0, 2 * cr / (ab * bc * ca), 0.0)
    return k, 0.5 * (ab + bc)


def path_metrics(path, closed=None):
    """Length ``|L|`` and smoothness ``sum(kappa_j^2 dL_j)`` of a polyline."""
    P = getattr(path, "points", path)
    closed = bool(getattr(path, "closed", False)) if closed is None else closed
    P = _dedupe(P)
    if closed and len(P) > 1 and np.linalg.norm(P[0] - P[-1]) <= 1e-12:
        P = P[:-1]
    if len(P) < 3:
        raise InputError("path needs at least 3 distinct points")
    seg = np.linalg.norm(np.diff(P, axis=0), axis=1)
    length = float(seg.sum())
    if closed:
        length += float(np.linalg.norm(P[0] - P[-1]))
    k, dL = discrete_curvature(P, closed)
    return {"length": length, "smoothness": float(np.sum(k ** 2 * dL))}


# ----------------------------------------------------------------------
# impact signals
@dataclass
class SignalMetrics:
    a_mean: float
    a_var: float
    a_cu: float
    a_tcu: float
    threshold: float = DEFAULT_THRESHOLD

    def as_dict(self):
        return dict(self.__dict__)


def impact_metrics(signal, dt, threshold=DEFAULT_THRESHOLD):
    """Mean, variance, cumulative and thresholded cumulative squared acceleration."""
    a = np.abs(np.asarray(signal, dtype=float).ravel())
    if a.size == 0:
        raise ValueError("signal is empty")
    if not dt > 0:
        raise ValueError("dt must be positive")
    sq = a ** 2 * dt
    return SignalMetrics(
        a_mean=float(a.mean()), a_var=float(a.var()), a_cu=float(sq.sum()),
        a_tcu=float(sq[a > threshold].sum()), threshold=float(threshold),
    )


# ----------------------------------------------------------------------
# surface sampling and projection
@dataclass
class SurfaceSamples:
    points: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    faces: np.ndarray


def sample_surface(mesh, density=2):
    """Centroids of a ``density x density`` barycentric subdivision of every face."""
    d = int(density)
    if d < 1:
        raise ValueError("density must be >= 1")
    bs = []
    for i in range(d):
        for j in range(d - i):
            bs.append(((i + 1 / 3) / d, (j + 1 / 3) / d))
            if i + j < d - 1:
                bs.append(((i + 2 / 3) / d, (j + 2 / 3) / d))
    B = np.array([[1 - u - v, u, v] for u, v in bs])
    F = mesh.faces
    V = mesh.vertices
    pts = np.einsum("sk,fkd->fsd", B, V[F]).reshape(-1, 3)
    nv = mesh.vertex_normals
    nrm = np.einsum("sk,fkd->fsd", B, nv[F]).reshape(-1, 3)
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    w = np.repeat(mesh.face_areas / len(B), len(B))
    faces = np.repeat(np.arange(mesh.n_faces), len(B))
    return SurfaceSamples(pts, nrm, w, faces)


def closest_point_on_triangles(p, A, B, C):
    """Closest points to ``p`` on triangles ``(A, B, C)`` (row-wise) and their barycentrics."""
    ab, ac, ap = B - A, C - A, p - A
    d1, d2 = np.einsum("ij,ij->i", ab, ap), np.einsum("ij,ij->i", ac, ap)
    bp = p - B
    d3, d4 = np.einsum("ij,ij->i", ab, bp), np.einsum("ij,ij->i", ac, bp)
    cp = p - C
    d5, d6 = np.einsum("ij,ij->i", ab, cp), np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    n = len(A)
    bary = np.zeros((n, 3))
    with np.errstate(invalid="ignore", divide="ignore"):
        den = va + vb + vc
        v = vb / den
        w = vc / den
    bary[:] = np.column_stack([1 - v - w, v, w])
    # edge and vertex regions, checked in increasing priority
    with np.errstate(invalid="ignore", divide="ignore"):
        t = d1 / (d1 - d3)
        m = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        bary[m] = np.column_stack([1 - t[m], t[m], 0 * t[m]])
        t = d2 / (d2 - d6)
        m = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        bary[m] = np.column_stack([1 - t[m], 0 * t[m], t[m]])
        t = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        m = (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0)
        bary[m] = np.column_stack([0 * t[m], 1 - t[m], t[m]])
    bary[(d1 <= 0) & (d2 <= 0)] = (1, 0, 0)
    bary[(d3 >= 0) & (d4 <= d3)] = (0, 1, 0)
    bary[(d6 >= 0) & (d5 <= d6)] = (0, 0, 1)
    q = bary[:, :1] * A + bary[:, 1:2] * B + bary[:, 2:] * C
    return q, bary


def project_to_surface(mesh, points, k=12):
    """Nearest surface point, face, barycentrics and distance for each point."""
    P = np.asarray(points, dtype=float).reshape(-1, 3)
    F = mesh.faces
    V = mesh.vertices
    cent = V[F].mean(axis=1)
    tree = cKDTree(cent)
    k = min(k, mesh.n_faces)
    _, cand = tree.query(P, k=k)
    cand = np.atleast_2d(cand).reshape(len(P), k)
    best_d = np.full(len(P), np.inf)
    best_q = np.zeros_like(P)
    best_f = np.zeros(len(P), dtype=int)
    best_b = np.zeros((len(P), 3))
    for j in range(k):
        f = cand[:, j]
        q, b = closest_point_on_triangles(P, V[F[f, 0]], V[F[f, 1]], V[F[f, 2]])
        d = np.linalg.norm(q - P, axis=1)
        better = d < best_d
        best_d[better], best_q[better], best_f[better], best_b[better] = d[better], q[better], f[better], b[better]
    return best_q, best_f, best_b, best_d


def path_normals(mesh, path, tol=None):
    """Unit surface normals at the path points, projecting points when needed.

    Returns ``(points, normals, warnings)``; points farther than ``tol`` from
    the surface are replaced by their projections and reported.
    """
    P = np.asarray(path.points, dtype=float)
    warnings = []
    tol = 1e-6 * mesh.bbox_diagonal if tol is None else tol
    faces = getattr(path, "faces", None)
    if faces is not None and len(faces) == len(P) and np.all(faces >= 0):
        b = path.bary
        N = np.einsum("nk,nkd->nd", b, mesh.vertex_normals[mesh.faces[faces]])
    else:
        q, f, b, d = project_to_surface(mesh, P)
        off = np.flatnonzero(d > tol)
        for i in off:
            warnings.append(f"point {int(i)} is {d[i]:.3g} mm off the surface; projected")
        P = np.where((d > tol)[:, None], q, P)
        N = np.einsum("nk,nkd->nd", b, mesh.vertex_normals[mesh.faces[f]])
    N /= np.linalg.norm(N, axis=1, keepdims=True)
    return P, N, warnings


# ----------------------------------------------------------------------
# capsules
def _pass_parameters(path):
    """Cumulative domain angle and radius per point, or ``None`` for bare paths."""
    turn = getattr(path, "turn", None)
    rho = getattr(path, "rho", None)
    if turn is None or rho is None or not np.any(np.asarray(rho) != 0):
        return None
    return 2 * np.pi * np.asarray(turn) + np.asarray(path.phi), np.asarray(rho, dtype=float)


def _segment_capsule_hits(samples, centers, radius, offset=0.0, normals=None):
    """Indices of segments whose capsule contains ``sample + offset * normal``."""
    A, B = centers[:-1], centers[1:]
    mid = 0.5 * (A + B)
    half = 0.5 * np.linalg.norm(B - A, axis=1)
    tree = cKDTree(mid)
    q = samples if normals is None else samples + offset * normals
    reach = radius + (half.max() if len(half) else 0.0)
    lists = tree.query_ball_point(q, reach)
    out = []
    for i, cand in enumerate(lists):
        if not cand:
            out.append(np.empty(0, dtype=int))
            continue
        c = np.asarray(cand)
        d = _point_segment_distance(q[i], A[c], B[c])
        out.append(np.sort(c[d < radius]))
    return out


def _point_segment_distance(p, A, B):
    d = B - A
    L2 = np.einsum("ij,ij->i", d, d)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(L2 > 0, np.einsum("ij,ij->i", p - A, d) / L2, 0.0)
    t = np.clip(t, 0, 1)
    return np.linalg.norm(A + t[:, None] * d - p, axis=1)


def count_passes(hits, arclen, tool_radius, angle=None, rho=None, delta_T=None,
                 pass_angle=np.pi):
    """Number of distinct passes among the hit segments (sorted indices).

    With domain data a new pass starts once the cumulative angle has advanced
    by ``pass_angle`` or the radius by ``delta_T / 2`` since the current pass
    began. Bare paths start a new pass at arc-length gaps above ``2 r``.
    """
    if len(hits) == 0:
        return 0
    if angle is None:
        return 1 + int(np.count_nonzero(np.diff(arclen[hits]) > 2 * tool_radius))
    a, r = angle[hits], rho[hits]
    half = np.inf if not delta_T else 0.5 * delta_T
    n, a0, r0 = 1, a[0], r[0]
    for ai, ri in zip(a[1:], r[1:]):
        if ai - a0 >= pass_angle or abs(ri - r0) >= half:
            n, a0, r0 = n + 1, ai, ri
    return n


@dataclass
class CoverageField:
    samples: np.ndarray
    counts: np.ndarray
    weights: np.ndarray
    h_set: float
    ct2: float
    ct_max: int
    warnings: list = field(default_factory=list)

    def as_dict(self):
        return {"CT2": self.ct2, "CT_max": self.ct_max, "h_set": self.h_set,
                "samples": int(len(self.counts)), "uncovered": int(np.count_nonzero(self.counts == 0))}


def coverage_metrics(mesh, path, tool_radius, h_set, sample_density=2, samples=None):
    """Distinct-pass coverage counts ``CT`` on the offset surface ``S + h_set n``.

    ``CT2`` is the area-weighted mean of ``CT^2``.
    """
    if not 0 < h_set < tool_radius:
        raise ValueError("need 0 < h_set < tool_radius")
    smp = samples or sample_surface(mesh, sample_density)
    offset_pts = smp.points + h_set * smp.normals
    if path is None or len(getattr(path, "points", [])) == 0:
        counts = np.zeros(len(smp.points), dtype=int)
        return CoverageField(offset_pts, counts, smp.weights, h_set, 0.0, 0)
    P, N, warns = path_normals(mesh, path)
    centers = P + tool_radius * N
    if len(P) == 1:
        P, centers = np.vstack([P, P]), np.vstack([centers, centers])
    arclen = np.r_[0.0, np.cumsum(np.linalg.norm(np.diff(P, axis=0), axis=1))][:-1]
    params = _pass_parameters(path) if len(P) == len(path.points) else None
    angle = rho = None
    if params is not None:
        angle, rho = params[0][:-1], params[1][:-1]
    delta_T = (getattr(path, "meta", {}) or {}).get("delta_T")
    hits = _segment_capsule_hits(offset_pts, centers, tool_radius)
    counts = np.array([count_passes(h, arclen, tool_radius, angle, rho, delta_T) for h in hits],
                      dtype=int)
    w = smp.weights
    ct2 = float(np.sum(w * counts ** 2) / np.sum(w))
    return CoverageField(offset_pts, counts, w, h_set, ct2, int(counts.max()), warns)


# ----------------------------------------------------------------------
# scallop envelope
def ray_capsule_entry(s, n, A, B, r):
    """Smallest ``t`` with ``s + t n`` inside the capsule ``(A, B, r)``; ``inf`` if none.

    Vectorized over capsules ``A, B`` for a single ray.
    """
    best = np.full(len(A), np.inf)
    for C in (A, B):
        w = C - s
        tc = w @ n
        perp2 = np.einsum("ij,ij->i", w, w) - tc ** 2
        ok = perp2 <= r * r
        t = tc - np.sqrt(np.where(ok, r * r - perp2, 0.0))
        best = np.where(ok, np.minimum(best, t), best)
    d = B - A
    L = np.linalg.norm(d, axis=1)
    nz = L > 0
    u = np.zeros_like(d)
    u[nz] = d[nz] / L[nz, None]
    w = s - A
    nperp = n - np.outer(u @ n, np.ones(3)) * u
    wperp = w - np.einsum("ij,ij->i", w, u)[:, None] * u
    a = np.einsum("ij,ij->i", nperp, nperp)
    b = 2 * np.einsum("ij,ij->i", wperp, nperp)
    c = np.einsum("ij,ij->i", wperp, wperp) - r * r
    disc = b * b - 4 * a * c
    ok = nz & (a > 1e-300) & (disc >= 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = (-b - np.sqrt(np.where(ok, disc, 0.0))) / (2 * np.where(ok, a, 1.0))
    along = np.einsum("ij,ij->i", w + t[:, None] * n, u)
    ok &= (along >= 0) & (along <= L)
    return np.where(ok, np.minimum(best, t), best)


@dataclass
class ScallopSamples:
    points: np.ndarray
    residual: np.ndarray
    msh: np.ndarray
    uncut: np.ndarray
    S_C: float
    weights: np.ndarray | None = None

    def as_dict(self):
        cut = ~self.uncut
        return {
            "S_C": self.S_C,
            "msh_mean": float(self.msh[cut].mean()) if np.any(cut) else float("nan"),
            "msh_max": float(self.msh[cut].max()) if np.any(cut) else float("nan"),
            "residual_mean": float(self.residual[cut].mean()) if np.any(cut) else float("nan"),
            "uncut": int(np.count_nonzero(self.uncut)),
            "samples": int(len(self.residual)),
        }

    def write_csv(self, filename):
        with open(filename, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y", "z", "residual", "msh", "uncut"])
            for p, r, m, u in zip(self.points, self.residual, self.msh, self.uncut):
                w.writerow([repr(float(p[0])), repr(float(p[1])), repr(float(p[2])),
                            repr(float(r)), repr(float(m)), int(u)])


def scallop_residuals(points, normals, centers, tool_radius, max_reach=None):
    """Residual height above each surface point: lower envelope of the swept capsules."""
    A, B = centers[:-1], centers[1:]
    if len(A) == 0:
        A, B = centers, centers
    mid = 0.5 * (A + B)
    half = 0.5 * np.linalg.norm(B - A, axis=1)
    reach = (2 * tool_radius if max_reach is None else max_reach) + half.max()
    tree = cKDTree(mid)
    lists = tree.query_ball_point(points, reach)
    res = np.full(len(points), np.inf)
    for i, cand in enumerate(lists):
        if not cand:
            continue
        c = np.asarray(cand)
        t = ray_capsule_entry(points[i], normals[i], A[c], B[c], tool_radius)
        res[i] = t.min()
    return res


def neighborhood_max(points, values, radius, chunk=512):
    """Maximum of ``values`` over all points within ``radius`` of each point."""
    tree = cKDTree(points)
    out = np.empty(len(points))
    for lo in range(0, len(points), chunk):
        nbrs = tree.query_ball_point(points[lo:lo + chunk], radius)
        out[lo:lo + chunk] = [values[nb].max() for nb in nbrs]
    return out


def scallop_map(mesh, path, tool_radius, samples=None, sample_density=2):
    """Per-sample residuals, neighborhood maxima ``msh`` and their variance ``S_C``.

    Samples with no capsule within ``2 r`` (or whose normal line misses all
    capsules) are marked uncut and excluded from ``S_C``.
    """
    smp = samples or sample_surface(mesh, sample_density)
    P, N, _ = path_normals(mesh, path)
    if len(P) == 0:
        raise InputError("path is empty")
    centers = P + tool_radius * N
    res = scallop_residuals(smp.points, smp.normals, centers, tool_radius)
    uncut = ~np.isfinite(res)
    res = np.where(uncut, np.inf, np.maximum(res, 0.0))
    finite = np.where(uncut, -np.inf, res)
    msh = np.where(uncut, np.nan, neighborhood_max(smp.points, finite, tool_radius))
    cut = ~uncut
    S_C = float(np.var(msh[cut])) if np.any(cut) else float("nan")
    return ScallopSamples(smp.points, res, msh, uncut, S_C, smp.weights)


# ----------------------------------------------------------------------
def evaluate_path(mesh, path, tool_radius, h_set, sample_density=2):
    """Full metrics report for a path (own or external)."""
    smp = sample_surface(mesh, sample_density)
    pm = path_metrics(path)
    cov = coverage_metrics(mesh, path, tool_radius, h_set, samples=smp)
    sc = scallop_map(mesh, path, tool_radius, samples=smp)
    return {
        "length": pm["length"],
        "smoothness": pm["smoothness"],
        "CT2": cov.ct2,
        "CT_max": cov.ct_max,
        "uncovered_fraction": float(np.sum(smp.weights[cov.counts == 0]) / np.sum(smp.weights)),
        "S_C": sc.S_C,
        "scallop": sc.as_dict(),
        "warnings": cov.warnings,
    }
