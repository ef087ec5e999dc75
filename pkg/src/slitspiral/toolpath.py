"""Spiral toolpath synthesis from the optimized field, plus iso-curves and export.

The spiral lives in ``S^H``, where the polar radius equals the field value.
An Archimedean radius schedule therefore gives constant field spacing
``Delta T`` between turns. Points are mapped back to the surface with the
barycentric coordinates of the ``S^H`` face that contains them.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InfeasibleError, SlitSpiralError, InputError

log = logging.getLogger(__name__)

TWO_PI = 2 * np.pi


@dataclass
class Toolpath:
    """Ordered contact points on the surface with their domain coordinates."""

    points: np.ndarray
    faces: np.ndarray
    bary: np.ndarray
    phi: np.ndarray
    rho: np.ndarray
    turn: np.ndarray
    closed: bool = False
    meta: dict = field(default_factory=dict)
    normals: np.ndarray | None = None

    def __len__(self):
        return len(self.points)

    @property
    def domain(self):
        return self.rho[:, None] * np.column_stack([np.cos(self.phi), np.sin(self.phi)])

    @classmethod
    def from_points(cls, points, meta=None, normals=None):
        """Bare polyline without domain data (e.g. an externally produced path)."""
        P = np.asarray(points, dtype=float).reshape(-1, 3)
        n = len(P)
        return cls(points=P, faces=np.full(n, -1), bary=np.zeros((n, 3)), phi=np.zeros(n),
                   rho=np.zeros(n), turn=np.zeros(n, dtype=int), meta=dict(meta or {}),
                   normals=normals)


# ----------------------------------------------------------------------
def level_spacing(avg, h_set):
    """Field spacing ``Delta T = sqrt(h_set / Avg)`` between adjacent passes.

    ``avg`` is an ``EnergyReport`` or the ``Avg`` value itself.
    """
    avg = float(getattr(avg, "avg", avg))
    if not h_set > 0:
        raise ValueError("h_set must be positive")
    if not avg > 0:
        raise ValueError("Avg must be positive")
    return float(np.sqrt(h_set / avg))


def modeled_scallop(q, delta_T):
    """Modeled scallop height ``q * Delta T^2`` (``q = (K_s + K_c) / (8 |grad T|^2)``)."""
    return np.asarray(q) * delta_T ** 2


# ----------------------------------------------------------------------
def extract_isocurves(mesh, values, level):
    """Marching-triangles extraction of ``{T = level}``.

    Returns a list of dicts with ``points`` (k, 3), ``faces`` (k,), ``bary``
    (k, 3) and ``closed``.
    """
    T = np.asarray(values, dtype=float)
    if not T.min() <= level <= T.max():
        return []
    F = mesh.faces
    s = np.sign(T - level).astype(int)
    segs = {}
    where = {}
    for f in range(mesh.n_faces):
        sf = s[F[f]]
        if np.all(sf == 0) or np.all(sf > 0) or np.all(sf < 0):
            continue
        pts = []
        for k in range(3):
            a, b = F[f, k], F[f, (k + 1) % 3]
            if sf[k] == 0:
                pts.append((("v", int(a)), k, None))
            if sf[k] * sf[(k + 1) % 3] < 0:
                t = (level - T[a]) / (T[b] - T[a])
                pts.append((("e", min(a, b), max(a, b)), k, t))
        if len(pts) != 2:
            continue
        keys = []
        for key, k, t in pts:
            bary = np.zeros(3)
            if t is None:
                bary[k] = 1.0
            else:
                bary[k], bary[(k + 1) % 3] = 1 - t, t
            where.setdefault(key, (f, bary))
            keys.append(key)
        segs[tuple(sorted(keys))] = None
    adj = {}
    for a, b in segs:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    seen = set()
    curves = []
    # open chains first (endpoints of degree 1), then closed loops
    starts = sorted((k for k in adj if len(adj[k]) == 1), key=str) + sorted(adj, key=str)
    for s0 in starts:
        if s0 in seen:
            continue
        chain = [s0]
        seen.add(s0)
        cur = s0
        while True:
            nxt = [k for k in adj[cur] if k not in seen]
            if not nxt:
                break
            cur = nxt[0]
            chain.append(cur)
            seen.add(cur)
        closed = len(chain) > 2 and s0 in adj[chain[-1]]
        fb = [where[k] for k in chain]
        faces = np.array([f for f, _ in fb])
        bary = np.array([b for _, b in fb])
        pts = np.einsum("nk,nkd->nd", bary, mesh.vertices[F[faces]])
        curves.append({"points": pts, "faces": faces, "bary": bary, "closed": bool(closed)})
    return curves


def polyline_length(points, closed=False):
    P = np.asarray(points)
    if closed:
        P = np.vstack([P, P[:1]])
    return float(np.linalg.norm(np.diff(P, axis=0), axis=1).sum())


# ----------------------------------------------------------------------
class Locator:
    """Point location in a planar embedding by walking across faces."""

    def __init__(self, mesh, positions):
        self.mesh = mesh
        self.P = np.asarray(positions, dtype=float)
        self.F = mesh.faces
        self.adj = mesh.face_adjacency
        self.max_steps = 20 * int(np.sqrt(mesh.n_faces)) + 50

    def bary(self, f, p):
        a, b, c = self.P[self.F[f]]
        v0, v1, w = b - a, c - a, p - a
        den = v0[0] * v1[1] - v0[1] * v1[0]
        l1 = (w[0] * v1[1] - w[1] * v1[0]) / den
        l2 = (v0[0] * w[1] - v0[1] * w[0]) / den
        return np.array([1 - l1 - l2, l1, l2])

    def locate(self, p, start):
        f = int(start)
        prev = -1
        for _ in range(self.max_steps):
            b = self.bary(f, p)
            k = int(np.argmin(b))
            if b[k] >= -1e-12:
                return f, _clean(b)
            nb = self.adj[f, (k + 1) % 3]
            if nb < 0 or nb == prev:
                # walked against a boundary: try the other negative edge, else clamp
                order = np.argsort(b)
                alt = self.adj[f, (order[1] + 1) % 3] if b[order[1]] < 0 else -1
                if alt >= 0 and alt != prev:
                    prev, f = f, int(alt)
                    continue
                return f, _clean(b)
            prev, f = f, int(nb)
        return self.brute(p)

    def brute(self, p):
        from .field_init import locate

        f, b = locate(np.atleast_2d(p), self.P, self.F)
        if f[0] < 0:
            d = np.linalg.norm(self.P[self.F].mean(axis=1) - p, axis=1)
            j = int(np.argmin(d))
            return j, _clean(self.bary(j, p))
        return int(f[0]), b[0]


def _clean(b):
    b = np.clip(b, 0, None)
    return b / b.sum()


# ----------------------------------------------------------------------
def _schedule(rho_start, rho_end, delta_T, slits, clearance, deflect):
    """Radius as a function of total angle, with slit deflections."""
    phi_end = TWO_PI * (rho_end - rho_start) / delta_T
    holds = []
    for s in slits:
        R = s.radius
        if not rho_start < R < rho_end:
            continue
        if s.width + 2 * clearance >= TWO_PI * (1 - 2 * deflect / delta_T):
            raise InfeasibleError(f"slit deflection infeasible: slit {s.boundary} spans nearly a full turn")
        phi_c = TWO_PI * (R - rho_start) / delta_T
        ang = phi_c % TWO_PI
        if not s.contains(ang, clearance):
            continue
        a = (s.start - clearance) % TWO_PI
        into = (ang - a) % TWO_PI
        out = s.width + 2 * clearance - into
        lag = TWO_PI * deflect / delta_T
        if into <= out:
            # cross early, before the slit's start, and stay above it
            holds.append(("above", R + deflect, phi_c - into, phi_c + lag))
        else:
            # stay below the slit until past its end, then cross
            holds.append(("below", R - deflect, phi_c - lag, phi_c + out))
    return phi_end, holds


def _rho_of(phi, rho_start, delta_T, holds):
    rho = rho_start + delta_T * phi / TWO_PI
    for kind, level, a, b in holds:
        if kind == "above":
            rho = np.where((phi >= a) & (phi <= b), np.maximum(rho, level), rho)
        else:
            rho = np.where((phi >= a) & (phi < b), np.minimum(rho, level), rho)
    return rho


def synthesize_spiral(mesh, positions, delta_T, *, mode, slits=(), rho_start=None, rho_end=None,
                      clearance=None, chord_tol=None, normals=None, meta=None):
    """Single inside-to-outside spiral in ``S^H`` mapped onto the surface.

    Parameters
    ----------
    positions : (n, 2) array
        Final ``S^H`` positions (center at the origin).
    delta_T : float
        Field spacing per turn.
    mode : {"disk", "annulus"}
    slits : list of ``Slit``
        Slit arcs in ``S^H`` (radius and angular extent).
    rho_start, rho_end : float, optional
        Innermost and outermost radius. Defaults: the inner circle (annulus)
        or three mean image edge lengths around the pole (disk), and the
        outer boundary circle.
    clearance : float, optional
        Angular clearance at slit ends; defaults to two sampling steps.
    """
    P = np.asarray(positions, dtype=float)
    rho_v = np.linalg.norm(P, axis=1)
    loops = mesh.boundary_loops
    e = mesh.edges
    elen = np.linalg.norm(P[e[:, 0]] - P[e[:, 1]], axis=1)
    if rho_end is None:
        rho_end = float(rho_v[loops[0]].mean())
    if rho_start is None:
        if mode == "annulus":
            raise ValueError("annulus mode needs rho_start (the inner circle radius)")
        near = np.argsort(rho_v)[:12]
        local = np.isin(e, near).any(axis=1)
        rho_start = 3.0 * float(elen[local].mean())
    if not delta_T > 0:
        raise ValueError("delta_T must be positive")
    if delta_T >= rho_end - rho_start:
        raise InfeasibleError("fewer than one turn: delta_T exceeds the radial range")
    h_img = float(np.median(elen))
    step = 0.25 * h_img
    if clearance is None:
        clearance = 2 * step / max(min((s.radius for s in slits), default=rho_end), rho_start)
    deflect = delta_T / 8
    phi_end, holds = _schedule(rho_start, rho_end, delta_T, slits, clearance, deflect)

    # initial samples: arc length in the domain about a quarter of an edge
    n_turn_pts = lambda r: max(16, int(np.ceil(TWO_PI * r / step)))  # noqa: E731
    phis = [0.0]
    while phis[-1] < phi_end:
        r = rho_start + delta_T * phis[-1] / TWO_PI
        phis.append(min(phi_end, phis[-1] + TWO_PI / n_turn_pts(r)))
    # include the hold corners exactly
    corners = [x for _, _, a, b in holds for x in (a, b)]
    phi = np.unique(np.r_[phis, corners])
    phi = phi[(phi >= 0) & (phi <= phi_end)]

    loc = Locator(mesh, P)
    V = mesh.vertices
    F = mesh.faces
    chord_tol = 1e-3 * mesh.bbox_diagonal if chord_tol is None else chord_tol
    adj = mesh.face_adjacency

    def domain_xy(ph, rr):
        return rr * np.cos(ph), rr * np.sin(ph)

    def map_points(ph, rr, start):
        out_f, out_b = [], []
        f = start
        for p, r in zip(ph, rr):
            f, b = loc.locate(np.array(domain_xy(p, r)), f)
            out_f.append(f)
            out_b.append(b)
        return np.array(out_f), np.array(out_b)

    rho = _rho_of(phi, rho_start, delta_T, holds)
    phi, rho = _insert_jumps(phi, rho, holds, rho_start, delta_T)
    x0, y0 = domain_xy(phi[0], rho[0])
    start_face, _ = loc.brute(np.array([x0, y0]))
    faces, bary = map_points(phi, rho, start_face)
    pts = np.einsum("nk,nkd->nd", bary, V[F[faces]])

    for _ in range(12):
        need = _needs_split(pts, faces, adj, phi, rho, bary, V, F, chord_tol, loc)
        if not np.any(need):
            break
        idx = np.flatnonzero(need)
        mphi = 0.5 * (phi[idx] + phi[idx + 1])
        mrho = 0.5 * (rho[idx] + rho[idx + 1])
        same_phi = phi[idx] == phi[idx + 1]
        mrho = np.where(same_phi, mrho, _rho_of(mphi, rho_start, delta_T, holds))
        mf, mb = [], []
        for j, p, r in zip(idx, mphi, mrho):
            f, b = loc.locate(np.array(domain_xy(p, r)), faces[j])
            mf.append(f)
            mb.append(b)
        mp = np.einsum("nk,nkd->nd", np.array(mb), V[F[np.array(mf)]])
        order = np.argsort(np.r_[np.arange(len(phi)), idx + 0.5], kind="stable")
        phi = np.r_[phi, mphi][order]
        rho = np.r_[rho, mrho][order]
        faces = np.r_[faces, mf][order]
        bary = np.vstack([bary, mb])[order]
        pts = np.vstack([pts, mp])[order]

    turn = np.floor(phi / TWO_PI + 1e-12).astype(int)
    nrm = None
    if normals is not None:
        nrm = np.einsum("nk,nkd->nd", bary, normals[F[faces]])
        nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    md = {"delta_T": delta_T, "rho_start": rho_start, "rho_end": rho_end, "mode": mode,
          "turns": float(phi_end / TWO_PI), "holds": [list(h) for h in holds]}
    md.update(meta or {})
    return Toolpath(points=pts, faces=faces.astype(int), bary=bary, phi=np.mod(phi, TWO_PI), rho=rho,
                    turn=turn, meta=md, normals=nrm)


def _insert_jumps(phi, rho, holds, rho_start, delta_T):
    """Add the radial segments at hold ends so crossings happen at one angle."""
    extra_phi, extra_rho = [], []
    for kind, level, a, b in holds:
        base_a = rho_start + delta_T * a / TWO_PI
        base_b = rho_start + delta_T * b / TWO_PI
        if kind == "above":
            extra_phi += [a, a]
            extra_rho += [base_a, level]
        else:
            extra_phi += [b, b]
            extra_rho += [level, max(base_b, level)]
    if not extra_phi:
        return phi, rho
    keep = ~np.isin(phi, extra_phi)
    ph = np.r_[phi[keep], extra_phi]
    rh = np.r_[rho[keep], extra_rho]
    order = np.lexsort((rh, ph))
    return ph[order], rh[order]


def _needs_split(pts, faces, adj, phi, rho, bary, V, F, tol, loc):
    """Segments whose faces are not edge-adjacent or whose chord error is too big."""
    a, b = faces[:-1], faces[1:]
    ok = (a == b) | np.any(adj[a] == b[:, None], axis=1)
    mid_phi = 0.5 * (phi[:-1] + phi[1:])
    mid_rho = 0.5 * (rho[:-1] + rho[1:])
    # chord error: surface point at the domain midpoint vs the chord midpoint
    chord = 0.5 * (pts[:-1] + pts[1:])
    err = np.zeros(len(a))
    check = np.flatnonzero(ok & (a != b))
    for j in check:
        p = np.array([mid_rho[j] * np.cos(mid_phi[j]), mid_rho[j] * np.sin(mid_phi[j])])
        f, bb = loc.locate(p, faces[j])
        err[j] = np.linalg.norm(bb @ V[F[f]] - chord[j])
    short = np.linalg.norm(np.diff(pts, axis=0), axis=1) < 1e-9
    return (~ok | (err > tol)) & ~short


# ----------------------------------------------------------------------
def export_toolpath(path, filename, format=None, *, feed=1000.0, tool_radius=None, safe_z=None, mesh=None):
    """Write ``path`` as csv, json, gcode or svg (format inferred from the suffix)."""
    filename = Path(filename)
    fmt = (format or filename.suffix.lstrip(".")).lower()
    if len(path) == 0:
        raise ValueError("cannot export an empty toolpath")
    if fmt == "csv":
        _write_csv(path, filename)
    elif fmt == "json":
        filename.write_text(json.dumps(toolpath_to_dict(path), sort_keys=True) + "\n")
    elif fmt in ("gcode", "nc", "ngc"):
        filename.write_text(to_gcode(path, feed=feed, tool_radius=tool_radius, safe_z=safe_z))
    elif fmt == "svg":
        from .svg import toolpath_svg

        toolpath_svg(path, filename, mesh=mesh)
    else:
        raise ValueError(f"unknown toolpath format {fmt!r}")
    return filename


CSV_COLUMNS = ["x", "y", "z", "face", "b0", "b1", "b2", "phi", "rho", "turn"]


def _write_csv(path, filename):
    with open(filename, "w", newline="") as fh:
        fh.write("# meta=" + json.dumps(_jsonable(path.meta), sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for i in range(len(path)):
            x, y, z = path.points[i]
            b = path.bary[i]
            w.writerow([repr(float(x)), repr(float(y)), repr(float(z)), int(path.faces[i]),
                        repr(float(b[0])), repr(float(b[1])), repr(float(b[2])),
                        repr(float(path.phi[i])), repr(float(path.rho[i])), int(path.turn[i])])


def toolpath_to_dict(path):
    return {
        "meta": _jsonable(path.meta),
        "closed": path.closed,
        "points": [[float(v) for v in p] for p in path.points],
        "faces": [int(f) for f in path.faces],
        "bary": [[float(v) for v in b] for b in path.bary],
        "phi": [float(v) for v in path.phi],
        "rho": [float(v) for v in path.rho],
        "turn": [int(t) for t in path.turn],
    }


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    return x


def load_toolpath(filename):
    """Read a csv or json toolpath. CSV needs at least ``x, y, z`` columns."""
    filename = Path(filename)
    if not filename.exists():
        raise FileNotFoundError(f"toolpath not found: {filename}")
    if filename.suffix.lower() == ".json":
        d = json.loads(filename.read_text())
        pts = np.asarray(d.get("points", []), dtype=float).reshape(-1, 3)
        if len(pts) == 0:
            raise InputError("toolpath file is empty")
        n = len(pts)
        return Toolpath(
            points=pts,
            faces=np.asarray(d.get("faces", [-1] * n), dtype=int),
            bary=np.asarray(d.get("bary", np.zeros((n, 3))), dtype=float).reshape(n, 3),
            phi=np.asarray(d.get("phi", np.zeros(n)), dtype=float),
            rho=np.asarray(d.get("rho", np.zeros(n)), dtype=float),
            turn=np.asarray(d.get("turn", np.zeros(n)), dtype=int),
            closed=bool(d.get("closed", False)),
            meta=d.get("meta", {}),
        )
    meta = {}
    with open(filename, newline="") as fh:
        lines = fh.read().splitlines()
    for ln in lines:
        if ln.startswith("# meta="):
            meta = json.loads(ln[len("# meta="):])
    rows = list(csv.DictReader([ln for ln in lines if ln and not ln.startswith("#")]))
    if not rows:
        raise InputError("toolpath file is empty")
    pts = np.array([[float(r["x"]), float(r["y"]), float(r["z"])] for r in rows])
    n = len(pts)
    if "face" in rows[0]:
        return Toolpath(
            points=pts,
            faces=np.array([int(r["face"]) for r in rows]),
            bary=np.array([[float(r["b0"]), float(r["b1"]), float(r["b2"])] for r in rows]),
            phi=np.array([float(r["phi"]) for r in rows]),
            rho=np.array([float(r["rho"]) for r in rows]),
            turn=np.array([int(r["turn"]) for r in rows]),
            meta=meta,
        )
    return Toolpath.from_points(pts, meta=meta)


def to_gcode(path, feed=1000.0, tool_radius=None, safe_z=None):
    """Metric absolute G-code: one rapid approach, then linear moves.

    With ``tool_radius`` and per-point normals the ball-end tip position
    ``p + r n - r z`` is emitted; otherwise the contact points themselves.
    """
    P = path.points
    if tool_radius is not None and path.normals is not None:
        P = P + tool_radius * path.normals - np.array([0, 0, tool_radius])
    lines = ["(slitspiral toolpath)"]
    if path.meta.get("config_hash"):
        lines.append(f"(config {path.meta['config_hash']})")
    lines += ["G21", "G90"]
    if safe_z is not None:
        lines.append(f"G0 Z{safe_z:.6f}")
    x, y, z = P[0]
    lines.append(f"G0 X{x:.6f} Y{y:.6f} Z{z:.6f}")
    turn = -1
    for i in range(1, len(P)):
        if path.turn[i] != turn:
            turn = int(path.turn[i])
            lines.append(f"(turn {turn})")
        x, y, z = P[i]
        cmd = f"G1 X{x:.6f} Y{y:.6f} Z{z:.6f}"
        if i == 1:
            cmd += f" F{feed:.1f}"
        lines.append(cmd)
    lines.append("M2")
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------
def segment_intersections(Q, closed=False):
    """Count crossing or touching pairs among non-adjacent segments of a 2D polyline.

    Uses exact orientation predicates on the float coordinates (rationals via
    ``fractions`` only for near-degenerate candidate pairs).
    """
    Q = np.asarray(Q, dtype=float)
    A, B = Q[:-1], Q[1:]
    n = len(A)
    if n < 3:
        return 0
    lo = np.minimum(A, B)
    hi = np.maximum(A, B)
    order = np.argsort(lo[:, 0], kind="stable")
    count = 0
    from fractions import Fraction

    def orient_exact(p, q, r):
        px, py = Fraction(float(p[0])), Fraction(float(p[1]))
        qx, qy, rx, ry = (Fraction(float(c)) for c in (q[0], q[1], r[0], r[1]))
        v = (qx - px) * (ry - py) - (qy - py) * (rx - px)
        return (v > 0) - (v < 0)

    def orient(p, q, r):
        v = float((q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]))
        scale = (abs(q[0] - p[0]) + abs(q[1] - p[1])) * (abs(r[0] - p[0]) + abs(r[1] - p[1]))
        if abs(v) > 1e-12 * scale:
            return (v > 0) - (v < 0)
        return orient_exact(p, q, r)

    def on_seg(p, q, r):
        return min(p[0], q[0]) <= r[0] <= max(p[0], q[0]) and min(p[1], q[1]) <= r[1] <= max(p[1], q[1])

    def intersects(i, j):
        p1, p2, p3, p4 = A[i], B[i], A[j], B[j]
        d1, d2 = orient(p3, p4, p1), orient(p3, p4, p2)
        d3, d4 = orient(p1, p2, p3), orient(p1, p2, p4)
        if d1 * d2 < 0 and d3 * d4 < 0:
            return True
        return ((d1 == 0 and on_seg(p3, p4, p1)) or (d2 == 0 and on_seg(p3, p4, p2))
                or (d3 == 0 and on_seg(p1, p2, p3)) or (d4 == 0 and on_seg(p1, p2, p4)))

    # sweep over x with an active list
    active = []
    for i in order:
        x0 = lo[i, 0]
        active = [j for j in active if hi[j, 0] >= x0]
        for j in active:
            if abs(i - j) <= 1 or (closed and {i, j} == {0, n - 1}):
                continue
            if lo[i, 1] > hi[j, 1] or lo[j, 1] > hi[i, 1]:
                continue
            if intersects(i, j):
                count += 1
        active.append(i)
    return count
