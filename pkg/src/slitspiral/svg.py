"""Minimal SVG writers for toolpaths, planar domains and per-sample maps."""

from __future__ import annotations

import numpy as np

POLYLINE_CHUNK = 2000
PANEL = 400.0
PAD = 10.0


def _fmt(x):
    return f"{x:.4f}"


def _fit(xy, x0=0.0):
    """Affine map of 2D points into a ``PANEL`` square starting at ``x0`` (y flipped)."""
    lo, hi = xy.min(axis=0), xy.max(axis=0)
    span = float(max(hi - lo)) or 1.0
    s = (PANEL - 2 * PAD) / span

    def tr(p):
        p = np.atleast_2d(p)
        return np.column_stack([x0 + PAD + (p[:, 0] - lo[0]) * s, PANEL - PAD - (p[:, 1] - lo[1]) * s])

    return tr


def _polylines(q, stroke, width=0.6, closed=False):
    out = []
    n = len(q)
    for lo in range(0, max(n - 1, 1), POLYLINE_CHUNK - 1):
        seg = q[lo:lo + POLYLINE_CHUNK]
        pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in seg)
        tag = "polygon" if closed and n <= POLYLINE_CHUNK else "polyline"
        out.append(f'<{tag} fill="none" stroke="{stroke}" stroke-width="{width}" points="{pts}"/>')
    return out


def _document(body, width, comment=None):
    head = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(width)}" height="{_fmt(PANEL)}" '
            f'viewBox="0 0 {_fmt(width)} {_fmt(PANEL)}">']
    if comment:
        head.append(f"<!-- {comment} -->")
    return "\n".join(head + body + ["</svg>", ""])


def _boundary_lines(mesh, xy, tr, stroke="#444"):
    out = []
    for loop in mesh.boundary_loops:
        out += _polylines(tr(xy[np.r_[loop, loop[:1]]]), stroke, width=1.0)
    return out


def toolpath_svg(path, filename, mesh=None, comment=None):
    """Domain-space view (left) and top-down projection of the 3D path (right)."""
    if comment is None and path.meta.get("config_hash"):
        comment = f"config {path.meta['config_hash']}"
    body = []
    dom = path.domain
    has_domain = np.any(path.rho != 0)
    x0 = 0.0
    if has_domain:
        pts = dom
        if mesh is not None and "S^H" in mesh.channels:
            pts = np.vstack([dom, mesh.channel("S^H")])
        tr = _fit(pts)
        if mesh is not None and "S^H" in mesh.channels:
            body += _boundary_lines(mesh, mesh.channel("S^H"), tr)
        body += _polylines(tr(dom), "#c0392b")
        x0 = PANEL
    P = path.points[:, :2]
    pts = P if mesh is None else np.vstack([P, mesh.vertices[:, :2]])
    tr = _fit(pts, x0)
    if mesh is not None:
        body += _boundary_lines(mesh, mesh.vertices[:, :2], tr)
    body += _polylines(tr(P), "#1f4e8c")
    with open(filename, "w") as fh:
        fh.write(_document(body, x0 + PANEL, comment))


def domain_svg(mesh, positions, filename, slits=(), comment=None, edges=True):
    """Planar domain with mesh edges, boundary images and slit arcs."""
    tr = _fit(positions)
    body = []
    if edges:
        q = tr(positions)
        for a, b in mesh.edges:
            body.append(f'<line x1="{_fmt(q[a, 0])}" y1="{_fmt(q[a, 1])}" x2="{_fmt(q[b, 0])}" '
                        f'y2="{_fmt(q[b, 1])}" stroke="#bbb" stroke-width="0.2"/>')
    body += _boundary_lines(mesh, positions, tr, stroke="#000")
    for s in slits:
        t = np.linspace(s.start, s.end, 128)
        body += _polylines(tr(s.radius * np.column_stack([np.cos(t), np.sin(t)])), "#c0392b", width=1.5)
    with open(filename, "w") as fh:
        fh.write(_document(body, PANEL, comment))


def _color(t):
    """Blue-to-red ramp for ``t`` in [0, 1]."""
    t = float(np.clip(t, 0, 1))
    r, g, b = int(255 * t), int(80 + 100 * (1 - abs(2 * t - 1))), int(255 * (1 - t))
    return f"#{r:02x}{g:02x}{b:02x}"


def sample_map_svg(points, values, filename, missing_color="#000000", comment=None, max_points=20000):
    """Top-down scatter of per-sample values; non-finite values drawn in ``missing_color``."""
    P = np.asarray(points)[:, :2]
    v = np.asarray(values, dtype=float)
    step = max(1, len(P) // max_points)
    P, v = P[::step], v[::step]
    tr = _fit(P)
    q = tr(P)
    fin = np.isfinite(v)
    lo, hi = (v[fin].min(), v[fin].max()) if np.any(fin) else (0.0, 1.0)
    span = hi - lo or 1.0
    body = []
    for (x, y), val, ok in zip(q, v, fin):
        c = _color((val - lo) / span) if ok else missing_color
        body.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="1.2" fill="{c}"/>')
    with open(filename, "w") as fh:
        fh.write(_document(body, PANEL, comment))
