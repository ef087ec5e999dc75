"""Initial scalar field from the slit map: radial profile ``f`` and pole ``theta``.

The field is ``T = f(|S^S|)`` with ``f`` piecewise linear and strictly
increasing. The optimization mesh ``S^H`` rescales every slit-map position
radially, ``S^H = S^S / |S^S| * f(|S^S|)``, so ``T_init = |S^H|``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import dijkstra

from .energy import EnergyModel, EnergyState
from .errors import InfeasibleError, SlitSpiralError
from .mesh import signed_areas_2d
from .slitmap import Anchor, slit_map

log = logging.getLogger(__name__)

MONOTONE_MARGIN = 1e-9
# faces must keep this fraction of their area under the initial scaling
AREA_KEEP = 1e-3


@dataclass
class RadialProfile:
    """Piecewise-linear, strictly increasing ``f`` on ``[x_0, 1]``."""

    nodes: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.nodes.shape != self.values.shape or len(self.nodes) < 2:
            raise ValueError("nodes and values must be equal-length arrays of length >= 2")
        if np.any(np.diff(self.nodes) <= 0):
            raise ValueError("profile nodes must be strictly increasing")

    @classmethod
    def linear(cls, x0, n=64, scale=1.0):
        """``f(x) = scale * x`` sampled on ``n`` nodes over ``[x0, 1]``."""
        x = np.linspace(x0, 1.0, n)
        return cls(x, scale * x)

    @property
    def is_monotone(self):
        return bool(np.all(np.diff(self.values) > 0))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.nodes[0], self.nodes[-1]
        y = np.interp(x, self.nodes, self.values)
        # linear extrapolation guards against rounding just outside the range
        s0 = (self.values[1] - self.values[0]) / (self.nodes[1] - self.nodes[0])
        s1 = (self.values[-1] - self.values[-2]) / (self.nodes[-1] - self.nodes[-2])
        y = np.where(x < lo, self.values[0] + s0 * (x - lo), y)
        return np.where(x > hi, self.values[-1] + s1 * (x - hi), y)

    def hat(self, k, x):
        """Weight of node ``k`` in the interpolant at ``x``."""
        e = np.zeros(len(self.nodes))
        e[k] = 1.0
        return np.interp(x, self.nodes, e)

    def to_dict(self):
        return {"nodes": self.nodes.tolist(), "values": self.values.tolist()}


@dataclass
class ProfileResult:
    profile: RadialProfile
    E_min: float
    trace: list
    sweeps: int
    scale: float


@dataclass
class InitConfig:
    profile_nodes: int = 64
    step_fraction: float = 0.05
    rel_tol: float = 1e-6
    max_sweeps: int = 200
    theta_seeds: int = 8
    offset_fraction: float = 2.0
    theta_step: float = 0.3
    theta_min_step: float = 0.02
    search_rel_tol: float = 1e-4
    search_max_sweeps: int = 3
    max_descent_steps: int = 12
    rerank: int = 3
    mode: str = "auto"


@dataclass
class ThetaElement:
    """Pole of the initial field: an interior point or an inner boundary."""

    anchor: Anchor
    offset_fraction: float = 2.0

    @property
    def kind(self):
        return "interior-point" if self.anchor.kind == "interior" else "boundary"


@dataclass
class ThetaSearch:
    theta: ThetaElement
    domain: object
    profile: ProfileResult
    E_min: float
    evaluations: list = field(default_factory=list)
    relocations: list = field(default_factory=list)


# ----------------------------------------------------------------------
# radial profile
def _initial_scale(model, r, x0):
    """Best uniform scale ``f(x) = s x``, by bounded search on ``log s``."""

    def energy(log_s):
        return model.total(np.exp(log_s) * r)

    from scipy.optimize import minimize_scalar

    res = minimize_scalar(energy, bounds=(np.log(1e-3), np.log(1e4)), method="bounded",
                          options={"xatol": 1e-3})
    return float(np.exp(res.x))


def optimize_radial_profile(mesh, domain, cutter, alpha, config=None, *, model=None, initial=None):
    """Minimize ``E(f(|S^S|))`` over monotone piecewise-linear profiles.

    Starts from the best uniform scaling ``f(x) = s x``, then perturbs nodes
    one at a time (all but the pinned first node), accepting only decreases
    that keep every ``S^H`` face positively oriented.

    Returns
    -------
    ProfileResult
        ``trace`` holds ``E`` after the scale fit and after every sweep.
    """
    cfg = config or InitConfig()
    model = model or EnergyModel(mesh, cutter, alpha)
    r = domain.radii
    x0 = float(r.min()) if domain.mode == "disk" else float(domain.inner_radius)
    x0 = min(x0, float(r.min()))
    if initial is None:
        scale = _initial_scale(model, r, x0)
        prof = RadialProfile.linear(x0, cfg.profile_nodes, scale)
    else:
        prof = RadialProfile(initial.nodes.copy(), initial.values.copy())
        scale = float(prof.values[-1] / prof.nodes[-1])
    x, f = prof.nodes, prof.values
    n = len(x)

    # per-node supports: vertex indices and hat weights
    seg = np.clip(np.searchsorted(x, r, side="right") - 1, 0, n - 2)
    t = (r - x[seg]) / (x[seg + 1] - x[seg])
    supports = []
    for k in range(n):
        left = np.flatnonzero(seg == k - 1)
        right = np.flatnonzero(seg == k)
        idx = np.r_[left, right]
        w = np.r_[t[left], 1.0 - t[right]]
        keep = w > 0
        supports.append((idx[keep], w[keep]))

    T = np.interp(r, x, f)
    with np.errstate(invalid="ignore", divide="ignore"):
        dirs = np.where(r[:, None] > 0, domain.positions / r[:, None], 0.0)
    area0 = signed_areas_2d(dirs * T[:, None], mesh.faces)
    if np.any(area0 <= 0):
        raise InfeasibleError("infeasible initial profile: inverted faces after scaling")
    min_area = AREA_KEEP * area0
    state = EnergyState(model, T, floor=model.floor_for(T))
    local = [state.support(idx) if len(idx) else None for idx, _ in supports]
    trace = [state.E]
    gaps = np.diff(f)
    step = cfg.step_fraction * np.minimum(np.r_[gaps, gaps[-1]], np.r_[gaps[0], gaps])
    sweeps = 0
    for sweeps in range(1, cfg.max_sweeps + 1):
        best = 0.0
        any_accept = False
        for k in range(1, n):
            idx, w = supports[k]
            for sgn in (1.0, -1.0):
                lo = f[k - 1] + MONOTONE_MARGIN
                hi = f[k + 1] - MONOTONE_MARGIN if k + 1 < n else np.inf
                new = min(max(f[k] + sgn * step[k], lo), hi)
                d = new - f[k]
                if d == 0.0:
                    continue
                if len(idx) == 0:
                    break
                old = f[k]
                f[k] = new
                Tk = np.interp(r[idx], x, f)
                f[k] = old
                dE, upd = state.propose(idx, Tk - state.T[idx], local[k])
                if dE < 0 and _keeps_orientation(state.T, idx, Tk, dirs, local[k], min_area):
                    state.commit(dE, upd)
                    state.T[idx] = Tk
                    f[k] = new
                    best = max(best, -dE)
                    any_accept = True
                    break
            else:
                step[k] *= 0.5
        trace.append(state.E)
        if sweeps == 1 and not any_accept and not np.isfinite(state.E):
            raise InfeasibleError("infeasible initial profile")
        if best < cfg.rel_tol * abs(state.E):
            break
    if not np.all(np.diff(f) > 0):
        raise SlitSpiralError("profile lost monotonicity")
    prof = RadialProfile(x, f)
    E = model.total(prof(r))
    return ProfileResult(profile=prof, E_min=E, trace=trace, sweeps=sweeps, scale=scale)


def _keeps_orientation(T, idx, values, dirs, support, min_area):
    """Whether setting ``T[idx] = values`` keeps every touched face above ``min_area``."""
    faces, _, verts, inv = support
    old = T[idx].copy()
    T[idx] = values
    q = dirs[verts] * T[verts, None]
    T[idx] = old
    return bool(np.all(signed_areas_2d(q, inv.reshape(-1, 3)) > min_area[faces]))


def initialize_domain(mesh, domain, profile):
    """Radially rescale the slit-map image by ``profile``.

    Returns ``(S^H positions, T_init)``; ``mesh`` gets the ``"S^H"`` channel.
    """
    if not profile.is_monotone:
        raise InfeasibleError("profile feasibility violated: values not strictly increasing")
    P = domain.positions
    r = np.linalg.norm(P, axis=1)
    fr = profile(r)
    fr = np.interp(r, profile.nodes, profile.values) if r.min() >= profile.nodes[0] else fr
    with np.errstate(invalid="ignore", divide="ignore"):
        H = np.where(r[:, None] > 0, P * (fr / r)[:, None], 0.0)
    if np.any(fr <= 0):
        raise InfeasibleError("profile feasibility violated: non-positive radius")
    n_inv = int(np.count_nonzero(signed_areas_2d(H, mesh.faces) <= 0))
    if n_inv:
        raise InfeasibleError(f"profile feasibility violated: {n_inv} inverted faces in S^H")
    mesh.set_channel("S^H", H)
    return H, np.linalg.norm(H, axis=1)


# ----------------------------------------------------------------------
# pole search
def _boundary_distance(mesh):
    e = mesh.edges
    w = np.linalg.norm(mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]], axis=1)
    from scipy import sparse

    G = sparse.coo_matrix((w, (e[:, 0], e[:, 1])), shape=(mesh.n_vertices,) * 2).tocsr()
    per_loop = []
    for lp in mesh.boundary_loops:
        per_loop.append(dijkstra(G, directed=False, indices=lp, min_only=True))
    return np.vstack(per_loop)


def _interior_faces(mesh, dist, min_dist):
    dmin = dist.min(axis=0)
    ok = np.all(dmin[mesh.faces] >= min_dist, axis=1)
    return np.flatnonzero(ok)


def seed_faces(mesh, k=8, dist=None):
    """Farthest-point samples among faces at least 3 edge lengths from every boundary."""
    dist = _boundary_distance(mesh) if dist is None else dist
    cand = _interior_faces(mesh, dist, 3 * mesh.mean_edge_length)
    if len(cand) == 0:
        return np.array([], dtype=int)
    c = mesh.vertices[mesh.faces[cand]].mean(axis=1)
    first = int(np.argmin(np.linalg.norm(c - c.mean(axis=0), axis=1)))
    chosen = [first]
    d = np.linalg.norm(c - c[first], axis=1)
    while len(chosen) < min(k, len(cand)):
        nxt = int(np.argmax(d))
        if d[nxt] == 0:
            break
        chosen.append(nxt)
        d = np.minimum(d, np.linalg.norm(c - c[nxt], axis=1))
    return cand[np.array(chosen)]


def offset_faces(mesh, boundary, offset_fraction=2.0, dist=None):
    """Faces forming ``Gamma_i^off``: the inward offset of boundary ``i``.

    One face per vertex at the first distance ring of at least
    ``offset_fraction`` mean edge lengths; the face of that vertex that lies
    farthest from every boundary is used.
    """
    dist = _boundary_distance(mesh) if dist is None else dist
    h = mesh.mean_edge_length
    d_i = dist[boundary]
    dmin = dist.min(axis=0)
    target = offset_fraction * h
    nearest = d_i <= dmin + 1e-12
    ring = np.flatnonzero(nearest & (d_i >= target) & (d_i < target + h))
    out = []
    for v in ring:
        fs = mesh.faces_of(v)
        score = dmin[mesh.faces[fs]].min(axis=1)
        f = int(fs[np.argmax(score)])
        if score.max() >= 2 * h - 1e-12:
            out.append(f)
    return np.unique(np.array(out, dtype=int))


def locate(points2d, positions, faces, tol=1e-12):
    """Face index and barycentric coordinates of each 2D point (``-1`` if outside)."""
    P = positions[faces]
    a, b, c = P[:, 0], P[:, 1], P[:, 2]
    v0, v1 = b - a, c - a
    den = v0[:, 0] * v1[:, 1] - v0[:, 1] * v1[:, 0]
    out_f = np.full(len(points2d), -1)
    out_b = np.zeros((len(points2d), 3))
    for i, p in enumerate(np.atleast_2d(points2d)):
        w = p - a
        l1 = (w[:, 0] * v1[:, 1] - w[:, 1] * v1[:, 0]) / den
        l2 = (v0[:, 0] * w[:, 1] - v0[:, 1] * w[:, 0]) / den
        l0 = 1 - l1 - l2
        inside = (l0 >= -tol) & (l1 >= -tol) & (l2 >= -tol)
        hit = np.flatnonzero(inside)
        if len(hit):
            j = hit[np.argmax(np.minimum(np.minimum(l0[hit], l1[hit]), l2[hit]))]
            bb = np.clip([l0[j], l1[j], l2[j]], 0, None)
            out_f[i], out_b[i] = j, bb / bb.sum()
    return out_f, out_b


class _Evaluator:
    """Caches ``E_min`` per pole so the search never re-solves a candidate."""

    def __init__(self, mesh, cutter, alpha, cfg, model):
        self.mesh, self.cutter, self.alpha, self.cfg, self.model = mesh, cutter, alpha, cfg, model
        self.cache = {}
        self.log = []
        self.search_cfg = InitConfig(**{**cfg.__dict__, "rel_tol": cfg.search_rel_tol,
                                        "max_sweeps": cfg.search_max_sweeps})

    def __call__(self, anchor):
        key = (anchor.kind, anchor.face, anchor.boundary, tuple(np.round(anchor.bary, 12)))
        if key in self.cache:
            return self.cache[key]
        try:
            dom = slit_map(self.mesh, anchor)
            res = optimize_radial_profile(self.mesh, dom, self.cutter, self.alpha, self.search_cfg,
                                          model=self.model)
            out = (res.E_min, dom, res)
        except (InfeasibleError, SlitSpiralError) as exc:
            log.debug("candidate %s rejected: %s", anchor, exc)
            out = (np.inf, None, None)
        self.cache[key] = out
        self.log.append({"anchor": anchor, "E_min": out[0]})
        return out


def _descend(mesh, start, evaluate, cfg, dist, relocations):
    """Discrete descent on the pole, probing six directions in the slit plane."""
    E, dom, _ = evaluate(start)
    cur = start
    step = cfg.theta_step
    for _ in range(cfg.max_descent_steps):
        if dom is None or step < cfg.theta_min_step:
            break
        best = (E, cur)
        for j in range(6):
            psi = 2 * np.pi * j / 6
            cand = _probe(mesh, dom, psi, step, cfg, dist, evaluate, relocations)
            if cand is not None:
                Ec = evaluate(cand)[0]
                if Ec < best[0]:
                    best = (Ec, cand)
        if best[1] is cur:
            step *= 0.5
            continue
        cur = best[1]
        E, dom, _ = evaluate(cur)
    return cur, E


def _probe(mesh, dom, psi, step, cfg, dist, evaluate, relocations):
    """Pole reached by moving ``step`` along direction ``psi`` of the slit plane."""
    crossed = [s for s in dom.slits if s.radius < step and s.contains(psi)]
    if crossed:
        s = min(crossed, key=lambda s: s.radius)
        ring = offset_faces(mesh, s.boundary, cfg.offset_fraction, dist)
        if len(ring) == 0:
            return None
        cands = [Anchor.interior(int(f)) for f in ring[:: max(1, len(ring) // 8)]]
        E = [evaluate(a)[0] for a in cands]
        best = cands[int(np.argmin(E))]
        relocations.append({"boundary": s.boundary, "face": best.face})
        return best
    if step >= 1.0:
        return None
    p = step * np.array([[np.cos(psi), np.sin(psi)]])
    f, b = locate(p, dom.positions, mesh.faces)
    if f[0] < 0:
        return None
    return Anchor.interior(int(f[0]), b[0])


def search_theta(mesh, cutter, alpha, config=None, *, model=None, start=None):
    """Search the pole minimizing ``E_min``.

    Interior candidates descend from farthest-point seeds (or ``start``);
    annulus candidates are every inner boundary. ``config.mode`` restricts
    the branches to ``"disk"`` or ``"annulus"``.
    """
    cfg = config or InitConfig()
    model = model or EnergyModel(mesh, cutter, alpha)
    evaluate = _Evaluator(mesh, cutter, alpha, cfg, model)
    dist = _boundary_distance(mesh)
    relocations = []
    results = []
    n_loops = len(mesh.boundary_loops)
    if cfg.mode in ("auto", "annulus"):
        for i in range(1, n_loops):
            a = Anchor.on_boundary(i)
            results.append((evaluate(a)[0], a))
    if cfg.mode in ("auto", "disk"):
        starts = [start] if start is not None else [
            Anchor.interior(int(f)) for f in seed_faces(mesh, cfg.theta_seeds, dist)]
        for a in starts:
            best, E = _descend(mesh, a, evaluate, cfg, dist, relocations)
            results.append((E, best))
    results = [r for r in results if np.isfinite(r[0])]
    if not results:
        raise InfeasibleError("no feasible pole candidate")
    # screening used a few sweeps; the best few are re-ranked at full tolerance
    ranked, seen = [], set()
    for E, a in sorted(results, key=lambda r: r[0]):
        key = (a.kind, a.face, a.boundary)
        if key not in seen:
            seen.add(key)
            ranked.append(a)
    best = None
    for a in ranked[:max(1, cfg.rerank)]:
        _, dom, _ = evaluate(a)
        prof = optimize_radial_profile(mesh, dom, cutter, alpha, cfg, model=model)
        if best is None or prof.E_min < best[2].E_min:
            best = (a, dom, prof)
    anchor, dom, prof = best
    return ThetaSearch(theta=ThetaElement(anchor, cfg.offset_fraction), domain=dom, profile=prof,
                       E_min=prof.E_min, evaluations=evaluate.log, relocations=relocations)
