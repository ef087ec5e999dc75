"""Topology-preserving radial descent on the planar field mesh ``S^H``.

Each vertex of ``S^H`` sits at polar position ``(rho, phi)`` and the field is
``T = rho``. Only ``rho`` changes: interior vertices individually, boundary
loops as rigid circles. Steps stay inside per-vertex feasible intervals, so
no face of ``S^H`` can flip.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .energy import EnergyModel
from .errors import SlitSpiralError
from .mesh import signed_areas_2d

log = logging.getLogger(__name__)

DEFAULT_C = 0.9
INTERVAL_MARGIN = 0.95
FD_REL = 1e-4


@dataclass
class FeasibleInterval:
    lambda_plus: float
    lambda_minus: float
    source: str = "interior-hull"

    def contains(self, lam):
        return self.lambda_minus < lam < self.lambda_plus


@dataclass
class OptimizerConfig:
    C: float = DEFAULT_C
    max_iters: int = 2000
    rel_tol: float = 1e-7
    patience: int = 5
    max_halvings: int = 10
    move_outer: bool = True
    target_E: float | None = None
    freeze_rel: float = 1e-2
    norm_quantile: float = 0.9

    def __post_init__(self):
        if not 0.5 < self.C < 1:
            raise ValueError("C must lie in (0.5, 1)")


@dataclass
class OptimizeResult:
    positions: np.ndarray
    T: np.ndarray
    E_init: float
    E: float
    status: str
    iterations: int
    trace: list = field(default_factory=list)
    target_iteration: int | None = None

    def write_trace(self, path, timing=False):
        cols = ["iter", "E", "E_w", "E_k", "max_step", "halvings", "inverted", "cocircular_dev"]
        if timing:
            cols.append("time")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for row in self.trace:
                w.writerow([_fmt(row[c]) for c in cols])


def _fmt(x):
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


class RadialState:
    """Polar coordinates of ``S^H`` plus the optimization entries.

    Entries are the interior vertices followed by the movable boundary loops.
    """

    def __init__(self, mesh, positions, move_outer=True, fixed_loops=()):
        self.mesh = mesh
        P = np.asarray(positions, dtype=float)
        self.rho = np.linalg.norm(P, axis=1)
        self.phi = np.arctan2(P[:, 1], P[:, 0])
        self.loops = mesh.boundary_loops
        for lp in self.loops:
            self.rho[lp] = self.rho[lp].mean()
        self.interior = mesh.interior_vertices
        fixed = set(fixed_loops)
        if not move_outer:
            fixed.add(0)
        self.movable = [i for i in range(len(self.loops)) if i not in fixed]
        self.n_entries = len(self.interior) + len(self.movable)

    @property
    def positions(self):
        return self.rho[:, None] * np.column_stack([np.cos(self.phi), np.sin(self.phi)])

    def directions(self):
        return np.column_stack([np.cos(self.phi), np.sin(self.phi)])

    def expand(self, values):
        """Per-entry values to per-vertex values (loop members share their entry)."""
        out = np.zeros(self.mesh.n_vertices)
        k = len(self.interior)
        out[self.interior] = values[:k]
        for j, i in enumerate(self.movable):
            out[self.loops[i]] = values[k + j]
        return out

    def reduce(self, per_vertex, how="sum"):
        k = len(self.interior)
        out = np.empty(self.n_entries)
        out[:k] = per_vertex[self.interior]
        for j, i in enumerate(self.movable):
            v = per_vertex[self.loops[i]]
            out[k + j] = {"sum": np.sum, "min": np.min, "max": np.max}[how](v)
        return out

    def moved(self, steps):
        """Radii after applying per-entry steps; loops stay exactly co-circular."""
        rho = self.rho.copy()
        k = len(self.interior)
        rho[self.interior] += steps[:k]
        for j, i in enumerate(self.movable):
            lp = self.loops[i]
            rho[lp] = rho[lp[0]] + steps[k + j]
        return rho

    def cocircular_deviation(self, rho=None):
        rho = self.rho if rho is None else rho
        P = rho[:, None] * self.directions()
        r = np.linalg.norm(P, axis=1)
        dev = [float(np.ptp(r[lp]) / r[lp].mean()) for lp in self.loops]
        return max(dev) if dev else 0.0


def vertex_intervals(mesh, positions, arc_cap=True):
    """Feasible radial intervals ``(lambda_minus, lambda_plus)`` of every vertex.

    Each one-ring triangle ``(V, A, B)`` adds two half-planes bounded by the
    angle bisectors at ``A`` and ``B`` on the side containing ``V``. Boundary
    vertices are further capped by an arc of one local edge length.
    """
    P = np.asarray(positions, dtype=float)
    F = mesh.faces
    n = mesh.n_vertices
    rho = np.linalg.norm(P, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        d = np.where(rho[:, None] > 0, P / rho[:, None], 0.0)
    upper = np.full(n, np.inf)
    lower = np.full(n, -np.inf)
    for k in range(3):
        V, A, B = F[:, k], F[:, (k + 1) % 3], F[:, (k + 2) % 3]
        for X, Y in ((A, B), (B, A)):
            e1 = P[Y] - P[X]
            e2 = P[V] - P[X]
            b = e1 / np.linalg.norm(e1, axis=1)[:, None] + e2 / np.linalg.norm(e2, axis=1)[:, None]
            c0 = _cross(b, e2)
            c1 = _cross(b, d[V])
            sgn = np.sign(c0)
            c0, c1 = c0 * sgn, c1 * sgn
            with np.errstate(invalid="ignore", divide="ignore"):
                lim = c0 / -c1
            up = c1 < 0
            np.minimum.at(upper, V[up], lim[up])
            dn = c1 > 0
            np.maximum.at(lower, V[dn], lim[dn])
            bad = ~(c0 > 0)
            if np.any(bad):
                upper[V[bad]] = 0.0
                lower[V[bad]] = 0.0
    lower = np.maximum(lower, -rho)
    if arc_cap:
        bnd = mesh.boundary_id >= 0
        e = mesh.edges
        L = np.linalg.norm(P[e[:, 0]] - P[e[:, 1]], axis=1)
        cap = np.bincount(e.ravel(), np.repeat(L, 2), n) / np.maximum(np.bincount(e.ravel(), minlength=n), 1)
        upper[bnd] = np.minimum(upper[bnd], cap[bnd])
        lower[bnd] = np.maximum(lower[bnd], -cap[bnd])
    return lower, upper


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def feasible_interval(mesh, positions, vertex):
    """Feasible radial interval of one vertex (see ``vertex_intervals``)."""
    lo, up = vertex_intervals(mesh, positions)
    if not lo[vertex] < 0 < up[vertex]:
        raise SlitSpiralError("mesh state invalid: empty feasible interval")
    src = "boundary-hull-with-arc-cap" if mesh.boundary_id[vertex] >= 0 else "interior-hull"
    return FeasibleInterval(float(up[vertex]), float(lo[vertex]), src)


def entry_intervals(state, positions=None):
    lo, up = vertex_intervals(state.mesh, state.positions if positions is None else positions)
    return state.reduce(lo, "max"), state.reduce(up, "min"), lo, up


def radial_gradient(model, state, lo=None, up=None, floor=None):
    """Per-entry ``dE/d lambda``; loops sum their members.

    Central differences of the local two-ring energy with step
    ``1e-4 * min(|lambda_minus|, |lambda_plus|)`` per vertex. Vertices whose
    step underflows get gradient 0.
    """
    if lo is None:
        _, _, lo, up = entry_intervals(state)
    h = FD_REL * np.minimum(-lo, up)
    tiny = h <= 1e-12 * np.maximum(state.rho, 1e-300)
    h = np.where(tiny | ~np.isfinite(h), 0.0, h)
    dv = model.vertex_derivatives(state.rho, h, floor)
    return state.reduce(np.where(h > 0, dv, 0.0), "sum")


def step_lengths(G, lo, up, C=DEFAULT_C, quantile=1.0):
    """Sigmoid-normalized steps opposing ``G`` within ``(lo, up)``.

    ``G1 = -G / limit`` is scaled so that its ``quantile`` of ``|G1|`` (the
    maximum by default) maps to a step of ``(2C - 1) * limit``; larger
    entries saturate towards their limit.
    """
    G = np.asarray(G, dtype=float)
    if not 0.5 < C < 1:
        raise ValueError("C must lie in (0.5, 1)")
    limit = np.where(-G > 0, up, -lo)
    limit = np.where(np.isfinite(limit), limit, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        G1 = np.where(limit > 0, -G / limit, 0.0)
    a = np.abs(G1[G1 != 0])
    if a.size == 0:
        return np.zeros_like(G)
    m = np.max(a) if quantile >= 1 else np.quantile(a, quantile)
    if not m > 0:
        return np.zeros_like(G)
    G2 = np.log(1.0 / C - 1.0) * G1 / m
    return (2.0 / (1.0 + np.exp(np.clip(G2, -700, 700))) - 1.0) * limit


def optimize(mesh, positions, cutter, alpha, config=None, *, model=None, fixed_loops=(),
             callback=None):
    """Minimize ``E(|S^H|)`` by synchronous radial moves.

    Parameters
    ----------
    positions : (n, 2) array
        Initial ``S^H`` (the ω_H-initialized image, or the raw slit map).
    config : OptimizerConfig
        ``target_E`` records the first iteration reaching that energy.

    Returns
    -------
    OptimizeResult
    """
    cfg = config or OptimizerConfig()
    state = RadialState(mesh, positions, cfg.move_outer, fixed_loops)
    base = model or EnergyModel(mesh, cutter, alpha)
    floor = base.floor_for(state.rho)
    model = EnergyModel(mesh, cutter, base.alpha, frame=base.frame, grad_floor=floor,
                        printed_normal=base.printed_normal)
    F = mesh.faces
    if np.any(signed_areas_2d(state.positions, F) <= 0):
        raise SlitSpiralError("mesh state invalid: initial S^H has inverted faces")
    rep = model.evaluate(state.rho)
    E = rep.E
    trace = [_row(0, rep, 0.0, 0, 0, state.cocircular_deviation(), 0.0)]
    status, streak, target_iter = "max_iters", 0, None
    if cfg.target_E is not None and E <= cfg.target_E:
        target_iter = 0
    it = 0
    for it in range(1, cfg.max_iters + 1):
        t0 = time.perf_counter()
        lo_e, up_e, lo_v, up_v = entry_intervals(state)
        G = radial_gradient(model, state, lo_v, up_v, floor)
        G = np.where(_squeezed(G, lo_e, up_e, cfg.freeze_rel), 0.0, G)
        lam = step_lengths(G, lo_e, up_e, cfg.C, cfg.norm_quantile)
        lam = np.clip(lam, INTERVAL_MARGIN * lo_e, INTERVAL_MARGIN * up_e)
        if not np.any(lam):
            status = "converged"
            it -= 1
            break
        accepted = False
        for halving in range(cfg.max_halvings + 1):
            rho = state.moved(lam)
            P = rho[:, None] * state.directions()
            if np.all(signed_areas_2d(P, F) > 0):
                new = model.evaluate(rho)
                if new.E <= E:
                    accepted = True
                    break
            lam = 0.5 * lam
        if not accepted:
            status = "stalled"
            it -= 1
            break
        state.rho = rho
        rel = (E - new.E) / abs(E)
        E, rep = new.E, new
        trace.append(_row(it, rep, float(np.max(np.abs(lam))), halving, 0,
                          state.cocircular_deviation(), time.perf_counter() - t0))
        if callback is not None:
            callback(it, state, rep)
        if target_iter is None and cfg.target_E is not None and E <= cfg.target_E:
            target_iter = it
        streak = streak + 1 if rel < cfg.rel_tol else 0
        if streak >= cfg.patience:
            status = "converged"
            break
    return OptimizeResult(positions=state.positions, T=state.rho.copy(), E_init=trace[0]["E"], E=E,
                          status=status, iterations=it, trace=trace, target_iteration=target_iter)


def _squeezed(G, lo, up, rel):
    """Entries whose room in the descent direction is tiny next to the median room."""
    limit = np.where(-G > 0, up, -lo)
    ok = np.isfinite(limit) & (limit > 0)
    if not np.any(ok):
        return np.ones(len(G), bool)
    return ~ok | (limit < rel * np.median(limit[ok]))


def _row(it, rep, step, halvings, inverted, dev, dt):
    return {"iter": it, "E": rep.E, "E_w": rep.E_w, "E_k": rep.E_k, "max_step": step,
            "halvings": halvings, "inverted": inverted, "cocircular_dev": dev, "time": dt}
