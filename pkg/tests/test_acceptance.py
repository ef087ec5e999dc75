"""Acceptance criteria 1-10 on the bundled meshes.

Each criterion prints one ``PASS``/``FAIL`` line (also repeated in the pytest
terminal summary). Heavy pipeline runs are shared through session fixtures.

Anchors are frozen to the poles found by the full theta search at alpha = 10
so the suite does not repeat the search:

- freeform: interior face 1342 (centroid)
- threehole: interior face 149, barycentric (0.3235, 0.5443, 0.1321)
- annulus: inner boundary 1
"""

from __future__ import annotations

import json
import time
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slitspiral import cli, meshgen
from slitspiral.energy import CutterSpec, EnergyModel
from slitspiral.mesh import signed_areas_2d
from slitspiral.metrics import (SurfaceSamples, impact_metrics, path_metrics, scallop_map,
                                scallop_residuals)
from slitspiral.optimizer import FD_REL, RadialState, entry_intervals, optimize, radial_gradient
from slitspiral.pipeline import PipelineConfig, run_plan
from slitspiral.slitmap import Anchor, slit_map, slit_quality
from slitspiral.toolpath import Toolpath

pytestmark = pytest.mark.slow

MESHES = ("annulus", "freeform", "threehole")
THREEHOLE_BARY = (0.32352907575532125, 0.5443461035858682, 0.13212482065881054)
ANCHORS = {
    "freeform": {"anchor_face": 1342},
    "threehole": {"anchor_face": 149, "anchor_bary": THREEHOLE_BARY},
    "annulus": {"anchor_boundary": 1},
}
RAW_MAX_ITERS = 1000
H_SET, TOOL_RADIUS = 0.2, 10.0

RESULTS: dict[int, str] = {}


def report(n, ok, detail):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line)
    return ok


def _config(name, **kw):
    return PipelineConfig(mesh=str(meshgen.bundled_path(name)), tool_radius=TOOL_RADIUS, h_set=H_SET,
                          **{**ANCHORS[name], **kw})


class _Recorder:
    """Optimizer callback: topology checks at every accepted iteration."""

    def __init__(self, mesh):
        self.faces = mesh.faces
        self.inverted = []
        self.cocircular = []

    def __call__(self, it, state, rep):
        self.inverted.append(int(np.count_nonzero(signed_areas_2d(state.positions, self.faces) <= 0)))
        self.cocircular.append(state.cocircular_deviation())


@pytest.fixture(scope="session")
def plans():
    out = {}
    for name in MESHES:
        cfg = _config(name)
        rec = _Recorder(meshgen.load_bundled(name))
        t0 = time.perf_counter()
        res = run_plan(cfg, write=False, callback=rec)
        out[name] = (res, rec, time.perf_counter() - t0)
    return out


@pytest.fixture(scope="session")
def raw_runs(plans):
    """Optimizer runs from the raw slit map (no radial profile), capped at RAW_MAX_ITERS."""
    out = {}
    for name in MESHES:
        res = plans[name][0]
        cfg = _config(name, init="raw", max_iters=RAW_MAX_ITERS)
        rec = _Recorder(res.mesh)
        fixed = (res.anchor.boundary,) if res.anchor.kind == "boundary" else ()
        model = EnergyModel(res.mesh, CutterSpec(cfg.tool_radius), cfg.alpha)
        opt = optimize(res.mesh, res.domain.positions, CutterSpec(cfg.tool_radius), cfg.alpha,
                       cfg.optimizer_config(), model=model, fixed_loops=fixed, callback=rec)
        out[name] = (opt, rec)
    return out


# ----------------------------------------------------------------------
def test_01_slit_map_validity():
    mesh = meshgen.load_bundled("threehole")
    t0 = time.perf_counter()
    dom = slit_map(mesh, Anchor.interior(149, THREEHOLE_BARY))
    elapsed = time.perf_counter() - t0
    q = slit_quality(mesh, dom)
    spread = max(q.slit_spread.values())
    flux = max(abs(v) for v in q.flux_residuals.values())
    ok = (mesh.n_faces > 9000 and len(dom.slits) == 3 and q.outer_radius_error < 1e-6 and spread < 1e-3
          and flux < 1e-8 and q.inverted_faces == 0 and elapsed < 10)
    report(1, ok, f"faces={mesh.n_faces} outer_err={q.outer_radius_error:.2e} spread={spread:.2e} "
                  f"flux={flux:.2e} inverted={q.inverted_faces} time={elapsed:.2f}s")
    assert ok


def test_02_gradient_correctness(plans):
    res = plans["freeform"][0]
    mesh = res.mesh
    from slitspiral.field_init import initialize_domain

    H, _ = initialize_domain(mesh, res.domain, res.profile.profile)
    state = RadialState(mesh, H)
    base = EnergyModel(mesh, CutterSpec(TOOL_RADIUS), 10.0)
    floor = base.floor_for(state.rho)
    model = EnergyModel(mesh, CutterSpec(TOOL_RADIUS), 10.0, frame=base.frame, grad_floor=floor)
    _, _, lo, up = entry_intervals(state)
    G = radial_gradient(model, state, lo, up, floor)
    rng = np.random.default_rng(2024)
    picks = rng.choice(len(state.interior), 100, replace=False)
    errs = []
    for k in picks:
        v = state.interior[k]
        h = FD_REL * min(-lo[v], up[v])
        tp, tm = state.rho.copy(), state.rho.copy()
        tp[v] += h
        tm[v] -= h
        fd = (model.evaluate(tp).E - model.evaluate(tm).E) / (2 * h)
        errs.append(abs(G[k] - fd) / abs(fd))
    worst = max(errs)
    ok = worst < 1e-4
    report(2, ok, f"100 vertices on freeform, max relative error {worst:.2e}")
    assert ok


def test_03_topology_preservation(plans, raw_runs):
    details, ok = [], True
    for name in MESHES:
        for tag, rec in (("init", plans[name][1]), ("raw", raw_runs[name][1])):
            inv = max(rec.inverted, default=0)
            dev = max(rec.cocircular, default=0.0)
            ok &= inv == 0 and dev < 1e-9 and len(rec.inverted) > 0
            details.append(f"{name}/{tag}: {len(rec.inverted)} it, inv={inv}, dev={dev:.1e}")
    report(3, ok, "; ".join(details))
    assert ok


def test_04_monotone_descent(plans, raw_runs):
    ok = True
    for name in MESHES:
        for trace in (plans[name][0].opt.trace, raw_runs[name][0].trace):
            E = np.array([row["E"] for row in trace])
            ok &= bool(np.all(np.diff(E) <= 0))
    th = plans["threehole"][0].opt
    ok &= th.E < th.E_init
    report(4, ok, f"accepted E non-increasing on all runs; threehole E {th.E_init:.1f} -> {th.E:.1f}")
    assert ok


def test_05_initialization_benefit(plans, raw_runs):
    ok, details = True, []
    for name in MESHES:
        res = plans[name][0]
        raw = raw_runs[name][0]
        E_init_run = np.array([row["E"] for row in res.opt.trace])
        reach = np.flatnonzero(E_init_run <= raw.E)
        first = int(res.opt.trace[reach[0]]["iter"]) if len(reach) else None
        fast = first is not None and first <= 0.5 * raw.iterations
        agree = abs(res.opt.E - raw.E) / raw.E
        ok &= fast and agree <= 0.02
        details.append(f"{name}: raw E={raw.E:.4g} in {raw.iterations} it ({raw.status}), "
                       f"init reaches it at {first}, final E={res.opt.E:.4g}, gap={100 * agree:.1f}%")
    report(5, ok, "; ".join(details))
    assert ok


@pytest.fixture(scope="session")
def alpha_sweep(plans):
    rows = {10.0: plans["freeform"][0]}
    for a in (100.0, 1.0):
        rows[a] = run_plan(_config("freeform", alpha=a), write=False)
    return rows


def test_06_alpha_sweep_trends(alpha_sweep):
    alphas = (100.0, 10.0, 1.0)
    m = {a: alpha_sweep[a].metrics for a in alphas}
    ok, bad = True, []
    for key, sign in (("length", -1), ("CT2", -1), ("CT_max", -1), ("smoothness", 1)):
        vals = [m[a][key] for a in alphas]
        mono = all(sign * (y - x) >= 0 for x, y in zip(vals, vals[1:]))
        strict = sign * (vals[-1] - vals[0]) > 0
        if not (mono and strict):
            bad.append(key)
        ok &= mono and strict
    table = ", ".join(f"a={a:g}: L={m[a]['length']:.1f} rho2={m[a]['smoothness']:.2f} "
                      f"CT2={m[a]['CT2']:.3f} CTmax={m[a]['CT_max']}" for a in alphas)
    report(6, ok, table + (f"; violated: {bad}" if bad else ""))
    assert ok


def _plane_two_pass(r, d):
    """Envelope residual at the midpoint between two straight passes on z = 0."""
    y = np.linspace(-20 * r, 20 * r, 401)
    a = np.column_stack([np.full_like(y, -d / 2), y, np.zeros_like(y)])
    b = np.column_stack([np.full_like(y, d / 2), y[::-1], np.zeros_like(y)])
    centers = np.vstack([a, b]) + np.array([0.0, 0.0, r])
    x = np.linspace(-d / 2, d / 2, 201)
    pts = np.column_stack([x, np.zeros_like(x), np.zeros_like(x)])
    res = scallop_residuals(pts, np.tile([0.0, 0.0, 1.0], (len(x), 1)), centers, r)
    return float(res.max())


def _sphere_two_pass(R, r, d, phi0=np.radians(60)):
    """Envelope residual between two latitude passes on a sphere of radius R."""
    # dense samples over the window the tool can reach from psi = 0, so the
    # chord sag of the polyline stays far below the scallop height
    psi = np.linspace(-0.3, 0.3, 20001)
    centers = []
    for phi in (phi0 - d / (2 * R), phi0 + d / (2 * R)):
        n = np.column_stack([np.sin(phi) * np.cos(psi), np.sin(phi) * np.sin(psi), np.full_like(psi, np.cos(phi))])
        centers.append((R + r) * n)
    centers = np.vstack([centers[0], centers[1][::-1]])
    ph = np.linspace(phi0 - d / (2 * R), phi0 + d / (2 * R), 41)
    nrm = np.column_stack([np.sin(ph), np.zeros_like(ph), np.cos(ph)])
    res = scallop_residuals(R * nrm, nrm, centers, r)
    return float(res.max())


def _sphere_closed_form(R, r, d):
    th = d / R
    return (R + r) * np.cos(th / 2) - np.sqrt(r ** 2 - (R + r) ** 2 * np.sin(th / 2) ** 2) - R


def test_07_scallop_model_fidelity():
    r, R = TOOL_RADIUS, 50.0
    worst, details = 0.0, []
    # plane: T = x on a flat grid, |grad T| = 1
    plane = meshgen.grid_square(20, 100.0)
    q_plane = EnergyModel(plane, CutterSpec(r), 10.0).evaluate(plane.vertices[:, 0], per_face=True).per_face["q"]
    q_plane = float(np.sum(plane.face_areas * q_plane) / plane.face_areas.sum())
    # sphere: T = geodesic distance from the pole, |grad T| = 1
    cap = meshgen.sphere_cap(5, R, z_min=-0.3)
    V = cap.vertices
    T = R * np.arccos(np.clip(V[:, 2] / R, -1, 1))
    qs = EnergyModel(cap, CutterSpec(r), 10.0).evaluate(T, per_face=True).per_face["q"]
    c = V[cap.faces].mean(axis=1)
    pol = np.arccos(c[:, 2] / np.linalg.norm(c, axis=1))
    band = (pol > np.radians(30)) & (pol < np.radians(90))
    q_sphere = float(np.sum(cap.face_areas[band] * qs[band]) / cap.face_areas[band].sum())
    for ratio in (0.02, 0.05, 0.1):
        d = ratio * r
        env_p = _plane_two_pass(r, d)
        exact_p = r - np.sqrt(r * r - d * d / 4)
        env_s = _sphere_two_pass(R, r, d)
        exact_s = _sphere_closed_form(R, r, d)
        # the envelope code must agree with the closed forms before serving as oracle
        assert env_p == pytest.approx(exact_p, rel=1e-6)
        assert env_s == pytest.approx(exact_s, rel=1e-3)
        e_p = abs(q_plane * d * d - env_p) / env_p
        e_s = abs(q_sphere * d * d - env_s) / env_s
        worst = max(worst, e_p, e_s)
        details.append(f"d/r={ratio}: plane {100 * e_p:.3f}%, sphere {100 * e_s:.3f}%")
    # two-pass plane case r = 5, d = 0.4 through the full scallop map
    m = meshgen.grid_square(10, 20.0)
    y = np.linspace(0, 20, 41)
    a = np.column_stack([np.full_like(y, 9.8), y, np.zeros_like(y)])
    b = np.column_stack([np.full_like(y, 10.2), y[::-1], np.zeros_like(y)])
    x = np.linspace(9.8, 10.2, 81)
    smp = SurfaceSamples(np.column_stack([x, np.full_like(x, 10.0), np.zeros_like(x)]),
                         np.tile([0.0, 0.0, 1.0], (len(x), 1)), np.ones(len(x)), np.zeros(len(x), int))
    sc = scallop_map(m, Toolpath.from_points(np.vstack([a, b])), 5.0, samples=smp)
    h2 = float(sc.residual.max())
    ok = worst < 0.02 and abs(h2 - 0.004002) < 1e-5
    report(7, ok, "; ".join(details) + f"; two-pass plane h={h2:.6f} (oracle 0.004002)")
    assert ok


def _exact_intersections(Q):
    """All-pairs segment test: float orientation with an exact rational fallback."""
    A, B = Q[:-1], Q[1:]
    n = len(A)

    def orient(p, q, r):
        return (q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1]) - (q[..., 1] - p[..., 1]) * (r[..., 0] - p[..., 0])

    def exact(p, q, r):
        f = [Fraction(float(c)) for c in (*p, *q, *r)]
        v = (f[2] - f[0]) * (f[5] - f[1]) - (f[3] - f[1]) * (f[4] - f[0])
        return (v > 0) - (v < 0)

    hits = 0
    for i in range(n - 2):
        j = np.arange(i + 2, n)
        a, b, c, d = A[i], B[i], A[j], B[j]
        lo = np.minimum(c, d)
        hi = np.maximum(c, d)
        box = ((np.minimum(a, b)[None] <= hi) & (np.maximum(a, b)[None] >= lo)).all(axis=1)
        if not np.any(box):
            continue
        j, c, d = j[box], c[box], d[box]
        o = np.stack([orient(c, d, a[None]), orient(c, d, b[None]), orient(a[None], b[None], c),
                      orient(a[None], b[None], d)], axis=1)
        scale = 1e-12 * np.max(np.abs(np.r_[a, b])) ** 2
        for k in range(len(j)):
            s = o[k]
            if np.all(np.abs(s) > scale):
                hits += int(s[0] * s[1] < 0 and s[2] * s[3] < 0)
                continue
            pts = (a, b, c[k], d[k])
            s = [exact(pts[2], pts[3], pts[0]), exact(pts[2], pts[3], pts[1]),
                 exact(pts[0], pts[1], pts[2]), exact(pts[0], pts[1], pts[3])]
            if s[0] * s[1] < 0 and s[2] * s[3] < 0:
                hits += 1
            elif 0 in s:
                def on(p, q, r):
                    return (min(p[0], q[0]) <= r[0] <= max(p[0], q[0])
                            and min(p[1], q[1]) <= r[1] <= max(p[1], q[1]))
                hits += int((s[0] == 0 and on(pts[2], pts[3], pts[0])) or (s[1] == 0 and on(pts[2], pts[3], pts[1]))
                            or (s[2] == 0 and on(pts[0], pts[1], pts[2])) or (s[3] == 0 and on(pts[0], pts[1], pts[3])))
    return hits


def test_08_spiral_validity(plans):
    ok, details = True, []
    for name in MESHES:
        res = plans[name][0]
        path = res.toolpath
        F = res.mesh.faces
        a, b = path.faces[:-1], path.faces[1:]
        connected = bool(np.all((F[a][:, :, None] == F[b][:, None, :]).any(axis=(1, 2))))
        crossings = _exact_intersections(path.domain)
        T = res.opt.T
        loops = res.mesh.boundary_loops
        outer = float(T[loops[0]].mean())
        last_ok = abs(path.rho[-1] - outer) < 1e-9 * outer and np.ptp(T[loops[0]]) < 1e-9 * outer
        if res.anchor.kind == "boundary":
            inner = float(T[loops[res.anchor.boundary]].mean())
            first_ok = abs(path.rho[0] - inner) < 1e-9 * outer
        else:
            first_ok = abs(path.rho[0] - path.meta["rho_start"]) < 1e-12 and path.rho[0] > 0
        sc = res.metrics["modeled_scallop_mean"]
        sc_ok = abs(sc - H_SET) / H_SET < 0.05
        ok &= connected and crossings == 0 and first_ok and last_ok and sc_ok
        details.append(f"{name}: {len(path)} pts, connected={connected}, crossings={crossings}, "
                       f"ends on levels={first_ok and last_ok}, modeled scallop={sc:.4f}")
    report(8, ok, "; ".join(details))
    assert ok


def test_09_metrics_unit():
    t = np.linspace(0, 2 * np.pi, 1000, endpoint=False)
    R = 2.0
    circle = np.column_stack([R * np.cos(t), R * np.sin(t), np.zeros_like(t)])
    m = path_metrics(circle, closed=True)
    L_err = abs(m["length"] - 2 * np.pi * R) / (2 * np.pi * R)
    s_err = abs(m["smoothness"] - 2 * np.pi / R) / (2 * np.pi / R)
    a = impact_metrics([0.0, 0.04, 0.0, -0.04], dt=5.0)
    b = impact_metrics([0.1, 0.0], dt=2.0)
    imp = (abs(a.a_cu - 0.016) < 1e-12 and a.a_tcu == 0.0 and abs(b.a_tcu - 0.02) < 1e-12)
    rng = np.random.default_rng(7)
    rand_ok = all(impact_metrics(s, 0.01).a_tcu <= impact_metrics(s, 0.01).a_cu * (1 + 1e-12)
                  for s in rng.normal(0, 0.1, (200, 500)))
    ok = L_err < 0.01 and s_err < 0.01 and imp and rand_ok
    report(9, ok, f"circle |L| err {100 * L_err:.4f}%, rho2 err {100 * s_err:.4f}%, "
                  f"a_cu={a.a_cu:.3g}/a_tcu={a.a_tcu:.3g}, a_tcu={b.a_tcu:.3g}, random a_tcu<=a_cu: {rand_ok}")
    assert ok


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=1, max_size=200), st.floats(1e-3, 1.0))
def test_09b_impact_ordering_property(sig, dt):
    m = impact_metrics(sig, dt)
    assert m.a_tcu <= m.a_cu * (1 + 1e-12)


def test_10_end_to_end_determinism(tmp_path):
    mesh = str(meshgen.bundled_path("annulus"))
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        code = cli.main(["plan", "--mesh", mesh, "--anchor-boundary", "1", "-o", str(out)])
        assert code == 0
        outs.append(out)
    names = sorted(p.name for p in outs[0].iterdir() if p.name != "manifest.json")
    same = [n for n in names if (outs[0] / n).read_bytes() == (outs[1] / n).read_bytes()]
    manifest = json.loads((outs[0] / "manifest.json").read_text())
    ok = len(same) == len(names) and len(names) >= 15
    report(10, ok, f"{len(same)}/{len(names)} artifacts byte-identical (config {manifest['config_hash']})")
    assert ok
