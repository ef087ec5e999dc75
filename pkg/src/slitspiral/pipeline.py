"""End-to-end planning: pole search, field initialization, optimization, spiral, metrics."""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .energy import CutterSpec, EnergyModel
from .errors import InfeasibleError, SlitSpiralError
from .field_init import InitConfig, initialize_domain, optimize_radial_profile, search_theta
from .mesh import load_mesh, save_channel_ply
from .metrics import (coverage_metrics, path_metrics, sample_surface, scallop_map)
from .optimizer import OptimizerConfig, optimize
from .slitmap import Anchor, Slit, _angular_extent, slit_map, slit_quality
from .svg import domain_svg, sample_map_svg
from .toolpath import export_toolpath, level_spacing, segment_intersections, synthesize_spiral

log = logging.getLogger(__name__)

TOOLPATH_FORMATS = ("csv", "json", "gcode", "svg")


@dataclass
class PipelineConfig:
    """All knobs of a planning run. ``output`` does not enter the config hash."""

    mesh: str = ""
    tool_radius: float = 10.0
    h_set: float = 0.2
    alpha: float = 10.0
    C: float = 0.9
    mode: str = "auto"
    init: str = "slitmap"
    anchor_face: int | None = None
    anchor_bary: tuple = (1 / 3, 1 / 3, 1 / 3)
    anchor_boundary: int | None = None
    profile_nodes: int = 64
    profile_max_sweeps: int = 200
    theta_seeds: int = 8
    offset_fraction: float = 2.0
    max_iters: int = 2000
    rel_tol: float = 1e-7
    patience: int = 5
    max_halvings: int = 10
    norm_quantile: float = 0.9
    freeze_rel: float = 1e-2
    sample_density: int = 2
    feed: float = 1000.0
    formats: tuple = TOOLPATH_FORMATS
    output: str = "out"

    def __post_init__(self):
        self.anchor_bary = tuple(float(x) for x in self.anchor_bary)
        self.formats = tuple(self.formats)
        if not self.tool_radius > 0:
            raise ValueError("tool_radius must be positive")
        if not 0 < self.h_set < self.tool_radius:
            raise ValueError("h_set must lie in (0, tool_radius)")
        if not self.alpha >= 0:
            raise ValueError("alpha must be non-negative")
        if not 0.5 < self.C < 1:
            raise ValueError("C must lie in (0.5, 1)")
        if self.mode not in ("auto", "disk", "annulus"):
            raise ValueError("mode must be auto, disk or annulus")
        if self.init not in ("slitmap", "raw"):
            raise ValueError("init must be slitmap or raw")
        bad = set(self.formats) - set(TOOLPATH_FORMATS)
        if bad:
            raise ValueError(f"unknown toolpath formats {sorted(bad)}")

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        d = asdict(self)
        d["anchor_bary"] = list(self.anchor_bary)
        d["formats"] = list(self.formats)
        return d

    def config_hash(self, mesh_digest=""):
        d = self.to_dict()
        d.pop("output")
        d.pop("mesh")
        d["mesh_sha256"] = mesh_digest
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def init_config(self):
        return InitConfig(profile_nodes=self.profile_nodes, max_sweeps=self.profile_max_sweeps,
                          theta_seeds=self.theta_seeds, offset_fraction=self.offset_fraction,
                          mode=self.mode)

    def optimizer_config(self, target_E=None):
        return OptimizerConfig(C=self.C, max_iters=self.max_iters, rel_tol=self.rel_tol,
                               patience=self.patience, max_halvings=self.max_halvings,
                               norm_quantile=self.norm_quantile, freeze_rel=self.freeze_rel,
                               target_E=target_E)


def file_digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ----------------------------------------------------------------------
@dataclass
class PlanResult:
    config: PipelineConfig
    config_hash: str
    mesh: object
    domain: object
    anchor: Anchor
    profile: object
    T_init: np.ndarray
    opt: object
    energy_init: object
    energy_opt: object
    delta_T: float
    toolpath: object
    metrics: dict
    timings: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)


def domain_slits(mesh, positions, anchor):
    """Slit arcs of the inner boundaries other than the anchor loop."""
    loops = mesh.boundary_loops
    out = []
    for i in range(1, len(loops)):
        if anchor.kind == "boundary" and i == anchor.boundary:
            continue
        p = positions[loops[i]]
        start, end = _angular_extent(np.arctan2(p[:, 1], p[:, 0]))
        out.append(Slit(i, float(np.linalg.norm(p, axis=1).mean()), start, end))
    return out


def _resolve_pole(mesh, cfg, cutter, model, timings):
    """Pole, slit domain and radial profile: explicit override or searched."""
    icfg = cfg.init_config()
    t0 = time.perf_counter()
    if cfg.anchor_face is not None or cfg.anchor_boundary is not None:
        anchor = (Anchor.interior(cfg.anchor_face, cfg.anchor_bary) if cfg.anchor_face is not None
                  else Anchor.on_boundary(cfg.anchor_boundary))
        dom = slit_map(mesh, anchor)
        timings["slit_map"] = time.perf_counter() - t0
        prof = optimize_radial_profile(mesh, dom, cutter, cfg.alpha, icfg, model=model)
    else:
        res = search_theta(mesh, cutter, cfg.alpha, icfg, model=model)
        anchor, dom, prof = res.theta.anchor, res.domain, res.profile
    timings["pole_and_profile"] = time.perf_counter() - t0
    return anchor, dom, prof


def modeled_scallop_mean(mesh, model, T, path, delta_T):
    """Mean Eq.-3 scallop over the contact points, each weighted by the strip area it stands for.

    A contact point covers path length ``dL`` times the local pass spacing
    ``delta_T / |grad T|``.
    """
    rep = model.evaluate(T, per_face=True)
    q = rep.per_face["q"][path.faces]
    g = rep.per_face["grad_norm"][path.faces]
    P = path.points
    seg = np.linalg.norm(np.diff(P, axis=0), axis=1)
    dL = 0.5 * (np.r_[seg, 0.0] + np.r_[0.0, seg])
    w = dL / g
    return float(np.sum(w * q) / np.sum(w) * delta_T ** 2)


def path_report(mesh, path, tool_radius, h_set, sample_density):
    """Metrics shared by ``plan`` and ``evaluate`` (same code path, same numbers)."""
    smp = sample_surface(mesh, sample_density)
    pm = path_metrics(path)
    cov = coverage_metrics(mesh, path, tool_radius, h_set, samples=smp)
    sc = scallop_map(mesh, path, tool_radius, samples=smp)
    report = {
        "length": pm["length"],
        "smoothness": pm["smoothness"],
        "CT2": cov.ct2,
        "CT_max": cov.ct_max,
        "uncovered_fraction": float(np.sum(smp.weights[cov.counts == 0]) / np.sum(smp.weights)),
        "S_C": sc.S_C,
        "scallop": sc.as_dict(),
        "points": int(len(path)),
        "warnings": cov.warnings,
    }
    return report, cov, sc


def run_plan(cfg, write=True, callback=None):
    """Run the whole pipeline; optionally write the artifact set to ``cfg.output``.

    ``callback(iteration, state, report)`` is passed on to the optimizer and
    sees every accepted iteration.
    """
    timings = {}
    t_all = time.perf_counter()
    mesh_path = Path(cfg.mesh)
    if not mesh_path.exists():
        raise FileNotFoundError(f"mesh not found: {mesh_path}")
    mesh = load_mesh(mesh_path)
    chash = cfg.config_hash(file_digest(mesh_path))
    cutter = CutterSpec(cfg.tool_radius)
    model = EnergyModel(mesh, cutter, cfg.alpha)

    anchor, dom, prof = _resolve_pole(mesh, cfg, cutter, model, timings)
    mesh.set_channel("S^S", dom.positions)
    if cfg.init == "slitmap":
        H, T_init = initialize_domain(mesh, dom, prof.profile)
    else:
        H = dom.positions.copy()
        T_init = np.linalg.norm(H, axis=1)
    e_init = model.evaluate(T_init)

    t0 = time.perf_counter()
    fixed = (anchor.boundary,) if anchor.kind == "boundary" else ()
    opt = optimize(mesh, H, cutter, cfg.alpha, cfg.optimizer_config(), model=model, fixed_loops=fixed,
                   callback=callback)
    timings["optimize"] = time.perf_counter() - t0
    mesh.set_channel("S^H", opt.positions)
    e_opt = model.evaluate(opt.T)

    delta_T = level_spacing(e_opt.avg, cfg.h_set)
    rho_v = opt.T
    loops = mesh.boundary_loops
    rho_start = float(rho_v[loops[anchor.boundary]].mean()) if anchor.kind == "boundary" else None
    slits = domain_slits(mesh, opt.positions, anchor)
    t0 = time.perf_counter()
    path = synthesize_spiral(
        mesh, opt.positions, delta_T, mode=dom.mode, slits=slits, rho_start=rho_start,
        rho_end=float(rho_v[loops[0]].mean()), normals=mesh.vertex_normals,
        meta={"h_set": cfg.h_set, "tool_radius": cfg.tool_radius, "alpha": cfg.alpha,
              "config_hash": chash},
    )
    timings["spiral"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    report, cov, sc = path_report(mesh, path, cfg.tool_radius, cfg.h_set, cfg.sample_density)
    report["modeled_scallop_mean"] = modeled_scallop_mean(mesh, model, opt.T, path, delta_T)
    report["self_intersections"] = segment_intersections(path.domain)
    timings["metrics"] = time.perf_counter() - t0
    timings["total"] = time.perf_counter() - t_all

    res = PlanResult(cfg, chash, mesh, dom, anchor, prof, T_init, opt, e_init, e_opt, delta_T, path,
                     report, timings)
    res.extras = {"coverage": cov, "scallop": sc}
    if write:
        write_artifacts(res)
    return res


def _dump(path, obj):
    Path(path).write_text(json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n")


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else str(x)
    return x


def anchor_dict(anchor):
    if anchor.kind == "boundary":
        return {"kind": "boundary", "boundary": anchor.boundary}
    return {"kind": "interior", "face": anchor.face, "bary": list(anchor.bary)}


def write_artifacts(res):
    """Deterministic artifacts plus a separate manifest holding timestamps and timings."""
    out = Path(res.config.output)
    out.mkdir(parents=True, exist_ok=True)
    h = res.config_hash
    mesh = res.mesh
    tag = f"config_hash {h}"
    files = {}

    q = slit_quality(mesh, res.domain)
    _dump(out / "slit_diagnostics.json", {
        "config_hash": h, "mode": res.domain.mode, "anchor": anchor_dict(res.anchor),
        "inner_radius": res.domain.inner_radius,
        "slits": [asdict(s) for s in res.domain.slits], "quality": q.as_dict(),
    })
    files["slit_diagnostics"] = "slit_diagnostics.json"
    domain_svg(mesh, res.domain.positions, out / "slit_domain.svg", res.domain.slits, comment=tag)
    files["slit_domain_svg"] = "slit_domain.svg"

    save_channel_ply(mesh, out / "T_init.ply", "S^S", {"T": res.T_init}, comments=[tag])
    save_channel_ply(mesh, out / "T_opt.ply", "S^H", {"T": res.opt.T}, comments=[tag])
    files["T_init"], files["T_opt"] = "T_init.ply", "T_opt.ply"

    trace = out / "trace.csv"
    res.opt.write_trace(trace)
    trace.write_text(f"# {tag}\n" + trace.read_text())
    files["trace"] = "trace.csv"

    for fmt in res.config.formats:
        name = f"toolpath.{fmt}"
        export_toolpath(res.toolpath, out / name, fmt, feed=res.config.feed,
                        tool_radius=res.config.tool_radius, mesh=mesh)
        files[f"toolpath_{fmt}"] = name

    _dump(out / "energy.json", {
        "config_hash": h,
        "init": res.energy_init.to_dict(),
        "opt": res.energy_opt.to_dict(),
        "profile_E_min": res.profile.E_min,
        "profile": res.profile.profile.to_dict(),
        "optimizer": {"status": res.opt.status, "iterations": res.opt.iterations},
        "delta_T": res.delta_T,
    })
    files["energy"] = "energy.json"
    _dump(out / "metrics.json", {"config_hash": h, **res.metrics})
    files["metrics"] = "metrics.json"
    sc = res.extras["scallop"]
    sc.write_csv(out / "scallop_samples.csv")
    sample_map_svg(sc.points, sc.msh, out / "scallop_map.svg", comment=tag)
    cov = res.extras["coverage"]
    sample_map_svg(cov.samples, cov.counts, out / "coverage_map.svg", comment=tag)
    files.update(scallop_csv="scallop_samples.csv", scallop_svg="scallop_map.svg",
                 coverage_svg="coverage_map.svg")
    cfg = res.config.to_dict()
    cfg.pop("output")
    _dump(out / "config.json", {"config_hash": h, **cfg})
    files["config"] = "config.json"
    res.artifacts = files
    write_manifest(out, h, files, res.timings, output=str(out))
    return files


def write_manifest(out, config_hash, files, timings, **extra):
    """Run metadata that may legitimately differ between identical runs."""
    _dump(Path(out) / "manifest.json", {
        **extra,
        "config_hash": config_hash,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "version": __version__,
        "artifacts": files,
        "timings_s": timings,
    })


# ----------------------------------------------------------------------
COMPARE_COLUMNS = ["variant", "alpha", "init", "status", "length", "smoothness", "CT2", "CT_max",
                   "S_C", "E", "iterations", "target_iteration", "wall_time_s", "error"]


def run_compare(cfg, variants, enforce_trends=False):
    """Run each variant (dicts overriding ``alpha`` and/or ``init``) and tabulate.

    For an init ablation the raw run goes first and its final energy becomes
    the target whose first-reaching iteration is recorded for the other runs.
    """
    if len(variants) < 2:
        raise ValueError("need >= 2 variants")
    order = sorted(range(len(variants)), key=lambda i: variants[i].get("init", cfg.init) != "raw")
    rows = [None] * len(variants)
    target = None
    for i in order:
        v = variants[i]
        name = v.get("name") or ",".join(f"{k}={v[k]}" for k in sorted(v))
        sub = PipelineConfig.from_dict({**cfg.to_dict(), **{k: x for k, x in v.items() if k != "name"},
                                        "output": str(Path(cfg.output) / _slug(name))})
        t0 = time.perf_counter()
        row = {"variant": name, "alpha": sub.alpha, "init": sub.init}
        try:
            res = run_plan(sub, write=True)
            if target is not None and sub.init != "raw":
                res.opt.target_iteration = _first_reaching(res.opt.trace, target)
            m = res.metrics
            row.update(status=res.opt.status, length=m["length"], smoothness=m["smoothness"],
                       CT2=m["CT2"], CT_max=m["CT_max"], S_C=m["S_C"], E=res.opt.E,
                       iterations=res.opt.iterations, target_iteration=res.opt.target_iteration,
                       error="")
            if sub.init == "raw" and target is None:
                target = res.opt.E
        except (SlitSpiralError, ValueError, FileNotFoundError) as exc:
            row.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        row["wall_time_s"] = time.perf_counter() - t0
        rows[i] = {c: row.get(c) for c in COMPARE_COLUMNS}
    trends = alpha_trends(rows)
    report = {"variants": rows, "trends": trends, "raw_final_E": target}
    if enforce_trends and trends is not None and not trends["ok"]:
        raise AssertionError(f"alpha-sweep trends violated: {trends['violations']}")
    return report


def _first_reaching(trace, target):
    for row in trace:
        if row["E"] <= target:
            return int(row["iter"])
    return None


def _slug(name):
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name)


def alpha_trends(rows):
    """Check the alpha-sweep trends: as alpha decreases, |L|, CT2 and CT_max do not
    increase and smoothness does not decrease; strict between the extremes."""
    ok_rows = [r for r in rows if r["status"] != "failed"]
    alphas = sorted({r["alpha"] for r in ok_rows})
    if len(alphas) < 2 or len({r["init"] for r in ok_rows}) > 1:
        return None
    by = {r["alpha"]: r for r in ok_rows}
    seq = [by[a] for a in sorted(alphas, reverse=True)]
    violations = []
    for key, sign in (("length", -1), ("CT2", -1), ("CT_max", -1), ("smoothness", 1)):
        vals = [r[key] for r in seq]
        for a, b in zip(vals, vals[1:]):
            if sign * (b - a) < 0:
                violations.append(f"{key} not {'non-decreasing' if sign > 0 else 'non-increasing'}")
                break
        if not sign * (vals[-1] - vals[0]) > 0:
            violations.append(f"{key} not strict between extremes")
    return {"alphas_descending": sorted(alphas, reverse=True), "ok": not violations,
            "violations": violations}


# ----------------------------------------------------------------------
def run_evaluate(mesh_path, toolpath_path, tool_radius, h_set, sample_density=2):
    """Metrics for any toolpath file on a mesh."""
    from .toolpath import load_toolpath

    mesh_path = Path(mesh_path)
    if not mesh_path.exists():
        raise FileNotFoundError(f"mesh not found: {mesh_path}")
    mesh = load_mesh(mesh_path)
    path = load_toolpath(toolpath_path)
    if not 0 < h_set < tool_radius:
        raise ValueError("h_set must lie in (0, tool_radius)")
    report, _, _ = path_report(mesh, path, tool_radius, h_set, sample_density)
    return report


__all__ = ["PipelineConfig", "PlanResult", "run_plan", "run_compare", "run_evaluate",
           "write_artifacts", "alpha_trends", "InfeasibleError"]
