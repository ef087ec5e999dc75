"""Command line interface: ``plan``, ``compare`` and ``evaluate``.

Exit codes: 0 ok, 1 internal error, 2 bad input, 3 infeasible geometry.
Set ``SLITSPIRAL_THREADS`` to cap the BLAS/OpenMP thread count.
"""

from __future__ import annotations

import os

_threads = os.environ.get("SLITSPIRAL_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse  # noqa: E402
import json  # noqa: E402
import logging  # noqa: E402
import sys  # noqa: E402
from pathlib import Path  # noqa: E402

try:  # noqa: E402
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import InfeasibleError, MeshError, SlitSpiralError  # noqa: E402

log = logging.getLogger("slitspiral")

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT, EXIT_INFEASIBLE = 0, 1, 2, 3

# flag name -> config key
_OVERRIDES = {
    "mesh": "mesh", "tool_radius": "tool_radius", "hset": "h_set", "alpha": "alpha", "C": "C",
    "mode": "mode", "init": "init", "anchor_face": "anchor_face", "anchor_boundary": "anchor_boundary",
    "profile_nodes": "profile_nodes", "theta_seeds": "theta_seeds",
    "offset_fraction": "offset_fraction", "max_iters": "max_iters", "rel_tol": "rel_tol",
    "sample_density": "sample_density", "feed": "feed", "output": "output",
}


def _add_common(p):
    p.add_argument("--config", type=Path, help="TOML config file; flags override its keys")
    p.add_argument("--mesh", help="input mesh (obj, ply or stl)")
    p.add_argument("--tool-radius", type=float, help="ball-end radius in mm (default 10)")
    p.add_argument("--hset", type=float, help="target scallop height in mm (default 0.2)")
    p.add_argument("--alpha", type=float, help="smoothness weight (default 10)")
    p.add_argument("--C", type=float, help="step aggressiveness in (0.5, 1) (default 0.9)")
    p.add_argument("--mode", choices=["auto", "disk", "annulus"])
    p.add_argument("--init", choices=["slitmap", "raw"], help="optimizer start (default slitmap)")
    p.add_argument("--anchor-face", type=int, help="fix the disk-mode pole at this face centroid")
    p.add_argument("--anchor-boundary", type=int, help="fix the annulus-mode anchor loop")
    p.add_argument("--profile-nodes", type=int)
    p.add_argument("--theta-seeds", type=int)
    p.add_argument("--offset-fraction", type=float)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--rel-tol", type=float)
    p.add_argument("--sample-density", type=int)
    p.add_argument("--feed", type=float, help="G-code feed rate in mm/min")
    p.add_argument("--output", "-o", help="output directory (default ./out)")


def build_parser():
    ap = argparse.ArgumentParser(prog="slitspiral", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="plan a spiral toolpath and write all artifacts")
    _add_common(p)
    p.add_argument("--formats", help="comma-separated toolpath formats (csv,json,gcode,svg)")

    c = sub.add_parser("compare", help="run several variants and tabulate their metrics")
    _add_common(c)
    c.add_argument("--alphas", help="comma-separated alpha values")
    c.add_argument("--inits", help="comma-separated init kinds (slitmap,raw)")
    c.add_argument("--enforce-trends", action="store_true",
                   help="fail unless the alpha-sweep trends hold")

    e = sub.add_parser("evaluate", help="metrics for an existing toolpath file")
    e.add_argument("--mesh", required=True)
    e.add_argument("--toolpath", required=True, help="csv or json toolpath")
    e.add_argument("--tool-radius", type=float, default=10.0)
    e.add_argument("--hset", type=float, default=0.2)
    e.add_argument("--sample-density", type=int, default=2)
    e.add_argument("--output", "-o", help="write the JSON report here instead of stdout")
    return ap


def load_config_file(path):
    if path is None:
        return {}
    if not Path(path).exists():
        raise FileNotFoundError(f"config not found: {path}")
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def resolve_config(args):
    """Merge the config file with explicit flags (flags win)."""
    from .pipeline import PipelineConfig

    data = load_config_file(args.config)
    variants = data.pop("variants", None)
    for flag, key in _OVERRIDES.items():
        val = getattr(args, flag, None)
        if val is not None:
            data[key] = val
    if getattr(args, "formats", None):
        data["formats"] = [s.strip() for s in args.formats.split(",") if s.strip()]
    if not data.get("mesh"):
        raise ValueError("no mesh given (use --mesh or the config file)")
    return PipelineConfig.from_dict(data), variants


def _variants(args, file_variants):
    if args.alphas or args.inits:
        alphas = [float(a) for a in args.alphas.split(",")] if args.alphas else [None]
        inits = [s.strip() for s in args.inits.split(",")] if args.inits else [None]
        out = []
        for a in alphas:
            for i in inits:
                v = {}
                if a is not None:
                    v["alpha"] = a
                if i is not None:
                    v["init"] = i
                out.append(v)
        return out
    return list(file_variants or [])


def _emit(obj, output):
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    if output:
        Path(output).parent.mkdir(parents=True, exist_ok=True)
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_plan(args):
    from .pipeline import run_plan

    cfg, _ = resolve_config(args)
    res = run_plan(cfg, write=True)
    print(json.dumps({"output": str(Path(cfg.output)), "config_hash": res.config_hash,
                      "E_init": res.opt.E_init, "E": res.opt.E, "status": res.opt.status,
                      "iterations": res.opt.iterations, "points": len(res.toolpath)}, sort_keys=True))
    return EXIT_OK


def cmd_compare(args):
    from .pipeline import _clean, run_compare

    cfg, file_variants = resolve_config(args)
    report = run_compare(cfg, _variants(args, file_variants), enforce_trends=args.enforce_trends)
    Path(cfg.output).mkdir(parents=True, exist_ok=True)
    _emit(_clean(report), Path(cfg.output) / "compare.json")
    _print_table(report["variants"])
    failed = any(r["status"] == "failed" for r in report["variants"])
    return EXIT_INTERNAL if failed else EXIT_OK


def _print_table(rows):
    cols = ["variant", "length", "smoothness", "CT2", "CT_max", "S_C", "E", "iterations",
            "target_iteration", "wall_time_s"]
    print("\t".join(cols))
    for r in rows:
        print("\t".join(_cell(r.get(c)) for c in cols))


def _cell(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return "-" if v is None else str(v)


def cmd_evaluate(args):
    from .pipeline import _clean, run_evaluate

    report = run_evaluate(args.mesh, args.toolpath, args.tool_radius, args.hset, args.sample_density)
    _emit(_clean(report), args.output)
    return EXIT_OK


def exit_code_for(exc):
    if isinstance(exc, InfeasibleError):
        return EXIT_INFEASIBLE
    if isinstance(exc, (FileNotFoundError, MeshError, ValueError, tomllib.TOMLDecodeError)):
        return EXIT_INPUT
    if isinstance(exc, SlitSpiralError):
        return exc.exit_code
    return EXIT_INTERNAL


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"plan": cmd_plan, "compare": cmd_compare, "evaluate": cmd_evaluate}[args.command]
    try:
        return handler(args)
    except Exception as exc:  # every failure becomes a structured record
        code = exit_code_for(exc)
        record = {"error": {"type": type(exc).__name__, "message": str(exc).strip("'\""),
                            "exit_code": code, "command": args.command}}
        sys.stderr.write(json.dumps(record, sort_keys=True) + "\n")
        out = getattr(args, "output", None)
        if out and args.command != "evaluate":
            try:
                Path(out).mkdir(parents=True, exist_ok=True)
                (Path(out) / "error.json").write_text(json.dumps(record, sort_keys=True, indent=2) + "\n")
            except OSError:
                pass
        if code == EXIT_INTERNAL and args.verbose:
            raise
        return code


if __name__ == "__main__":
    sys.exit(main())
