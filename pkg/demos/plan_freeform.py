#!/usr/bin/env python3
"""Plan a spiral finishing path on the bundled freeform patch.

The patch has an outer rim and two holes. The pipeline maps it to a slit
disk, shapes the radial field, optimizes it, and threads one spiral from the
pole outwards. Artifacts land in ``demo_out/freeform`` (or the first argument).

Run from the repository root:

    python3 demos/plan_freeform.py [output_dir]
"""

import sys

from slitspiral import meshgen
from slitspiral.pipeline import PipelineConfig, run_plan

out = sys.argv[1] if len(sys.argv) > 1 else "demo_out/freeform"

# Face 1342 is the pole the anchor search picks for alpha = 10; fixing it
# skips the search (about a minute on one core).
cfg = PipelineConfig(mesh=str(meshgen.bundled_path("freeform")), tool_radius=10.0, h_set=0.2,
                     alpha=10.0, anchor_face=1342, output=out)
res = run_plan(cfg)

print(f"config hash      {res.config_hash}")
print(f"energy           {res.opt.E_init:.1f} -> {res.opt.E:.1f} in {res.opt.iterations} iterations"
      f" ({res.opt.status})")
print(f"level spacing    dT = {res.delta_T:.4f}")
print(f"spiral           {len(res.toolpath)} points, {res.toolpath.meta['turns']:.1f} turns,"
      f" {res.metrics['self_intersections']} self-intersections")
print(f"path length      {res.metrics['length']:.1f} mm")
print(f"smoothness       {res.metrics['smoothness']:.2f}")
print(f"modeled scallop  {res.metrics['modeled_scallop_mean']:.4f} mm (target {cfg.h_set})")
print(f"coverage         CT2 = {res.metrics['CT2']:.3f}, max CT = {res.metrics['CT_max']}")
print(f"scallop spread   S_C = {res.metrics['S_C']:.4g}")
print(f"artifacts in     {out}/  (open toolpath.svg or scallop_map.svg)")
