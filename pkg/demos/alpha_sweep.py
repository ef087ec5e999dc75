#!/usr/bin/env python3
"""Trade path length against smoothness with the weight alpha.

A large alpha favors smooth iso-curves; a small alpha favors uniform
scallops and hence a shorter path with less overlap. This runs the compare
interface on the freeform patch and prints the table and the trend check.

    python3 demos/alpha_sweep.py [output_dir]
"""

import sys

from slitspiral import meshgen
from slitspiral.pipeline import PipelineConfig, run_compare

out = sys.argv[1] if len(sys.argv) > 1 else "demo_out/alpha_sweep"
cfg = PipelineConfig(mesh=str(meshgen.bundled_path("freeform")), anchor_face=1342, output=out)
report = run_compare(cfg, [{"alpha": 100.0}, {"alpha": 10.0}, {"alpha": 1.0}])

print(f"{'alpha':>6} {'length':>9} {'smooth':>8} {'CT2':>6} {'CTmax':>5} {'S_C':>8} {'E':>9}")
for row in report["variants"]:
    print(f"{row['alpha']:6g} {row['length']:9.1f} {row['smoothness']:8.2f} {row['CT2']:6.3f}"
          f" {row['CT_max']:5d} {row['S_C']:8.3f} {row['E']:9.1f}")
trends = report["trends"]
print("trends hold" if trends["ok"] else f"trend violations: {trends['violations']}")
