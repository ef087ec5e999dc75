#!/usr/bin/env python3
"""Score a plain raster path with the same metrics as a planned spiral.

The raster runs along x at a fixed stepover, lifted onto the freeform
surface, and jumps over holes without retracting. Its stepover matches a
0.2 mm scallop on a flat plate, so the comparison is about shape, not
spacing. The evaluate interface accepts any csv or json polyline.

    python3 demos/evaluate_raster.py
"""

import tempfile
from pathlib import Path

import numpy as np

from slitspiral import meshgen
from slitspiral.pipeline import run_evaluate

R_TOOL, H_SET = 10.0, 0.2
step = np.sqrt(8 * R_TOOL * H_SET)  # flat-plate stepover for the target scallop

rows = []
for k, y in enumerate(np.arange(-48.0, 48.0, step)):
    x = np.linspace(-48.0, 48.0, 400)
    x = x if k % 2 == 0 else x[::-1]
    keep = x ** 2 + y ** 2 < 49.0 ** 2
    for hx, hy, hr in meshgen.FREEFORM_HOLES:
        keep &= (x - hx) ** 2 + (y - hy) ** 2 > (hr + 1.0) ** 2
    xs = x[keep]
    rows.append(np.column_stack([xs, np.full_like(xs, y), meshgen.freeform_height(xs, y)]))
pts = np.vstack(rows)

with tempfile.TemporaryDirectory() as tmp:
    f = Path(tmp) / "raster.csv"
    np.savetxt(f, pts, delimiter=",", header="x,y,z", comments="")
    rep = run_evaluate(str(meshgen.bundled_path("freeform")), str(f), R_TOOL, H_SET)

print(f"raster: {len(pts)} points, stepover {step:.3f} mm")
for key in ("length", "smoothness", "CT2", "CT_max", "uncovered_fraction", "S_C"):
    print(f"  {key:20s} {rep[key]:.4g}")
print("compare with demos/plan_freeform.py for the spiral on the same patch")
