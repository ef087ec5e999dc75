#!/usr/bin/env python3
"""Check the scallop model against the exact swept-ball envelope.

On a plane two passes of a ball of radius r at spacing d leave a cusp of
height r - sqrt(r^2 - d^2/4). The model used for level spacing predicts
(K_s + K_c) d^2 / 8 with K_c = 1/r. On a convex sphere of radius R the exact
cusp follows from intersecting two balls whose centers sit at R + r.

    python3 demos/scallop_model.py
"""

import numpy as np

r, R = 10.0, 50.0
print(f"{'d/r':>5} {'plane exact':>12} {'model':>10} {'err %':>7} {'sphere exact':>13} {'model':>10} {'err %':>7}")
for ratio in (0.01, 0.02, 0.05, 0.1, 0.2, 0.4):
    d = ratio * r
    plane = r - np.sqrt(r * r - d * d / 4)
    plane_m = d * d / (8 * r)
    th = d / R
    sphere = (R + r) * np.cos(th / 2) - np.sqrt(r * r - (R + r) ** 2 * np.sin(th / 2) ** 2) - R
    sphere_m = (1 / R + 1 / r) * d * d / 8
    print(f"{ratio:5.2f} {plane:12.6g} {plane_m:10.6g} {100 * (plane_m - plane) / plane:7.3f}"
          f" {sphere:13.6g} {sphere_m:10.6g} {100 * (sphere_m - sphere) / sphere:7.3f}")
print("the model slightly underestimates; its error grows roughly like (d/r)^2")
