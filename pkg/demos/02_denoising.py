"""Spatial median + temporal Gaussian denoising, step by step.

A lone hot pixel (a glitchy sensor) disappears under the 3x3 median, and a
sensor that flickers over time is smoothed by the 5-tap Gaussian along the
frame axis. The pipeline order is fixed: median first, then temporal.
"""

import numpy as np

from pressmat import GridSpec, PressureFrame, median_filter, temporal_gaussian
from pressmat.preprocess import gaussian_kernel

grid = GridSpec(rows=8, cols=8, sensor_ceiling=1000.0, frame_rate_hz=1.5)

# --- spatial median kills salt noise ---------------------------------------
values = np.full((8, 8), 100.0)
values[3, 4] = 900.0  # glitch
frame = PressureFrame(grid=grid, values=values, subject_id="S01",
                      posture_id=1, frame_index=0)
clean = median_filter(frame, window=3)
print("glitch value before/after median:", values[3, 4], "->", clean.values[3, 4])

# --- temporal Gaussian smooths flicker --------------------------------------
session = []
flicker = [100, 100, 600, 100, 100, 100, 600, 100]
for t, v in enumerate(flicker):
    arr = np.full((8, 8), 100.0)
    arr[2, 2] = v
    session.append(PressureFrame(grid=grid, values=arr, subject_id="S01",
                                 posture_id=1, frame_index=t))

smoothed = temporal_gaussian(session, window=5, sigma=1.0)
print("\nsensor (2,2) over time:")
print("  raw:     ", [f"{f.values[2, 2]:6.1f}" for f in session])
print("  smoothed:", [f"{f.values[2, 2]:6.1f}" for f in smoothed])

print("\n5-tap Gaussian kernel (sigma=1):", np.round(gaussian_kernel(5, 1.0), 4))
print("kernel sums to", gaussian_kernel(5, 1.0).sum())
