"""The 14 per-frame features, and the marching-squares isolines behind the
last two of them.

Contour levels are multiples of a preferred step (2, 5, 10, 20, ...) chosen so
at most 20 levels span the frame's value range. At each level the tracer
interpolates crossings on grid-square edges and chains them into polylines:
closed rings around pressure peaks, open arcs where a region is cut off by the
mat border.
"""

import numpy as np

from pressmat import (
    FEATURE_NAMES,
    GridSpec,
    PressureFrame,
    extract_all,
    select_contour_levels,
    trace_isolines,
)

grid = GridSpec(rows=12, cols=12, sensor_ceiling=1000.0, frame_rate_hz=1.5)

# a two-bump pressure field
yy, xx = np.mgrid[0:12, 0:12]
values = 300.0 * np.exp(-((xx - 3.5) ** 2 + (yy - 5) ** 2) / 4.0)
values += 180.0 * np.exp(-((xx - 8.5) ** 2 + (yy - 6) ** 2) / 3.0)
frame = PressureFrame(grid=grid, values=values, subject_id="S01",
                      posture_id=1, frame_index=0)

vec = extract_all(frame)
print("feature vector:")
for name, v in zip(FEATURE_NAMES, vec):
    print(f"  {name:18s} {v:12.4f}")

levels = select_contour_levels(frame)
print(f"\n{len(levels)} contour levels, step {levels[1] - levels[0]:.0f}: "
      f"{levels[0]:.0f} .. {levels[-1]:.0f}")

for level in (levels[1], levels[len(levels) // 2]):
    lines = trace_isolines(frame, level)
    kinds = ", ".join("closed" if l.closed else "open" for l in lines)
    print(f"  level {level:5.0f}: {len(lines)} isoline(s) ({kinds})")

# the lowest level hugs both bumps; higher levels ring only the taller one
low = trace_isolines(frame, levels[0])
high = trace_isolines(frame, 200.0)
print(f"\nlevel {levels[0]:.0f} rings both bumps: {len(low)} lines; "
      f"level 200 rings only the 300-peak: {len(high)} line(s)")
