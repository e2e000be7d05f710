"""
Timing the assignment step
==========================

Pixel assignment compares each of the N_p person pixels with each of the M
global boxes. This script times it over a grid of map sizes and instance
counts and fits ``time = a * N_p * M + b``.
"""

import numpy as np

from boxembed.bench import run_sweep

records, fit = run_sweep(repeats=7)
for r in records:
    print(f"{r.height:4d}^2  M={r.n_instances:2d}  N_p={r.n_person_pixels:6d}  {r.wall_time * 1e3:7.2f} ms")
print(f"fit: {fit.slope * 1e9:.2f} ns per pixel-box, intercept {fit.intercept * 1e3:.2f} ms, R^2 {fit.r2:.3f}")

# %%
# Every pixel also has to be decoded, scored and labelled once, whatever M
# is. Adding a term linear in N_p shows how large that part is.
x = np.array([[r.work, r.n_person_pixels, 1.0] for r in records])
y = np.array([r.wall_time for r in records])
coef, *_ = np.linalg.lstsq(x, y, rcond=None)
resid = y - x @ coef
print(f"per-pixel cost = {coef[1] / coef[0]:.1f} pixel-box evaluations, "
      f"R^2 with that term {1 - (resid ** 2).sum() / ((y - y.mean()) ** 2).sum():.3f}")
