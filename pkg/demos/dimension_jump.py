"""
The dimensionality jump
=======================

With a penalty ``C (2 tr A - tr A^T A)`` added to the residual sum of
squares, the selected kernel ridge smoother flips from "interpolate the
noise" to "reasonable fit" as C crosses the noise variance. The flip is
abrupt, so its location is a usable estimate of sigma^2.

Run with ``python demos/dimension_jump.py`` (about a second).
"""

import math

import numpy as np

from minpen import CGrid, RidgePath, minpen_path
from minpen.simulation import SimConfig, generate

# %%
# Draw one synthetic data set: n=500 points in R^6, a kernel expansion on 10
# random centers as signal, unit-variance Gaussian noise.

cfg = SimConfig(n=500, d=6, seed=0)
data = generate(cfg)
family = RidgePath.from_kernel(data.kernels()[0])
print(f"{len(family)} ridge smoothers, df from {family.df.min():.2f} to {family.df.max():.1f}")

# %%
# Walk C over a grid that reaches both ends of the family and record the
# selected df under the minimal penalty and under the penalty ``C tr A``
# (half of Mallows' ideal penalty).

grid = CGrid.covering(family, data.Y, sigma2=data.sigma2)
minimal = minpen_path(family, data.Y, grid, "minimal")
half = minpen_path(family, data.Y, grid, "half-ideal")

print(f"\n{'log(C/sigma2)':>14} {'df minimal':>11} {'df C*trA':>9}")
for c, a, b in zip(grid.values, minimal.df, half.df):
    if -1.5 <= math.log(c) <= 1.5:
        print(f"{math.log(c):14.3f} {a:11.2f} {b:9.2f}")

# %%
# The minimal-penalty curve drops by hundreds of degrees of freedom in one
# grid step right next to log(C/sigma^2) = 0. The half-ideal curve slides
# down gradually, which is why it cannot be used to locate sigma^2.

for name, path in (("minimal", minimal), ("half-ideal", half)):
    drops = path.drops()
    i = int(np.argmax(drops))
    where = 0.5 * (math.log(path.C[i]) + math.log(path.C[i + 1]))
    print(f"{name:>10}: largest drop {drops[i]:6.1f} at log(C/sigma2) = {where:+.3f}")
