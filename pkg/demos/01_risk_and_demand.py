"""Risk fields and demand detection, printed as small text maps.

Run: python demos/01_risk_and_demand.py
"""

import numpy as np

from uavmec.env import DemandParams, Obstacle, Point2, demand_signal, linear_signal, risk_field

# Two obstacles: a tight one and a broad one. Sigma enters the exponent
# unsquared, so 0.002 already spreads influence over roughly 0.15 units.
obstacles = [Obstacle(Point2(0.3, 0.6), 0.0005), Obstacle(Point2(0.7, 0.4), 0.002)]
ax = np.linspace(0, 1, 21)
xs, ys = np.meshgrid(ax, ax, indexing="xy")
field = risk_field(obstacles, xs.ravel(), ys.ravel()).reshape(xs.shape)

shades = " .:-=+*#%@"
print("combined risk R(x, y), y up:")
for row in field[::-1]:
    print("  " + "".join(shades[min(int(v * len(shades)), len(shades) - 1)] * 2 for v in row))

# The sigmoid detector damps small residual demand and saturates large demand;
# the linear one treats every unit the same.
params = DemandParams(eta=2, beta=8)
print("\n   d   sigmoid  linear")
for d in (0.0, 0.5, 1.0, 2.0, 4.0, 6.0, 8.0, 10.0):
    print(f"{d:5.1f}  {demand_signal(d, params):7.4f}  {linear_signal(d, params):6.3f}")
