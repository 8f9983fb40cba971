"""Two UAVs on converging courses treat each other as moving obstacles.

Prints the tick-by-tick separation and marks ticks where a UAV replanned
because it saw its peer somewhere new.

Run: python demos/06_crossing.py
"""

from uavmec.scenario import run_once

res = run_once("crossing")
a, b = res.trace.events_for(0), res.trace.events_for(1)
radius = res.config.obs_radius
for ea, eb in zip(a, b):
    gap = ea.pos.dist(eb.pos)
    flags = ("A" if ea.replanned else " ") + ("B" if eb.replanned else " ")
    marker = "<- inside R" if gap <= radius else ""
    print(f"tick {ea.tick:3d}  gap {gap:6.3f}  replanned [{flags}] {marker}")
print(f"both arrived by tick {res.metrics.ticks_used}; qos {res.metrics.qos:.2f}")
