"""A user fenced in by obstacles: learned cost-to-go versus greedy stepping.

The greedy baseline only looks one step ahead, walks into the pocket and
shuffles against the far wall. The RL planner learns G over the whole
lattice, serves the user and leaves the way it came.

Run: python demos/05_ring_fence.py
"""

from uavmec.astar import detect_deadlock
from uavmec.scenario import run_once

for planner in ("rl", "astar"):
    res = run_once("ring_fence", {"planner": planner})
    m = res.metrics
    stuck = detect_deadlock(res.trace, res.config.astar_config())
    last = res.trace.events[-1].pos
    print(f"{planner:5s}  qos={m.qos:.3f}  ticks={m.ticks_used:4d}  deadlock={stuck}  "
          f"final=({last.x:.3f}, {last.y:.3f})")
