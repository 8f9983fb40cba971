"""How the demand weight M changes service and exposure on paper_default.

Run: python demos/02_m_sweep.py   (about half a minute)
"""

from uavmec.scenario import SweepSpec, run_sweep

spec = SweepSpec(axis="M", values=[0.0, 0.01, 0.1, 0.4], fixed={"K": 5.0})
rows = run_sweep(spec, "paper_default")

print("    M     qos   avg_risk  avg_path  ticks")
for r in rows:
    print(f"{r['M']:5.2f}  {r['qos']:6.3f}  {r['avg_risk']:8.4f}  {r['avg_path_raw']:8.3f}  {r['ticks']:5d}")

# Larger M makes hops out of demand-rich cells cheaper, so UAVs linger near
# users (higher QoS) at the price of wandering through riskier ground.
