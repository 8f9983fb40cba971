"""Risk weight K trades path length for exposure.

Run: python demos/03_k_sweep.py   (about half a minute)
"""

from uavmec.scenario import SweepSpec, run_sweep

rows = run_sweep(SweepSpec(axis="K", values=[0.5, 2.0, 10.0, 50.0], fixed={"M": 0.5}), "paper_default")

print("     K   avg_risk  avg_path  avg_norm   qos")
for r in rows:
    print(f"{r['K']:6.1f}  {r['avg_risk']:8.4f}  {r['avg_path_raw']:8.3f}  {r['avg_path_norm']:8.3f}  {r['qos']:5.3f}")
