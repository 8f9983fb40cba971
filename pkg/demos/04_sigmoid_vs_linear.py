"""Sigmoid versus linear demand detection over five scene seeds.

QoS is compared at the common horizon: the tick at which the faster of the
two runs finished, so neither gets credit for simply flying longer.

Run: python demos/04_sigmoid_vs_linear.py   (a minute or two)
"""

from uavmec.scenario import SweepSpec, read_scenario, sweep_rows

doc = read_scenario("paper_default")
spec = SweepSpec(axis="M", values=[0.12], reps=5, demand_models=["sigmoid", "linear"], fixed={"K": 10.0})
results = sweep_rows(spec, doc)

by_rep: dict[int, dict] = {}
for row, trace in results:
    by_rep.setdefault(row["rep"], {})[row["demand_model"]] = (row, trace)

print("rep        seed   horizon  qos_sigmoid  qos_linear")
for rep, pair in sorted(by_rep.items()):
    (rs, ts), (rl, tl) = pair["sigmoid"], pair["linear"]
    h = min(rs["ticks"], rl["ticks"])
    print(f"{rep:3d}  {rs['seed']:10d}  {h:8d}  {ts.qos_at(h):11.3f}  {tl.qos_at(h):10.3f}")
