import time

from keysched import build_config, run_scenario

cfg = build_config(scenario="normal", method="ours", seed=0, horizon_hours=0.05)
t0 = time.time()
res = run_scenario(cfg)
dt = time.time() - t0
s = res.summary
print(f"3-min normal/ours run: {dt:.2f}s, slots={s.horizon_slots}")
print("totals:", s.totals)
print("keys:", s.keys)
for cls, d in s.per_class.items():
    print(cls, "arr", d["arrivals_raw"], "srv", d["served"], "exp", d["expired"],
          "p99", d["delay_p99_s"], "u_max", round(d["u_max"], 1))
print("feasibility normal:", s.feasibility["normal"])
