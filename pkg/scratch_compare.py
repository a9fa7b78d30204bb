import sys
import time

from keysched import build_config, run_scenario

scenario = sys.argv[1] if len(sys.argv) > 1 else "degraded"
hours = float(sys.argv[2]) if len(sys.argv) > 2 else 1.0
seed = int(sys.argv[3]) if len(sys.argv) > 3 else 0

print(f"scenario={scenario} hours={hours} seed={seed}")
hdr = f"{'method':<12}{'disc%':>8}{'pass%':>8}{'act%':>8}{'aggP99':>8}{'critP99':>9}" \
      f"{'keyeff':>10}{'rmse':>8}{'viol':>6}{'dwell':>8}"
print(hdr)
for method in ["fifo", "priority", "staticquota", "ours", "ideal"]:
    t0 = time.time()
    cfg = build_config(scenario=scenario, method=method, seed=seed, horizon_hours=hours)
    res = run_scenario(cfg)
    s = res.summary
    eff = s.keys["efficiency"]
    print(f"{method:<12}{100*s.totals['total']:8.2f}{100*s.totals['passive']:8.2f}"
          f"{100*s.totals['active']:8.2f}{(s.aggregate_p99_s() or -1):8.2f}"
          f"{(s.critical_p99_s() or -1):9.2f}{(eff if eff else -1):10.6f}"
          f"{s.power['rmse_kw']:8.2f}{s.power['violation_count']:6d}"
          f"{s.power['violation_duration_s']:8.1f}  [{time.time()-t0:.1f}s]")
