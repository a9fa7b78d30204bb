import sys

from keysched import build_config, run_scenario

scenario = sys.argv[1] if len(sys.argv) > 1 else "outage"
seed = int(sys.argv[2]) if len(sys.argv) > 2 else 0

for method in ["priority", "staticquota"]:
    cfg = build_config(scenario=scenario, method=method, seed=seed, horizon_hours=1.0)
    s = run_scenario(cfg).summary
    print(f"== {method}  total_disc={s.totals['total']:.6f} rmse={s.power['rmse_kw']:.6f}")
    for cls, d in s.per_class.items():
        print(f"  {cls:<5} arr={d['arrivals_raw']:>7} srv={d['served']:>7} exp={d['expired']:>6}"
              f" p99={d['delay_p99_s']} p99c={d['delay_p99_censored_s']}")
