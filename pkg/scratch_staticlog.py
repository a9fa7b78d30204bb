from keysched import build_config, SimulationRun
from keysched.core import CLASS_ORDER, TrafficClass

LOG = TrafficClass.LOG

for method in ("priority", "staticquota"):
    cfg = build_config(scenario="degraded", method=method, seed=0)
    sim = SimulationRun(cfg)
    res = sim.run()
    led = res.ledger
    s = res.summary
    print(f"== {method} total={s.totals['total']:.5f}")
    for cls, d in s.per_class.items():
        print(f"  {cls:<5} arr={d['arrivals_raw']:>7} srv={d['served']:>7}"
              f" exp={d['expired']:>6} p99c={d['delay_p99_censored_s']}")
    # where do Log expiries happen?
    exp = led.e[LOG]
    windows = {}
    for t, v in enumerate(exp):
        if v:
            windows.setdefault(t // 3000, 0)
            windows[t // 3000] += v
    print("  Log expiries by 5-min window:", windows)
