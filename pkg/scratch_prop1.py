import numpy as np

from keysched import build_config, SimulationRun
from keysched.core import CLASS_ORDER, CRITICAL_CLASSES

cfg = build_config(scenario="sustained_outage", method="ours", seed=0)
sim = SimulationRun(cfg)
res = sim.run()
led = res.ledger
n = led.n_slots

g = np.array(led.g)
k_start = np.array(led.k_start)
r_start = np.array(led.r_start)
k_crit = np.zeros(n, dtype=np.int64)
e_crit = np.zeros(n, dtype=np.int64)
for c in CRITICAL_CLASSES:
    k_crit += cfg.class_specs[c].k_otp * np.array(led.a_emg[c])
    e_crit += np.array(led.e[c])
supply = r_start + g + np.maximum(0, k_start - r_start)
flagged = k_crit <= supply
bad = np.nonzero(flagged & (e_crit > 0))[0]
print(f"bad slots: {len(bad)}")
for t in bad[:8]:
    print(f"\nslot {t}: G={led.g[t]} K_start={led.k_start[t]} R_start={led.r_start[t]}"
          f" spend_reg={led.spend_regular[t]} spend_res={led.spend_reserve[t]}")
    for c in CLASS_ORDER:
        if led.e[c][t] or led.a_emg[c][t] or led.s_reg[c][t] or led.s_pre[c][t]:
            print(f"   {c.label}: a_emg={led.a_emg[c][t]} s_reg={led.s_reg[c][t]}"
                  f" s_pre={led.s_pre[c][t]} E={led.e[c][t]} Q_end={led.q_end[c][t]}"
                  f" A_adm={led.a_adm[c][t]} TB={led.tb[c][t]:.2f}")
    t0 = max(0, t - 2)
    print(f"   context K_end[{t0}:{t+1}] = {[led.k_end[u] for u in range(t0, t+1)]}")
    print(f"   context spend_res = {[led.spend_reserve[u] for u in range(t0, t+1)]}")
