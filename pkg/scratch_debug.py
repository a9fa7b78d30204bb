from keysched import build_config, SimulationRun

cfg = build_config(scenario="normal", method="fifo", seed=0, horizon_hours=1.0)
sim = SimulationRun(cfg)
res = sim.run()
led = res.ledger
print("schedule:", sim.schedule.entries)
print("G bases:", {k: m.base_rate for k, m in cfg.regime_models.items()})
for t in range(17000, 20500, 250):
    print(f"slot {t} regime={led.regime[t]} G={led.g[t]} K_end={led.k_end[t]}"
          f" spend={led.spend_regular[t]}")
tot_spend = sum(led.spend_regular)
tot_g = sum(led.g)
print("total G:", tot_g, "total spend:", tot_spend, "K_final:", led.k_end[-1])
print("mean spend/slot:", tot_spend / 36000, "mean G/slot:", tot_g / 36000)
