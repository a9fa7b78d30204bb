import itertools
from concurrent.futures import ProcessPoolExecutor

from keysched import build_config
from keysched.config import SchedulerParams
from keysched.engine import run_with_diagnostics
from keysched.metrics import RunSummary

RHOS = (0.5, 0.85)
BETAS = (0.0, 0.1, 0.2)
SEEDS = (0, 1, 2)


def dip_train(horizon, period=3600, start=1800, length=400):
    from keysched.qkd import RegimeSchedule

    entries = [(0, "normal")]
    t = start
    while t + length < horizon:
        entries.append((t, "outage"))
        entries.append((t + length, "normal"))
        t += period
    return RegimeSchedule(tuple(entries))


def job(cell):
    rho, beta, seed = cell
    cfg = build_config(scenario="normal", method="ours", seed=seed,
                       horizon_hours=0.5, k0=100_000,
                       explicit_schedule=dip_train(18_000),
                       params=SchedulerParams(rho=rho, beta=beta, r_min=0),
                       tag=f"r{rho}b{beta}")
    summary, _ = run_with_diagnostics(cfg)
    return cell, summary


with ProcessPoolExecutor(max_workers=2) as pool:
    results = dict(pool.map(job, itertools.product(RHOS, BETAS, SEEDS)))

for rho in RHOS:
    for beta in BETAS:
        rows = [RunSummary.from_json_dict(results[(rho, beta, s)]) for s in SEEDS]
        disc = sum(r.totals["total"] for r in rows) / len(rows)
        p99s = [r.aggregate_p99_s() for r in rows]
        p99 = sum(p99s) / len(p99s)
        p99c = sum(r.aggregate_p99_s(censored=True) for r in rows) / len(rows)
        print(f"rho={rho} beta={beta}: disc={100*disc:.3f}% servedP99={p99:.2f}s"
              f" censP99={p99c:.2f}s")
