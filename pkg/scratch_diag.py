import sys
from concurrent.futures import ProcessPoolExecutor

from keysched import build_config
from keysched.engine import run_with_diagnostics

SEEDS = [0, 1, 2]
METHODS = ["fifo", "priority", "staticquota", "ours"]
SCEN = ["normal", "degraded", "outage"]


def job(args):
    scenario, method, seed = args
    cfg = build_config(scenario=scenario, method=method, seed=seed)
    summary, diag = run_with_diagnostics(cfg)
    return (scenario, method, seed), (summary, diag)


def main():
    jobs = [(sc, m, s) for sc in SCEN for m in METHODS for s in SEEDS]
    jobs += [("sustained_outage", "ours", s) for s in SEEDS]
    with ProcessPoolExecutor(max_workers=2) as pool:
        results = dict(pool.map(job, jobs))

    from keysched.metrics import RunSummary

    def agg(scenario, method, fn):
        vals = [fn(RunSummary.from_json_dict(results[(scenario, method, s)][0]))
                for s in SEEDS]
        vals = [v for v in vals if v is not None]
        return sum(vals) / len(vals) if vals else None

    print("== prop1 (ours runs incl sustained outage)")
    for key, (summary, diag) in sorted(results.items()):
        if key[1] != "ours":
            continue
        s = diag["sufficiency"]
        print(f"  {key}: flagged={s['flagged']}, bad={s['flagged_with_critical_timeout']}")

    for scenario in SCEN:
        print(f"== {scenario}")
        hdr = f"  {'method':<12}{'disc%':>8}{'aggP99c':>9}{'critP99':>9}{'keyeff':>10}{'rmse':>8}{'viol':>6}{'dwell':>8}"
        print(hdr)
        for method in METHODS:
            disc = agg(scenario, method, lambda r: r.totals["total"])
            aggc = agg(scenario, method, lambda r: r.aggregate_p99_s(censored=True))
            crit = agg(scenario, method, lambda r: r.critical_p99_s())
            eff = agg(scenario, method, lambda r: r.keys["efficiency"])
            rmse = agg(scenario, method, lambda r: r.power["rmse_kw"])
            viol = agg(scenario, method, lambda r: r.power["violation_count"])
            dwell = agg(scenario, method, lambda r: r.power["violation_duration_s"])
            print(f"  {method:<12}{100*disc:8.3f}{aggc:9.2f}{crit:9.2f}{eff:10.6f}"
                  f"{rmse:8.2f}{viol:6.1f}{dwell:8.1f}")
        print("  per-class censored p99 (ours|static|prio|fifo):")
        for cls in ["Prot", "Disp", "Meas", "Mkt", "Log"]:
            row = []
            for method in ["ours", "staticquota", "priority", "fifo"]:
                v = agg(scenario, method,
                        lambda r: r.per_class[cls]["delay_p99_censored_s"])
                row.append("None" if v is None else f"{v:.2f}")
            print(f"    {cls:<5} {' | '.join(row)}")


if __name__ == "__main__":
    sys.exit(main())
