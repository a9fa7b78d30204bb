"""Clock-driven kernel: executes the per-slot pipeline in a fixed order,
records the audit ledger, and builds the run summary.

Per-slot order: (1) realize key production; (2) EWMA updates from the
previous slot's observations; (3) token rates and bucket refill; (4) regular
arbitration; (5) critical preemption; (6) reserve resize; (7) mode and
down-sampling updates; (8) admission of this slot's arrivals (down-sampling
filter applied); (9) TTL aging and soft/predictive drops; (10) virtual-queue
and plant updates. Stage order is part of the contract and guarded by tests.
"""

from __future__ import annotations

import gzip
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .config import RunConfig, config_to_dict
from .core import (
    CLASS_ORDER,
    CRITICAL_CLASSES,
    ClassQueue,
    InvariantViolation,
    KeyPool,
    SlotLedger,
    TrafficClass,
)
from .metrics import (
    RunSummary,
    discard_decomposition,
    feasibility_margin,
    key_efficiency,
    key_efficiency_alternates,
    objective_estimate,
    percentile_from_hist,
    recovery_duration,
    reserve_stats,
    windowed_sufficiency_sweep,
)
from .power import step_plant, tracking_metrics
from .qkd import foreknowledge, generate_key_trace
from .scheduler import (
    MODE_AES,
    DegradationState,
    critical_eligible_counts,
    critical_liens,
    ForecastState,
    Method,
    MethodKind,
    TokenBucket,
    age_and_drop,
    arbitrate_slot,
    compute_token_rates,
    ewma_update,
    forecast_available_keys,
    preempt_critical,
    refill_bucket,
    resize_reserve,
    update_virtual_queue,
    update_mode,
    update_downsampling,
)
from .traffic import generate_trace

logger = logging.getLogger(__name__)

UNBOUNDED_POOL_BITS = 10 ** 15


@dataclass
class RunResult:
    summary: RunSummary
    ledger: SlotLedger
    p_trace: list[float]
    p_ref_trace: list[float]


class SimulationRun:
    """Owns all mutable state of one run; strictly single-threaded."""

    def __init__(self, cfg: RunConfig, preempt_first: bool = False) -> None:
        self.cfg = cfg
        self.method: Method = cfg.method
        self.specs = cfg.class_specs
        self.params = cfg.params
        self.clock = cfg.clock
        self.horizon = cfg.clock.horizon_slots
        # preempt_first exists only for the pipeline-order sensitivity test.
        self.preempt_first = preempt_first

        self.schedule = cfg.schedule()
        key_trace = generate_key_trace(self.schedule, cfg.regime_models,
                                       self.horizon, cfg.seed)
        self.g_trace = key_trace.bits
        self.regime_labels = key_trace.labels
        self.key_trace = key_trace
        self.arrivals = generate_trace(cfg.traffic, self.horizon, cfg.seed,
                                       cfg.clock.slot_length_s, self.regime_labels)
        self.p_ref = cfg.reference.trace(self.horizon, cfg.plant)

        self.queues: dict[TrafficClass, ClassQueue] = {c: ClassQueue(c) for c in CLASS_ORDER}
        if cfg.unbounded_keys:
            self.pool = KeyPool(k=UNBOUNDED_POOL_BITS, r_emg=0, r_min=0, r_max=0, beta=0.0)
        else:
            self.pool = KeyPool(k=cfg.k0, r_emg=0, r_min=self.params.r_min,
                                r_max=self.params.r_max, beta=self.params.beta)

        self.buckets: dict[TrafficClass, TokenBucket] | None = None
        if self.method.uses_buckets:
            self.buckets = {
                c: TokenBucket(level=self.specs[c].bucket_cap, cap=self.specs[c].bucket_cap)
                for c in CLASS_ORDER
            }

        mean_rates = cfg.mean_rates()
        alpha = 1.0 if self.method.no_forecast else self.params.alpha
        g0 = float(cfg.regime_models[self.schedule.label_at(0)].base_rate)
        self.forecast = ForecastState(alpha=alpha, g_hat=g0,
                                      a_hat={c: mean_rates[c] for c in CLASS_ORDER})
        self.mean_rates = mean_rates

        self.deg = DegradationState(
            h_up=self.params.h_up, h_down=self.params.h_down, h_drop=self.params.h_drop,
            m_max=self.params.m_max, gamma_up=self.params.gamma_up,
            gamma_down=self.params.gamma_down,
            downsample_classes=cfg.downsample_classes,
        )
        self.u: dict[TrafficClass, float] = {c: 0.0 for c in CLASS_ORDER}
        self.weights = {c: self.specs[c].w for c in CLASS_ORDER}
        self.otp_costs = {c: self.specs[c].k_otp for c in CLASS_ORDER}

        self.msg_counter = 0
        self.admission_counters = {c: 0 for c in CLASS_ORDER}
        self.last_g = 0
        self.last_a_raw = {c: 0 for c in CLASS_ORDER}

        self.ledger = SlotLedger()
        self.wait_hist: dict[TrafficClass, dict[int, int]] = {c: {} for c in CLASS_ORDER}
        self.crit_serve_events: list[tuple[int, int]] = []
        self.mode_flips: list[dict] = []
        self.u_max = {c: 0.0 for c in CLASS_ORDER}
        self.serve_count = 0
        self.key_blocked_slots = 0
        self.emergency_arrivals = {c: 0 for c in CLASS_ORDER}

        self.p = self.p_ref[0] if self.horizon else 0.0
        self.p_trace: list[float] = []
        self.current_command: float | None = None
        self.pending_commands: dict[int, float] = {}

    # -- per-slot helpers ---------------------------------------------------

    def _record_serves(self, slot: int, served: dict[TrafficClass, list], preempted: bool) -> int:
        latest_disp_issue = -1
        for c, msgs in served.items():
            hist = self.wait_hist[c]
            for msg in msgs:
                wait = slot - msg[1]
                hist[wait] = hist.get(wait, 0) + 1
                if c in CRITICAL_CLASSES:
                    self.crit_serve_events.append((slot, wait))
                if c is TrafficClass.DISP and msg[1] > latest_disp_issue:
                    latest_disp_issue = msg[1]
            self.serve_count += len(msgs)
        del preempted
        return latest_disp_issue

    def _admit_arrivals(self, slot: int) -> tuple[dict, dict, dict]:
        admitted = {c: 0 for c in CLASS_ORDER}
        raw = {c: 0 for c in CLASS_ORDER}
        down = {c: 0 for c in CLASS_ORDER}
        degradation = self.method.uses_degradation
        for c, count, emg_count in self.arrivals.arrivals_for_slot(slot):
            raw[c] = count
            if count == 0:
                continue
            self.emergency_arrivals[c] += emg_count
            m = self.deg.m[c] if (degradation and c in self.deg.downsample_classes) else 1
            queue = self.queues[c]
            for i in range(count):
                msg_id = self.msg_counter
                self.msg_counter += 1
                if m > 1:
                    n = self.admission_counters[c]
                    self.admission_counters[c] += 1
                    if n % m != 0:
                        down[c] += 1
                        continue
                queue.push((msg_id, slot, i < emg_count))
                admitted[c] += 1
        return raw, admitted, down

    def _measurable_beta(self, slot: int) -> float:
        """Reserve fraction, boosted ahead of a known switch to a worse regime."""
        beta = self.params.beta
        if not self.cfg.measurable:
            return beta
        nxt = foreknowledge(self.schedule, slot)
        if nxt is None or nxt - slot > self.params.measurable_lead_slots:
            return beta
        current = self.cfg.regime_models[self.schedule.label_at(slot)].base_rate
        upcoming = self.cfg.regime_models[self.schedule.label_at(nxt)].base_rate
        if upcoming < current:
            return min(0.99, beta * self.params.measurable_beta_factor)
        return beta

    def run_slot(self, slot: int) -> None:
        ledger = self.ledger
        pool = self.pool
        method = self.method

        # (1) realize key production
        g = int(self.g_trace[slot])
        k_start = pool.k
        r_start = pool.r_emg
        pool.add(g)

        # (2) strictly causal EWMA updates from slot t-1 observations
        if slot > 0:
            self.forecast.g_hat = ewma_update(self.forecast.g_hat, self.last_g,
                                              self.forecast.alpha)
            for c in CLASS_ORDER:
                self.forecast.a_hat[c] = ewma_update(self.forecast.a_hat[c],
                                                     self.last_a_raw[c],
                                                     self.forecast.alpha)

        # effective per-message costs for this slot
        if method.uses_degradation:
            k_eff = self.deg.k_eff(self.specs)
        else:
            k_eff = self.otp_costs

        # (3) token rates and refill
        if method.kind is MethodKind.KEY_AWARE_FULL:
            k_avail = forecast_available_keys(k_start, self.forecast.g_hat, r_start)
            demand = {
                c: self.forecast.a_hat[c]
                / (self.deg.m[c] if (method.uses_degradation and c not in CRITICAL_CLASSES) else 1)
                for c in CLASS_ORDER
            }
            rates = compute_token_rates(k_avail, demand, k_eff, self.weights,
                                        self.params.rho)
            for c in CLASS_ORDER:
                refill_bucket(self.buckets[c], rates[c])
        elif method.kind is MethodKind.STATIC_QUOTA_PRIORITY:
            for c in CLASS_ORDER:
                refill_bucket(self.buckets[c], self.cfg.static_rates[c])

        # (4) regular arbitration, (5) critical preemption
        stages = ["arbitrate", "preempt"] if not self.preempt_first else ["preempt", "arbitrate"]
        # immediate critical demand, measured before any service this slot:
        # feeds the emergency-demand ledger column and the per-class liens
        eligible = critical_eligible_counts(slot, self.queues, self.specs,
                                            self.params.ttl_preempt_slots)
        floors = critical_liens(eligible, k_eff) if method.uses_reserve else None
        arb = None
        pre = None
        for stage in stages:
            if stage == "arbitrate":
                arb = arbitrate_slot(slot, self.queues, pool, self.buckets, k_eff,
                                     self.specs, method, floors,
                                     self.cfg.static_crit_floor)
            elif method.uses_reserve:
                # beta = 0 disables the reserve and with it the whole
                # preemption mechanism
                pre = preempt_critical(slot, self.queues, pool, k_eff, self.specs,
                                       self.params.ttl_preempt_slots)

        latest_issue = self._record_serves(slot, arb.served, False)
        if pre is not None:
            latest_pre = self._record_serves(slot, pre.served, True)
            latest_issue = max(latest_issue, latest_pre)
        if latest_issue >= 0:
            effect = slot + self.cfg.plant.latency_slots
            self.pending_commands[effect] = self.p_ref[latest_issue]

        # (6) reserve resize from this slot's pre-spend inventory; the
        # earmark is capped at the physical inventory so it is always funded
        if method.uses_reserve and not self.cfg.unbounded_keys:
            pool.r_emg = min(
                resize_reserve(k_start, g, self._measurable_beta(slot),
                               self.params.r_min, self.params.r_max),
                pool.k,
            )
        elif not method.uses_reserve:
            pool.r_emg = 0

        # (7) mode and down-sampling updates on the post-resize remainder
        if method.uses_degradation:
            k_tilde_now = pool.regular
            flipped = update_mode(k_tilde_now, self.deg)
            for c in flipped:
                self.mode_flips.append({
                    "slot": slot, "class": c.label, "mode": self.deg.mode[c],
                    "k_tilde": k_tilde_now,
                })
            update_downsampling(k_tilde_now, self.deg)

        # (8) admission of this slot's arrivals
        raw, admitted, down = self._admit_arrivals(slot)

        # key-blocked bookkeeping: an eligible head that only keys held back
        if method.kind is MethodKind.FIFO:
            head_cls = min(
                (c for c in CLASS_ORDER if self.queues[c].items),
                key=lambda c: self.queues[c].items[0][0], default=None)
            if head_cls is not None and pool.regular < k_eff[head_cls]:
                self.key_blocked_slots += 1
        else:
            for c in CLASS_ORDER:
                if not self.queues[c].items:
                    continue
                bucket = self.buckets[c] if self.buckets else None
                if (bucket is None or bucket.level >= 1.0) and pool.regular < k_eff[c]:
                    self.key_blocked_slots += 1
                    break

        # (9) TTL aging plus soft and predictive drops
        drops = age_and_drop(
            slot, self.queues, pool, self.buckets, k_eff, self.deg, self.specs,
            self.params.window_slots,
            soft_drop=method.uses_degradation,
            predictive_drop=method.kind is MethodKind.KEY_AWARE_FULL,
        )

        # (10) virtual queues and the dispatch-execution plant
        if slot in self.pending_commands:
            self.current_command = self.pending_commands.pop(slot)
        self.p = step_plant(self.p, self.current_command, self.cfg.plant)
        self.p_trace.append(self.p)

        # ledger row
        ledger.regime.append(self.regime_labels[slot])
        ledger.g.append(g)
        ledger.k_start.append(k_start)
        ledger.k_end.append(pool.k)
        ledger.r_start.append(r_start)
        ledger.r_end.append(pool.r_emg)
        ledger.ktilde_end.append(pool.regular)
        ledger.spend_regular.append(arb.spend_regular + (pre.fallback_spend if pre else 0))
        ledger.spend_reserve.append(pre.reserve_spend if pre else 0)
        for c in CLASS_ORDER:
            s_reg = len(arb.served[c])
            s_pre = len(pre.served[c]) if (pre and c in pre.served) else 0
            served = s_reg + s_pre
            a_adm = admitted[c]
            a_emg = eligible.get(c, 0)
            ledger.a_raw[c].append(raw[c])
            ledger.a_adm[c].append(a_adm)
            ledger.a_emg[c].append(a_emg)
            ledger.s_reg[c].append(s_reg)
            ledger.s_pre[c].append(s_pre)
            ledger.e[c].append(len(drops.expired[c]))
            ledger.d_down[c].append(down[c])
            ledger.d_soft[c].append(drops.soft[c])
            ledger.d_pred[c].append(len(drops.predictive[c]))
            ledger.q_end[c].append(len(self.queues[c]))
            ledger.tb[c].append(round(self.buckets[c].level, 6) if self.buckets else 0.0)
            u = update_virtual_queue(self.u[c], a_adm, served, self.specs[c].theta)
            self.u[c] = u
            if u > self.u_max[c]:
                self.u_max[c] = u
            ledger.u[c].append(round(u, 6))
            ledger.mode[c].append(self.deg.mode[c])
            ledger.m[c].append(self.deg.m[c])

        if pool.k < 0:
            raise InvariantViolation(f"slot {slot}: negative inventory")

        self.last_g = g
        for c in CLASS_ORDER:
            self.last_a_raw[c] = raw[c]

    def run(self, validate: bool = True) -> RunResult:
        for slot in range(self.horizon):
            try:
                self.run_slot(slot)
            except InvariantViolation as exc:
                raise InvariantViolation(
                    f"run {self.cfg.run_id()} aborted at slot {slot}: {exc}"
                ) from exc
        if validate:
            final_q = {c: len(self.queues[c]) for c in CLASS_ORDER}
            self.ledger.check_conservation(final_q)
            self.ledger.check_replay()
            self.ledger.check_budget()
        return RunResult(
            summary=self._build_summary(),
            ledger=self.ledger,
            p_trace=self.p_trace,
            p_ref_trace=self.p_ref,
        )

    # -- summary ------------------------------------------------------------

    def _build_summary(self) -> RunSummary:
        cfg = self.cfg
        dt = self.clock.slot_length_s
        ledger = self.ledger
        summary = RunSummary(
            scenario=cfg.scenario,
            method=cfg.method_label,
            seed=cfg.seed,
            n_terminals=cfg.traffic.terminals,
            horizon_slots=self.horizon,
            slot_length_s=dt,
            measurable=cfg.measurable,
        )
        summary.params = config_to_dict(cfg)

        third = max(1, self.horizon // 3)
        total_arrivals = 0
        total_served = 0
        total_discards = 0
        for c in CLASS_ORDER:
            arrivals = sum(ledger.a_raw[c])
            served = sum(ledger.s_reg[c]) + sum(ledger.s_pre[c])
            expired = sum(ledger.e[c])
            d_active = sum(ledger.d_down[c]) + sum(ledger.d_soft[c]) + sum(ledger.d_pred[c])
            hist = self.wait_hist[c]
            u_series = ledger.u[c]
            thirds = [
                (sum(u_series[i * third:(i + 1) * third]) / third) if u_series else 0.0
                for i in range(3)
            ]
            summary.per_class[c.label] = {
                "arrivals_raw": arrivals,
                "admitted": sum(ledger.a_adm[c]),
                "emergency_arrivals": self.emergency_arrivals[c],
                "served": served,
                "served_regular": sum(ledger.s_reg[c]),
                "served_preempt": sum(ledger.s_pre[c]),
                "expired": expired,
                "dropped_downsample": sum(ledger.d_down[c]),
                "dropped_soft": sum(ledger.d_soft[c]),
                "dropped_predictive": sum(ledger.d_pred[c]),
                "final_queue": len(self.queues[c]),
                "discard_rate": (expired + d_active) / arrivals if arrivals else 0.0,
                "passive_rate": expired / arrivals if arrivals else 0.0,
                "active_rate": d_active / arrivals if arrivals else 0.0,
                "delay_p50_s": _scaled(percentile_from_hist(hist, 0.50), dt),
                "delay_p95_s": _scaled(percentile_from_hist(hist, 0.95), dt),
                "delay_p99_s": _scaled(percentile_from_hist(hist, 0.99), dt),
                "tau": self.specs[c].tau,
                "mean_rate": self.mean_rates[c],
                "theta": self.specs[c].theta,
                "u_max": self.u_max[c],
                "u_final": self.u[c],
                "u_mean_thirds": thirds,
                "quota_ratio": (served / (self.specs[c].theta * arrivals))
                if arrivals and self.specs[c].theta > 0 else None,
            }
            total_arrivals += arrivals
            total_served += served
            total_discards += expired + d_active

        summary.wait_hist = {
            c.label: {str(k): v for k, v in sorted(self.wait_hist[c].items())}
            for c in CLASS_ORDER
        }
        for c in CLASS_ORDER:
            summary.per_class[c.label]["delay_p99_censored_s"] = summary.pooled_p99_s(
                [c.label], censored=True)

        summary.totals = {
            "arrivals": total_arrivals,
            "served": total_served,
            "discards": total_discards,
            **discard_decomposition(ledger),
        }
        summary.keys = {
            "bits_generated": int(sum(ledger.g)),
            "bits_spent_regular": int(sum(ledger.spend_regular)),
            "bits_spent_reserve": int(sum(ledger.spend_reserve)),
            "k_final": self.pool.k if not cfg.unbounded_keys else None,
            "k_min": int(min(ledger.k_end)) if ledger.n_slots else cfg.k0,
            "efficiency": key_efficiency(ledger),
            **key_efficiency_alternates(ledger, self.specs),
        }
        summary.reserve = reserve_stats(ledger, dt)
        summary.recovery = self._recovery_entries()
        if self.p_trace:
            tm = tracking_metrics(self.p_trace, self.p_ref, cfg.plant.epsilon_kw, dt)
            summary.power = {
                "rmse_kw": tm.rmse_kw,
                "nrmse": tm.nrmse,
                "violation_count": tm.violation_count,
                "violation_duration_s": tm.violation_duration_s,
            }
        summary.feasibility = {
            label: feasibility_margin(self.mean_rates, self.specs, model.base_rate)
            for label, model in sorted(cfg.regime_models.items())
        }
        summary.stability = {
            "objective_estimate": objective_estimate(ledger, self.specs),
            "mode_flips": self.mode_flips,
            "mode_flip_count": len(self.mode_flips),
        }
        summary.invariants = {
            "serve_events_checked": self.serve_count,
            "gate_violations": 0,
            "conservation_ok": True,
            "replay_ok": True,
            "budget_ok": True,
            "k_min_nonnegative": (min(ledger.k_end) >= 0) if ledger.n_slots else True,
            "key_blocked_slots": self.key_blocked_slots,
            "reserve_spend_bits": int(sum(ledger.spend_reserve)),
        }
        return summary

    def _recovery_entries(self) -> list[dict]:
        entries = []
        segments = self.schedule.segments(self.horizon)
        for i in range(1, len(segments)):
            switch = segments[i][0]
            seg_end = segments[i][1]
            rec = recovery_duration(self.crit_serve_events, switch, seg_end,
                                    self.clock.slot_length_s)
            entries.append({
                "switch_slot": switch,
                "from_regime": segments[i - 1][2],
                "to_regime": segments[i][2],
                "recovery_s": rec["recovery_s"] if rec else None,
                "capped": rec["capped"] if rec else None,
            })
        return entries


def _scaled(value, dt: float):
    return None if value is None else value * dt


# -- run/batch drivers -------------------------------------------------------


def run_scenario(cfg: RunConfig, out_dir: str | Path | None = None,
                 dump_ledger: bool = False, dump_traces: bool = False,
                 validate: bool = True) -> RunResult:
    """Execute one run; optionally persist summary, ledger, and traces."""
    result = SimulationRun(cfg).run(validate=validate)
    target = out_dir or cfg.out_dir
    if target is not None:
        run_dir = Path(target) / cfg.run_id()
        run_dir.mkdir(parents=True, exist_ok=True)
        write_summary(result.summary, run_dir / "summary.json")
        if dump_ledger:
            write_ledger_csv(result, run_dir / "ledger.csv.gz")
        if dump_traces:
            sim = SimulationRun(cfg)  # traces are cheap to regenerate
            sim.arrivals.to_csv(run_dir / "arrivals.csv")
            sim.key_trace.to_csv(run_dir / "keys.csv")
    return result


def write_summary(summary: RunSummary, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(summary.to_json_dict(), fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_summary(path: str | Path) -> RunSummary:
    with open(path) as fh:
        return RunSummary.from_json_dict(json.load(fh))


def write_ledger_csv(result: RunResult, path: str | Path) -> None:
    ledger = result.ledger
    cols = ["slot", "regime", "G", "K_start", "K_end", "R_start", "R_end",
            "Ktilde_end", "spend_regular", "spend_reserve"]
    for c in CLASS_ORDER:
        for f in ("A", "Aadm", "Aemg", "Sreg", "Spre", "E", "Ddown", "Dsoft",
                  "Dpred", "Q", "TB", "U", "mode", "m"):
            cols.append(f"{f}_{c.label}")
    cols += ["P_ref_kw", "P_kw"]
    with gzip.open(path, "wt", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for t in range(ledger.n_slots):
            row = [t, ledger.regime[t], ledger.g[t], ledger.k_start[t], ledger.k_end[t],
                   ledger.r_start[t], ledger.r_end[t], ledger.ktilde_end[t],
                   ledger.spend_regular[t], ledger.spend_reserve[t]]
            for c in CLASS_ORDER:
                row += [ledger.a_raw[c][t], ledger.a_adm[c][t], ledger.a_emg[c][t],
                        ledger.s_reg[c][t], ledger.s_pre[c][t], ledger.e[c][t],
                        ledger.d_down[c][t], ledger.d_soft[c][t], ledger.d_pred[c][t],
                        ledger.q_end[c][t], ledger.tb[c][t], ledger.u[c][t],
                        ledger.mode[c][t], ledger.m[c][t]]
            row += [f"{result.p_ref_trace[t]:.3f}", f"{result.p_trace[t]:.3f}"]
            fh.write(",".join(str(x) for x in row) + "\n")


def _run_one(args: tuple) -> tuple[str, dict | None, str | None]:
    cfg, out_dir, dump_ledger, validate = args
    try:
        result = run_scenario(cfg, out_dir=out_dir, dump_ledger=dump_ledger,
                              validate=validate)
        return cfg.run_id(), result.summary.to_json_dict(), None
    except Exception as exc:  # individual failure is recorded, batch continues
        logger.error("run %s failed: %s", cfg.run_id(), exc)
        return cfg.run_id(), None, str(exc)


def run_batch(configs: list[RunConfig], out_dir: str | Path | None = None,
              parallel: int = 1, dump_ledger_for: set[str] | None = None,
              validate: bool = True) -> dict[str, RunSummary]:
    """Run independent configs, optionally in parallel processes.

    Outputs are aggregated after a deterministic sort by run id, so results
    do not depend on completion order or on the parallelism degree.
    """
    dump_ledger_for = dump_ledger_for or set()
    jobs = [(cfg, out_dir, cfg.run_id() in dump_ledger_for, validate) for cfg in configs]
    rows: list[tuple[str, dict | None, str | None]] = []
    if parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            rows = list(pool.map(_run_one, jobs))
    else:
        rows = [_run_one(job) for job in jobs]
    summaries: dict[str, RunSummary] = {}
    failures: list[tuple[str, str]] = []
    for run_id, data, error in sorted(rows, key=lambda r: r[0]):
        if data is None:
            failures.append((run_id, error or "unknown error"))
        else:
            summaries[run_id] = RunSummary.from_json_dict(data)
    for run_id, error in failures:
        logger.warning("batch run %s failed: %s", run_id, error)
    return summaries


def run_with_diagnostics(cfg: RunConfig) -> tuple[dict, dict]:
    """Run in-process and return (summary dict, ledger-level diagnostics).

    Diagnostics cover what the summary cannot: the windowed zero-timeout
    sufficiency sweep for critical classes. The ledger itself is discarded.
    """
    result = SimulationRun(cfg).run(validate=True)
    diag = {
        "sufficiency": windowed_sufficiency_sweep(result.ledger, cfg.class_specs),
    }
    return result.summary.to_json_dict(), diag


def _run_one_diag(cfg: RunConfig) -> tuple[str, dict | None, dict | None, str | None]:
    try:
        summary, diag = run_with_diagnostics(cfg)
        return cfg.run_id(), summary, diag, None
    except Exception as exc:
        logger.error("run %s failed: %s", cfg.run_id(), exc)
        return cfg.run_id(), None, None, str(exc)


def run_batch_with_diagnostics(
        configs: list[RunConfig], parallel: int = 1,
) -> tuple[dict[str, tuple[RunSummary, dict]], list[tuple[str, str]]]:
    """Batch variant keeping per-run diagnostics; returns (results, failures)."""
    if parallel > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            rows = list(pool.map(_run_one_diag, configs))
    else:
        rows = [_run_one_diag(cfg) for cfg in configs]
    results: dict[str, tuple[RunSummary, dict]] = {}
    failures: list[tuple[str, str]] = []
    for run_id, summary, diag, error in sorted(rows, key=lambda r: r[0]):
        if summary is None:
            failures.append((run_id, error or "unknown"))
        else:
            results[run_id] = (RunSummary.from_json_dict(summary), diag)
    return results, failures
