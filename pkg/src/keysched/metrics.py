"""Run-level metrics: delay percentiles, discard decomposition, key
efficiency, reserve activity, regime-switch recovery, and feasibility
margins. Pure aggregation over completed ledgers and recorded events.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

from .core import CLASS_ORDER, CRITICAL_CLASSES, ClassSpec, ConfigError, SlotLedger, TrafficClass

try:  # Student-t quantile; scipy is present in the normal install.
    from scipy.stats import t as _student_t

    def _t_ppf(q: float, dof: int) -> float:
        return float(_student_t.ppf(q, dof))
except ImportError:  # pragma: no cover
    def _t_ppf(q: float, dof: int) -> float:
        return 1.96


def percentile(values, p: float):
    """Nearest-rank percentile: the ceil(p*n)-th smallest value.

    Deterministic and reproducible across languages; returns None for an
    empty collection (reported as an absent value).
    """
    if not 0.0 < p < 1.0:
        raise ConfigError(f"p must be in (0, 1), got {p}")
    data = sorted(values)
    if not data:
        return None
    rank = max(1, math.ceil(p * len(data)))
    return data[rank - 1]


def percentile_from_hist(hist: dict[int, int], p: float):
    """Nearest-rank percentile over a {value: count} histogram."""
    if not 0.0 < p < 1.0:
        raise ConfigError(f"p must be in (0, 1), got {p}")
    total = sum(hist.values())
    if total == 0:
        return None
    rank = max(1, math.ceil(p * total))
    seen = 0
    for value in sorted(hist):
        seen += hist[value]
        if seen >= rank:
            return value
    return max(hist)  # pragma: no cover


def ccdf_points(hist: dict[int, int]) -> list[tuple[int, float]]:
    """(value, P[X > value]) pairs; monotone non-increasing in value."""
    total = sum(hist.values())
    if total == 0:
        return []
    points = []
    seen = 0
    for value in sorted(hist):
        seen += hist[value]
        points.append((value, 1.0 - seen / total))
    return points


def mean_ci95(values: list[float]) -> tuple[float, float]:
    """Mean and 95% CI half-width (Student-t, n-1 dof)."""
    n = len(values)
    if n == 0:
        raise ConfigError("cannot aggregate an empty sample")
    mean = sum(values) / n
    if n == 1:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    half = _t_ppf(0.975, n - 1) * math.sqrt(var / n)
    return mean, half


def key_efficiency(ledger: SlotLedger):
    """Successful critical messages per key bit spent (regular + reserve)."""
    spent = sum(ledger.spend_regular) + sum(ledger.spend_reserve)
    if spent == 0:
        return None
    crit = sum(sum(ledger.s_reg[c]) + sum(ledger.s_pre[c]) for c in CRITICAL_CLASSES)
    return crit / spent


def key_efficiency_alternates(ledger: SlotLedger, specs: dict[TrafficClass, ClassSpec]) -> dict[str, float | None]:
    """Alternate denominators: critical-class spend only, and bits generated."""
    crit_served = sum(sum(ledger.s_reg[c]) + sum(ledger.s_pre[c]) for c in CRITICAL_CLASSES)
    # critical classes always pay the OTP cost, whatever the funding source
    crit_spend = sum(
        specs[c].k_otp * (sum(ledger.s_reg[c]) + sum(ledger.s_pre[c]))
        for c in CRITICAL_CLASSES
    )
    generated = sum(ledger.g)
    return {
        "per_crit_spent_bit": crit_served / crit_spend if crit_spend > 0 else None,
        "per_generated_bit": crit_served / generated if generated > 0 else None,
    }


def discard_decomposition(ledger: SlotLedger) -> dict[str, float]:
    """Total discard rate over raw arrivals, split passive vs active."""
    arrivals = sum(sum(ledger.a_raw[c]) for c in CLASS_ORDER)
    if arrivals == 0:
        return {"total": 0.0, "passive": 0.0, "active": 0.0}
    passive = sum(sum(ledger.e[c]) for c in CLASS_ORDER)
    active = sum(sum(ledger.d_down[c]) + sum(ledger.d_soft[c]) + sum(ledger.d_pred[c])
                 for c in CLASS_ORDER)
    return {
        "total": (passive + active) / arrivals,
        "passive": passive / arrivals,
        "active": active / arrivals,
    }


@dataclass(frozen=True)
class ReserveActivation:
    start_slot: int
    duration_slots: int
    depth_bits: int


def reserve_stats(ledger: SlotLedger, slot_length_s: float = 0.1) -> dict[str, Any]:
    """Activation runs: maximal contiguous stretches of reserve spend."""
    activations: list[ReserveActivation] = []
    start = None
    depth = 0
    for t, spend in enumerate(ledger.spend_reserve):
        if spend > 0:
            if start is None:
                start = t
                depth = 0
            depth += spend
        elif start is not None:
            activations.append(ReserveActivation(start, t - start, depth))
            start = None
    if start is not None:
        activations.append(ReserveActivation(start, ledger.n_slots - start, depth))
    return {
        "count": len(activations),
        "mean_depth_bits": (sum(a.depth_bits for a in activations) / len(activations))
        if activations else 0.0,
        "mean_duration_s": (sum(a.duration_slots for a in activations)
                            / len(activations) * slot_length_s) if activations else 0.0,
        "activations": [
            {"start_slot": a.start_slot, "duration_s": a.duration_slots * slot_length_s,
             "depth_bits": a.depth_bits}
            for a in activations
        ],
    }


def rolling_p95(events: list[tuple[int, int]], t0: int, t1: int,
                window_slots: int = 100) -> list[float | None]:
    """Trailing-window P95 of critical waits for each slot in [t0, t1).

    events: (serve_slot, wait_slots), sorted by slot. None where the window
    holds no samples.
    """
    from bisect import bisect_left, bisect_right

    slots = [s for s, _ in events]
    out: list[float | None] = []
    for t in range(t0, t1):
        lo = bisect_left(slots, t - window_slots + 1)
        hi = bisect_right(slots, t)
        window = [events[i][1] for i in range(lo, hi)]
        out.append(percentile(window, 0.95) if window else None)
    return out


def recovery_duration(events: list[tuple[int, int]], switch_slot: int, segment_end: int,
                      slot_length_s: float = 0.1, pre_window_slots: int = 600,
                      threshold: float = 1.2, dwell_slots: int = 100,
                      rolling_window: int = 100) -> dict[str, Any] | None:
    """Time for the rolling P95 critical delay to re-enter threshold x its
    pre-switch mean and stay there for the dwell period.

    Returns None when fewer than pre_window_slots of pre-switch data exist;
    the duration is capped at the segment length (capped flag set).
    """
    if switch_slot < pre_window_slots:
        return None
    pre = rolling_p95(events, switch_slot - pre_window_slots, switch_slot, rolling_window)
    pre_vals = [v for v in pre if v is not None]
    if not pre_vals:
        return None
    target = threshold * (sum(pre_vals) / len(pre_vals))
    post = rolling_p95(events, switch_slot, segment_end, rolling_window)
    run = 0
    for i, v in enumerate(post):
        ok = v is not None and v <= target
        run = run + 1 if ok else 0
        if run >= dwell_slots:
            entered = i - dwell_slots + 1
            return {"recovery_s": entered * slot_length_s, "capped": False}
    return {"recovery_s": (segment_end - switch_slot) * slot_length_s, "capped": True}


def objective_estimate(ledger: SlotLedger, specs: dict[TrafficClass, ClassSpec]) -> float:
    """Finite-horizon average of sum_c (lambda_c Q_c + mu_c D_c)."""
    n = ledger.n_slots
    if n == 0:
        return 0.0
    total = 0.0
    for c in CLASS_ORDER:
        lam = specs[c].lambda_w
        mu = specs[c].mu_w
        q = ledger.q_end[c]
        d_act = ledger.d_active(c)
        e = ledger.e[c]
        total += lam * sum(q) + mu * (sum(e) + sum(d_act))
    return total / n


def feasibility_margin(mean_rates: dict[TrafficClass, float],
                       specs: dict[TrafficClass, ClassSpec],
                       g_mean: float) -> dict[str, Any]:
    """Average supply condition: G_bar >= sum_c k_c theta_c A_bar_c.

    rhs_otp prices every class at its OTP cost; rhs_degraded prices
    non-critical classes at the AES cost (the demand the degradation
    mechanism converges to under sustained shortage).
    """
    rhs_otp = sum(specs[c].k_otp * specs[c].theta * mean_rates[c] for c in CLASS_ORDER)
    rhs_degraded = sum(
        (specs[c].k_otp if c in CRITICAL_CLASSES else specs[c].k_aes)
        * specs[c].theta * mean_rates[c]
        for c in CLASS_ORDER
    )
    return {
        "lhs_g_mean": g_mean,
        "rhs_otp": rhs_otp,
        "rhs_degraded": rhs_degraded,
        "feasible": g_mean >= rhs_otp,
        "feasible_degraded": g_mean >= rhs_degraded,
        "headroom": (g_mean - rhs_otp) / rhs_otp if rhs_otp > 0 else math.inf,
    }


def windowed_sufficiency_sweep(ledger: SlotLedger, specs: dict[TrafficClass, ClassSpec],
                               window_slots: int | None = None) -> dict[str, int]:
    """Slide the zero-timeout sufficiency check over a whole run.

    Window length defaults to the largest H allowed by the proposition
    (min critical tau). Returns window counts plus how many flagged-
    sufficient windows contained a critical passive timeout (the acceptance
    requirement is exactly zero).
    """
    import numpy as np

    h = window_slots or min(specs[c].tau for c in CRITICAL_CLASSES)
    n = ledger.n_slots
    if n < h:
        return {"window_slots": h, "windows": 0, "flagged": 0,
                "flagged_with_critical_timeout": 0}
    g = np.asarray(ledger.g, dtype=np.int64)
    k_start = np.asarray(ledger.k_start, dtype=np.int64)
    r_start = np.asarray(ledger.r_start, dtype=np.int64)
    k_crit = np.zeros(n, dtype=np.int64)
    e_crit = np.zeros(n, dtype=np.int64)
    for c in CRITICAL_CLASSES:
        k_crit += specs[c].k_otp * np.asarray(ledger.a_emg[c], dtype=np.int64)
        e_crit += np.asarray(ledger.e[c], dtype=np.int64)
    supply = g + np.maximum(0, k_start - r_start)

    def windowed(x: "np.ndarray") -> "np.ndarray":
        c = np.concatenate(([0], np.cumsum(x)))
        return c[h:] - c[:-h]

    demand_w = windowed(k_crit)
    avail_w = r_start[: n - h + 1] + windowed(supply)
    timeouts_w = windowed(e_crit)
    flagged = demand_w <= avail_w
    bad = flagged & (timeouts_w > 0)
    return {
        "window_slots": h,
        "windows": int(len(flagged)),
        "flagged": int(flagged.sum()),
        "flagged_with_critical_timeout": int(bad.sum()),
    }


@dataclass
class RunSummary:
    """Everything the reporting layer needs from one completed run."""

    scenario: str
    method: str
    seed: int
    n_terminals: int
    horizon_slots: int
    slot_length_s: float
    measurable: bool
    per_class: dict[str, dict[str, Any]] = field(default_factory=dict)
    totals: dict[str, Any] = field(default_factory=dict)
    keys: dict[str, Any] = field(default_factory=dict)
    reserve: dict[str, Any] = field(default_factory=dict)
    recovery: list[dict[str, Any]] = field(default_factory=list)
    power: dict[str, Any] = field(default_factory=dict)
    feasibility: dict[str, Any] = field(default_factory=dict)
    stability: dict[str, Any] = field(default_factory=dict)
    invariants: dict[str, Any] = field(default_factory=dict)
    wait_hist: dict[str, dict[str, int]] = field(default_factory=dict)
    params: dict[str, Any] = field(default_factory=dict)

    def _pooled_hist(self, labels, censored: bool) -> dict[int, int]:
        """Pooled wait histogram; censored mode adds each discarded message
        as a sample at its class deadline (tau), removing the survivorship
        bias of served-only delays under heavy discarding."""
        pooled: dict[int, int] = {}
        for label in labels:
            for k, v in self.wait_hist.get(label, {}).items():
                pooled[int(k)] = pooled.get(int(k), 0) + v
            if censored and label in self.per_class:
                row = self.per_class[label]
                discarded = (row["expired"] + row["dropped_downsample"]
                             + row["dropped_soft"] + row["dropped_predictive"])
                if discarded:
                    tau = round(row["tau"]) if "tau" in row else None
                    if tau is None:
                        tau = max((int(k) for k in self.wait_hist.get(label, {})), default=1)
                    pooled[tau] = pooled.get(tau, 0) + discarded
        return pooled

    def pooled_p99_s(self, labels=None, p: float = 0.99, censored: bool = False) -> float | None:
        labels = list(labels) if labels is not None else list(self.wait_hist)
        q = percentile_from_hist(self._pooled_hist(labels, censored), p)
        return None if q is None else q * self.slot_length_s

    def aggregate_p99_s(self, censored: bool = False) -> float | None:
        return self.pooled_p99_s(censored=censored)

    def critical_p99_s(self, censored: bool = False) -> float | None:
        return self.pooled_p99_s([c.label for c in CRITICAL_CLASSES], censored=censored)

    def critical_hist(self) -> dict[int, int]:
        pooled: dict[int, int] = {}
        for c in CRITICAL_CLASSES:
            for k, v in self.wait_hist.get(c.label, {}).items():
                pooled[int(k)] = pooled.get(int(k), 0) + v
        return pooled

    def to_json_dict(self) -> dict[str, Any]:
        from dataclasses import asdict

        return asdict(self)

    @classmethod
    def from_json_dict(cls, data: dict[str, Any]) -> "RunSummary":
        return cls(**data)
