"""Scenario configuration: defaults, derivation rules, YAML round-trip.

A RunConfig fully determines one simulation run given a seed. Derived
quantities (key-rate bases, hysteresis thresholds, static quota rates) are
computed from the configured traffic means so that system size scales
coherently; every resolved value is echoed into run outputs for provenance.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import yaml

from .core import (
    CLASS_ORDER,
    ClassSpec,
    ClockConfig,
    ConfigError,
    TrafficClass,
    validate_specs,
)
from .power import PlantModel, ReferenceSignal
from .qkd import (
    SCENARIO_NAMES,
    RegimeModel,
    RegimeSchedule,
    default_regime_models,
    scenario_schedule,
)
from .scheduler import Method, MethodKind
from .traffic import TrafficConfig, analytic_mean_rates, default_traffic_config

METHOD_LABELS = {
    "fifo": Method(MethodKind.FIFO),
    "priority": Method(MethodKind.FIXED_PRIORITY),
    "staticquota": Method(MethodKind.STATIC_QUOTA_PRIORITY),
    "ours": Method(MethodKind.KEY_AWARE_FULL),
    "ours_noforecast": Method(MethodKind.KEY_AWARE_FULL, no_forecast=True),
    "ours_noreserve": Method(MethodKind.KEY_AWARE_FULL, no_reserve=True),
    "ours_nodegrade": Method(MethodKind.KEY_AWARE_FULL, no_degradation=True),
    "ours_wrr": Method(MethodKind.KEY_AWARE_FULL, wrr_arbiter=True),
    "ideal": Method(MethodKind.FIFO),  # unbounded keys, see RunConfig.unbounded_keys
}

BASELINE_METHODS = ("fifo", "priority", "staticquota", "ours")

# Per-class defaults at the VPP-50 reference scale. OTP costs follow message
# richness (telemetry frames are large, log lines small); bucket capacities
# sit at 1-2x the class peak load over its deadline window and scale with
# terminal count.
_CLASS_TABLE: dict[TrafficClass, dict[str, Any]] = {
    TrafficClass.PROT: dict(d_max_s=0.15, k_otp=256, k_aes=64, theta=0.90, w=8.0,
                            lambda_w=1.0, mu_w=10.0, bucket_cap=20.0, rank=0, q_max=None),
    TrafficClass.DISP: dict(d_max_s=1.0, k_otp=512, k_aes=64, theta=0.80, w=4.0,
                            lambda_w=1.0, mu_w=10.0, bucket_cap=30.0, rank=1, q_max=None),
    TrafficClass.MEAS: dict(d_max_s=5.0, k_otp=1600, k_aes=32, theta=0.70, w=2.0,
                            lambda_w=1.0, mu_w=2.0, bucket_cap=120.0, rank=2, q_max=None),
    TrafficClass.MKT: dict(d_max_s=30.0, k_otp=600, k_aes=96, theta=0.50, w=1.0,
                           lambda_w=1.0, mu_w=2.0, bucket_cap=30.0, rank=3, q_max=30),
    TrafficClass.LOG: dict(d_max_s=60.0, k_otp=400, k_aes=96, theta=0.50, w=1.0,
                           lambda_w=1.0, mu_w=2.0, bucket_cap=80.0, rank=4, q_max=60),
}


@dataclass(frozen=True)
class SchedulerParams:
    alpha: float = 0.6
    rho: float = 0.85
    beta: float = 0.1
    r_min: int = 150_000
    r_max: int = 240_000
    h_up: int = 0          # 0 means "derive from traffic means"
    h_down: int = 0
    h_drop: int = 0
    m_max: int = 8
    gamma_up: float = 2.0
    gamma_down: float = 2.0
    window_slots: int = 10
    v: float = 50.0
    ttl_preempt_slots: int = 1
    measurable_beta_factor: float = 2.0
    measurable_lead_slots: int = 300

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError("alpha must be in (0, 1]")
        if not 0.0 < self.rho < 1.0:
            raise ConfigError("rho must be in (0, 1)")
        if not 0.0 <= self.beta < 1.0:
            raise ConfigError("beta must be in [0, 1)")
        if self.r_min > self.r_max or self.r_min < 0:
            raise ConfigError("need 0 <= r_min <= r_max")
        if self.window_slots < 1:
            raise ConfigError("window_slots must be >= 1")
        if self.ttl_preempt_slots < 0:
            raise ConfigError("ttl_preempt_slots must be >= 0")


@dataclass(frozen=True)
class RunConfig:
    scenario: str
    method_label: str
    seed: int
    clock: ClockConfig
    traffic: TrafficConfig
    regime_models: dict[str, RegimeModel]
    class_specs: dict[TrafficClass, ClassSpec]
    params: SchedulerParams
    plant: PlantModel
    reference: ReferenceSignal
    measurable: bool = False
    switch_jitter_slots: int = 300
    unbounded_keys: bool = False
    k0: int = 460_000
    static_rates: dict[TrafficClass, float] = field(default_factory=dict)
    static_crit_floor: int = 0
    downsample_classes: tuple[TrafficClass, ...] = (TrafficClass.MEAS,)
    explicit_schedule: RegimeSchedule | None = None
    out_dir: str | None = None
    tag: str = ""  # disambiguates run ids across parameter-scan variants

    def __post_init__(self) -> None:
        if self.method_label not in METHOD_LABELS:
            raise ConfigError(
                f"unknown method {self.method_label!r}; known: {sorted(METHOD_LABELS)}"
            )
        if self.scenario not in SCENARIO_NAMES and self.explicit_schedule is None:
            raise ConfigError(
                f"unknown scenario {self.scenario!r}; known: {sorted(SCENARIO_NAMES)}"
            )
        if self.k0 < 0:
            raise ConfigError("k0 must be >= 0")
        validate_specs(self.class_specs)

    @property
    def method(self) -> Method:
        return METHOD_LABELS[self.method_label]

    def schedule(self) -> RegimeSchedule:
        if self.explicit_schedule is not None:
            return self.explicit_schedule
        return scenario_schedule(
            self.scenario, self.clock.horizon_slots, self.seed,
            measurable=self.measurable, jitter_slots=self.switch_jitter_slots,
        )

    def mean_rates(self) -> dict[TrafficClass, float]:
        return analytic_mean_rates(self.traffic, self.clock.slot_length_s)

    def run_id(self) -> str:
        base = f"{self.scenario}__{self.method_label}__seed{self.seed}"
        return f"{base}__{self.tag}" if self.tag else base


def _mean_otp_demand(rates: dict[TrafficClass, float],
                     specs: dict[TrafficClass, ClassSpec]) -> float:
    return sum(specs[c].k_otp * rates[c] for c in CLASS_ORDER)


def _theta_otp_demand(rates: dict[TrafficClass, float],
                      specs: dict[TrafficClass, ClassSpec]) -> float:
    return sum(specs[c].k_otp * specs[c].theta * rates[c] for c in CLASS_ORDER)


def build_config(scenario: str = "normal", method: str = "ours", seed: int = 0,
                 terminals: int = 50, clusters: int = 5, horizon_hours: float = 1.0,
                 measurable: bool = False, slot_length_s: float = 0.1,
                 headroom: float = 1.4,
                 params: SchedulerParams | None = None,
                 class_overrides: dict[str, dict[str, Any]] | None = None,
                 prot_events_per_hour: dict[str, float] | None = None,
                 plant: PlantModel | None = None,
                 reference: ReferenceSignal | None = None,
                 unbounded_keys: bool = False,
                 k0: int | None = None,
                 explicit_schedule: RegimeSchedule | None = None,
                 traffic: TrafficConfig | None = None,
                 out_dir: str | None = None,
                 tag: str = "") -> RunConfig:
    """Assemble a fully resolved RunConfig from scenario-level knobs.

    Sizing rules: the normal key rate carries the given headroom over the
    quota-weighted OTP demand, degraded halves it, outage is near zero.
    Hysteresis thresholds default to h_up = 2 x mean OTP demand x 50 slots
    with h_down = h_up/2 and h_drop = h_up/4. Static quota floors are the
    theta-scaled per-class mean arrival rates.
    """
    if method == "ideal":
        unbounded_keys = True
    horizon_slots = round(horizon_hours * 3600.0 / slot_length_s)
    clock = ClockConfig(slot_length_s=slot_length_s, horizon_slots=horizon_slots)
    if traffic is None:
        traffic = default_traffic_config(terminals=terminals, clusters=clusters,
                                         prot_events_per_hour=prot_events_per_hour)

    scale = terminals / 50.0
    specs: dict[TrafficClass, ClassSpec] = {}
    for cls, row in _CLASS_TABLE.items():
        row = dict(row)
        if class_overrides and cls.label in class_overrides:
            row.update(class_overrides[cls.label])
        q_max = row["q_max"]
        specs[cls] = ClassSpec(
            cls=cls,
            d_max_s=row["d_max_s"],
            k_otp=row["k_otp"],
            k_aes=row["k_aes"],
            theta=row["theta"],
            lambda_w=row["lambda_w"],
            mu_w=row["mu_w"],
            w=row["w"],
            bucket_cap=row["bucket_cap"] * scale,
            priority_rank=row["rank"],
            q_max=None if q_max is None else round(q_max * scale),
            slot_length_s=slot_length_s,
        )

    rates = analytic_mean_rates(traffic, slot_length_s)
    regime_models = default_regime_models(_theta_otp_demand(rates, specs),
                                          headroom=headroom)

    p = params or SchedulerParams()
    if p.h_up == 0:
        h_up = max(1000, round(2.0 * _mean_otp_demand(rates, specs) * 50))
        p = replace(p, h_up=h_up, h_down=h_up // 2, h_drop=h_up // 4)
    if p.h_down >= p.h_up or p.h_drop > p.h_down:
        raise ConfigError("need h_drop <= h_down < h_up")
    if scale != 1.0:
        p = replace(p, r_min=round(p.r_min * scale), r_max=round(p.r_max * scale))

    # Static quota floors: the long-term share theta_c of the mean demand.
    # The static baseline also withholds a constant critical key floor worth
    # 50 slots of quota-weighted critical demand from non-critical service.
    static_rates = {c: specs[c].theta * rates[c] for c in CLASS_ORDER}
    crit_floor = round(50 * sum(
        specs[c].k_otp * specs[c].theta * rates[c]
        for c in CLASS_ORDER if specs[c].critical
    ))

    return RunConfig(
        scenario=scenario,
        method_label=method,
        seed=seed,
        clock=clock,
        traffic=traffic,
        regime_models=regime_models,
        class_specs=specs,
        params=p,
        plant=plant or PlantModel(),
        reference=reference or ReferenceSignal(slot_length_s=slot_length_s),
        measurable=measurable,
        unbounded_keys=unbounded_keys,
        k0=round((460_000 if k0 is None else k0) * (scale if k0 is None else 1.0)),
        static_rates=static_rates,
        static_crit_floor=crit_floor,
        explicit_schedule=explicit_schedule,
        out_dir=out_dir,
        tag=tag,
    )


def config_to_dict(cfg: RunConfig) -> dict[str, Any]:
    """Resolved-config snapshot for provenance and YAML round-trips."""
    return {
        "scenario": cfg.scenario,
        "method": cfg.method_label,
        "seed": cfg.seed,
        "terminals": cfg.traffic.terminals,
        "clusters": cfg.traffic.clusters,
        "horizon_slots": cfg.clock.horizon_slots,
        "slot_length_s": cfg.clock.slot_length_s,
        "measurable": cfg.measurable,
        "unbounded_keys": cfg.unbounded_keys,
        "k0": cfg.k0,
        "params": {
            "alpha": cfg.params.alpha, "rho": cfg.params.rho, "beta": cfg.params.beta,
            "r_min": cfg.params.r_min, "r_max": cfg.params.r_max,
            "h_up": cfg.params.h_up, "h_down": cfg.params.h_down,
            "h_drop": cfg.params.h_drop, "m_max": cfg.params.m_max,
            "gamma_up": cfg.params.gamma_up, "gamma_down": cfg.params.gamma_down,
            "window_slots": cfg.params.window_slots, "v": cfg.params.v,
            "ttl_preempt_slots": cfg.params.ttl_preempt_slots,
            "measurable_beta_factor": cfg.params.measurable_beta_factor,
            "measurable_lead_slots": cfg.params.measurable_lead_slots,
        },
        "regimes": {
            label: {
                "base_rate": m.base_rate, "noise_halfwidth": m.noise_halfwidth,
                "drift_amplitude": m.drift_amplitude,
                "drift_period_slots": m.drift_period_slots,
            }
            for label, m in sorted(cfg.regime_models.items())
        },
        "classes": {
            c.label: {
                "d_max_s": s.d_max_s, "tau": s.tau, "k_otp": s.k_otp, "k_aes": s.k_aes,
                "theta": s.theta, "w": s.w, "lambda_w": s.lambda_w, "mu_w": s.mu_w,
                "bucket_cap": s.bucket_cap, "priority_rank": s.priority_rank,
                "q_max": s.q_max,
            }
            for c, s in ((c, cfg.class_specs[c]) for c in CLASS_ORDER)
        },
        "static_rates": {c.label: cfg.static_rates[c] for c in CLASS_ORDER},
        "static_crit_floor": cfg.static_crit_floor,
        "plant": {
            "gain": cfg.plant.gain, "ramp_kw_per_slot": cfg.plant.ramp_kw_per_slot,
            "p_min_kw": cfg.plant.p_min_kw, "p_max_kw": cfg.plant.p_max_kw,
            "latency_slots": cfg.plant.latency_slots, "epsilon_kw": cfg.plant.epsilon_kw,
        },
        "reference": {
            "step_levels_kw": list(cfg.reference.step_levels_kw),
            "step_interval_s": cfg.reference.step_interval_s,
            "sine_amplitude_kw": cfg.reference.sine_amplitude_kw,
            "sine_period_s": cfg.reference.sine_period_s,
        },
    }


_TOP_LEVEL_KEYS = {
    "scenario", "method", "seed", "terminals", "clusters", "horizon_hours",
    "measurable", "unbounded_keys", "k0", "headroom", "params", "classes",
    "prot_events_per_hour", "plant", "reference", "out_dir", "slot_length_s",
}


def config_from_dict(data: dict[str, Any]) -> RunConfig:
    """Build a RunConfig from a (possibly partial) YAML mapping."""
    unknown = set(data) - _TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    params = None
    if "params" in data:
        try:
            params = SchedulerParams(**data["params"])
        except TypeError as exc:
            raise ConfigError(f"bad scheduler params: {exc}") from None
    plant = None
    if "plant" in data:
        try:
            plant = PlantModel(**data["plant"])
        except TypeError as exc:
            raise ConfigError(f"bad plant model: {exc}") from None
    reference = None
    if "reference" in data:
        ref = dict(data["reference"])
        if "step_levels_kw" in ref:
            ref["step_levels_kw"] = tuple(ref["step_levels_kw"])
        try:
            reference = ReferenceSignal(slot_length_s=data.get("slot_length_s", 0.1), **ref)
        except TypeError as exc:
            raise ConfigError(f"bad reference signal: {exc}") from None
    return build_config(
        scenario=data.get("scenario", "normal"),
        method=data.get("method", "ours"),
        seed=int(data.get("seed", 0)),
        terminals=int(data.get("terminals", 50)),
        clusters=int(data.get("clusters", 5)),
        horizon_hours=float(data.get("horizon_hours", 1.0)),
        measurable=bool(data.get("measurable", False)),
        slot_length_s=float(data.get("slot_length_s", 0.1)),
        headroom=float(data.get("headroom", 1.4)),
        params=params,
        class_overrides=data.get("classes"),
        prot_events_per_hour=data.get("prot_events_per_hour"),
        plant=plant,
        reference=reference,
        unbounded_keys=bool(data.get("unbounded_keys", False)),
        k0=data.get("k0"),
        out_dir=data.get("out_dir"),
    )


def load_config(path: str | Path) -> RunConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a YAML mapping")
    return config_from_dict(data)


@dataclass(frozen=True)
class ScanSpec:
    """Parameter grid scan over the full method."""

    scenario: str = "degraded"
    rho_grid: tuple[float, ...] = (0.5, 0.65, 0.75, 0.85, 0.95)
    beta_grid: tuple[float, ...] = (0.0, 0.05, 0.10, 0.15, 0.20)
    bucket_multipliers: tuple[float, ...] = ()
    band_multipliers: tuple[float, ...] = ()
    n_terminals: tuple[int, ...] = ()
    seeds: tuple[int, ...] = tuple(range(10))
    horizon_hours: float = 1.0
    max_runs: int = 2000

    def __post_init__(self) -> None:
        if not self.rho_grid or not self.beta_grid or not self.seeds:
            raise ConfigError("scan grids and seeds must be non-empty")

    def grid_size(self) -> int:
        n = len(self.rho_grid) * len(self.beta_grid) * len(self.seeds)
        if n > self.max_runs:
            raise ConfigError(f"scan of {n} runs exceeds cap {self.max_runs}")
        return n


def scan_from_dict(data: dict[str, Any]) -> ScanSpec:
    known = {"scenario", "rho_grid", "beta_grid", "bucket_multipliers",
             "band_multipliers", "n_terminals", "seeds", "horizon_hours", "max_runs"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown scan keys: {sorted(unknown)}")
    kwargs: dict[str, Any] = {}
    for key in known:
        if key in data:
            value = data[key]
            if isinstance(value, list):
                value = tuple(value)
            kwargs[key] = value
    return ScanSpec(**kwargs)


def load_scan(path: str | Path) -> ScanSpec:
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: scan spec must be a YAML mapping")
    return scan_from_dict(data)


def dump_config_yaml(cfg: RunConfig, path: str | Path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(config_to_dict(cfg), fh, sort_keys=True)
