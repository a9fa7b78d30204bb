"""Per-class arrival generation: seeded, replayable, and shared across methods.

A full arrival trace is materialized up front from the master seed, so every
scheduling method compared on a seed consumes bit-identical arrivals. The
engine's down-sampling filter acts at admission and never alters this trace.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import CLASS_ORDER, ConfigError, TrafficClass

# Named substream offsets from the master seed; keeps ablations and method
# swaps from perturbing unrelated randomness.
STREAM_TRAFFIC_BASE = 100
STREAM_QKD_NOISE = 200
STREAM_QKD_SWITCH = 201


def substream(master_seed: int, stream_id: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([master_seed, stream_id])))


@dataclass(frozen=True)
class Periodic:
    """One message per terminal per period, with triangular jitter (Disp)."""

    period_s: float = 1.0
    jitter_halfwidth_s: float = 0.2

    def __post_init__(self) -> None:
        if self.period_s <= 0:
            raise ConfigError("Periodic.period_s must be > 0")
        if self.jitter_halfwidth_s < 0:
            raise ConfigError("Periodic.jitter_halfwidth_s must be >= 0")


@dataclass(frozen=True)
class StaggeredPeriodic:
    """Per-cluster sampling periods in [period_min_s, period_max_s] (Meas).

    Cluster j uses the j-th period of an evenly spaced ladder; terminal i in
    the cluster gets phase offset (i mod period_slots).
    """

    period_min_s: float = 1.0
    period_max_s: float = 5.0

    def __post_init__(self) -> None:
        if not 0 < self.period_min_s <= self.period_max_s:
            raise ConfigError("StaggeredPeriodic needs 0 < period_min_s <= period_max_s")


@dataclass(frozen=True)
class Batch:
    """Minute-scale batches with Poisson-distributed size (Mkt, Log)."""

    interval_s: float = 60.0
    batch_mean: float = 20.0
    phase_s: float = 0.0

    def __post_init__(self) -> None:
        if self.interval_s <= 0:
            raise ConfigError("Batch.interval_s must be > 0")
        if self.batch_mean < 0:
            raise ConfigError("Batch.batch_mean must be >= 0")


@dataclass(frozen=True)
class BurstyBernoulli:
    """Event-driven bursts (Prot): Bernoulli event starts, geometric length,
    binomial per-slot arrivals within a burst. All burst arrivals carry the
    emergency flag.

    Event rates are per hour, keyed by regime label so that fault storms can
    accompany degraded key generation.
    """

    events_per_hour: dict[str, float] = field(
        default_factory=lambda: {"normal": 2.0, "degraded": 10.0, "outage": 30.0}
    )
    mean_burst_slots: float = 5.0
    per_slot_prob: float = 0.2

    def __post_init__(self) -> None:
        if any(v < 0 for v in self.events_per_hour.values()):
            raise ConfigError("BurstyBernoulli event rates must be >= 0")
        if self.mean_burst_slots < 1:
            raise ConfigError("BurstyBernoulli.mean_burst_slots must be >= 1")
        if not 0 <= self.per_slot_prob <= 1:
            raise ConfigError("BurstyBernoulli.per_slot_prob must be in [0, 1]")


@dataclass(frozen=True)
class PoissonArrivals:
    """Generic memoryless alternative."""

    rate_per_slot: float = 1.0

    def __post_init__(self) -> None:
        if self.rate_per_slot < 0:
            raise ConfigError("PoissonArrivals.rate_per_slot must be >= 0")


@dataclass(frozen=True)
class Mmpp:
    """Markov-modulated Poisson process."""

    rates_per_slot: tuple[float, ...] = (0.5, 4.0)
    transition: tuple[tuple[float, ...], ...] = ((0.995, 0.005), (0.02, 0.98))

    def __post_init__(self) -> None:
        n = len(self.rates_per_slot)
        if n == 0 or any(r < 0 for r in self.rates_per_slot):
            raise ConfigError("Mmpp rates must be non-empty and >= 0")
        if len(self.transition) != n or any(len(row) != n for row in self.transition):
            raise ConfigError("Mmpp transition matrix must be square")
        for row in self.transition:
            if abs(sum(row) - 1.0) > 1e-9 or any(p < 0 for p in row):
                raise ConfigError("Mmpp transition rows must be stochastic")


ArrivalModel = Periodic | StaggeredPeriodic | Batch | BurstyBernoulli | PoissonArrivals | Mmpp


@dataclass(frozen=True)
class TrafficConfig:
    terminals: int = 50
    clusters: int = 5
    models: dict[TrafficClass, ArrivalModel] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.terminals < 1:
            raise ConfigError("terminals must be >= 1")
        if self.clusters < 1:
            raise ConfigError("clusters must be >= 1")
        if set(self.models) != set(CLASS_ORDER):
            raise ConfigError("traffic models must cover all five classes")

    def terminals_per_cluster(self) -> list[int]:
        base, rem = divmod(self.terminals, self.clusters)
        return [base + (1 if j < rem else 0) for j in range(self.clusters)]


def default_traffic_config(terminals: int = 50, clusters: int = 5,
                           prot_events_per_hour: dict[str, float] | None = None) -> TrafficConfig:
    """Default VPP traffic mix; batch volumes scale with system size."""
    scale = terminals / 50.0
    models: dict[TrafficClass, ArrivalModel] = {
        TrafficClass.PROT: BurstyBernoulli(
            events_per_hour=prot_events_per_hour
            or {"normal": 2.0, "degraded": 10.0, "outage": 30.0}
        ),
        TrafficClass.DISP: Periodic(period_s=1.0, jitter_halfwidth_s=0.2),
        TrafficClass.MEAS: StaggeredPeriodic(period_min_s=1.0, period_max_s=5.0),
        TrafficClass.MKT: Batch(interval_s=60.0, batch_mean=20.0 * scale, phase_s=40.0),
        TrafficClass.LOG: Batch(interval_s=60.0, batch_mean=40.0 * scale, phase_s=10.0),
    }
    return TrafficConfig(terminals=terminals, clusters=clusters, models=models)


def _cluster_periods_slots(model: StaggeredPeriodic, clusters: int, slot_length_s: float) -> list[int]:
    if clusters == 1:
        ladder = [(model.period_min_s + model.period_max_s) / 2]
    else:
        step = (model.period_max_s - model.period_min_s) / (clusters - 1)
        ladder = [model.period_min_s + j * step for j in range(clusters)]
    return [max(1, round(p / slot_length_s)) for p in ladder]


def analytic_mean_rates(config: TrafficConfig, slot_length_s: float = 0.1,
                        regime_label: str = "normal") -> dict[TrafficClass, float]:
    """Exact per-slot arrival means implied by the configuration.

    Used for feasibility margins, threshold sizing, and static quota rates.
    """
    slots_per_hour = 3600.0 / slot_length_s
    rates: dict[TrafficClass, float] = {}
    for cls, model in config.models.items():
        if isinstance(model, Periodic):
            rates[cls] = config.terminals / max(1, round(model.period_s / slot_length_s))
        elif isinstance(model, StaggeredPeriodic):
            periods = _cluster_periods_slots(model, config.clusters, slot_length_s)
            sizes = config.terminals_per_cluster()
            rates[cls] = sum(n / p for n, p in zip(sizes, periods))
        elif isinstance(model, Batch):
            rates[cls] = model.batch_mean / max(1, round(model.interval_s / slot_length_s))
        elif isinstance(model, BurstyBernoulli):
            events = model.events_per_hour.get(regime_label, 0.0)
            per_cluster = config.terminals / config.clusters
            rates[cls] = (events / slots_per_hour) * model.mean_burst_slots \
                * per_cluster * model.per_slot_prob
        elif isinstance(model, PoissonArrivals):
            rates[cls] = model.rate_per_slot
        elif isinstance(model, Mmpp):
            p = np.array(model.transition)
            eigvals, eigvecs = np.linalg.eig(p.T)
            idx = int(np.argmin(np.abs(eigvals - 1.0)))
            pi = np.real(eigvecs[:, idx])
            pi = pi / pi.sum()
            rates[cls] = float(pi @ np.array(model.rates_per_slot))
        else:  # pragma: no cover
            raise ConfigError(f"unknown arrival model {model!r}")
    return rates


class ArrivalTrace:
    """Materialized arrival counts per (class, slot), plus emergency counts."""

    def __init__(self, counts: dict[TrafficClass, np.ndarray],
                 emergency: dict[TrafficClass, np.ndarray]) -> None:
        self.counts = counts
        self.emergency = emergency
        self.horizon = len(next(iter(counts.values()))) if counts else 0

    def arrivals_for_slot(self, slot: int) -> list[tuple[TrafficClass, int, int]]:
        if not 0 <= slot < self.horizon:
            raise ConfigError(f"slot {slot} outside horizon {self.horizon}")
        return [
            (cls, int(self.counts[cls][slot]), int(self.emergency[cls][slot]))
            for cls in CLASS_ORDER
        ]

    def total(self, cls: TrafficClass) -> int:
        return int(self.counts[cls].sum())

    def to_csv(self, path: str | Path) -> None:
        """Write nonzero rows as (slot, class, count, emergency_count)."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["slot", "class", "count", "emergency_count"])
            for cls in CLASS_ORDER:
                counts = self.counts[cls]
                emg = self.emergency[cls]
                for slot in np.nonzero(counts)[0]:
                    writer.writerow([int(slot), cls.label, int(counts[slot]), int(emg[slot])])


def generate_trace(config: TrafficConfig, horizon: int, master_seed: int,
                   slot_length_s: float = 0.1,
                   regime_labels: list[str] | None = None) -> ArrivalTrace:
    """Build the full arrival trace for one run.

    regime_labels (one per slot) modulate the bursty protection model; all
    other models are regime-independent.
    """
    counts: dict[TrafficClass, np.ndarray] = {}
    emergency: dict[TrafficClass, np.ndarray] = {}
    for cls in CLASS_ORDER:
        model = config.models[cls]
        rng = substream(master_seed, STREAM_TRAFFIC_BASE + int(cls))
        c = np.zeros(horizon, dtype=np.int64)
        e = np.zeros(horizon, dtype=np.int64)
        if horizon == 0:
            counts[cls], emergency[cls] = c, e
            continue
        if isinstance(model, Periodic):
            _fill_periodic(c, model, config, rng, slot_length_s)
        elif isinstance(model, StaggeredPeriodic):
            _fill_staggered(c, model, config, slot_length_s)
        elif isinstance(model, Batch):
            _fill_batch(c, model, rng, slot_length_s)
        elif isinstance(model, BurstyBernoulli):
            _fill_bursty(c, model, config, rng, slot_length_s, regime_labels)
            e[:] = c  # every burst arrival is an emergency
        elif isinstance(model, PoissonArrivals):
            c[:] = rng.poisson(model.rate_per_slot, size=horizon)
        elif isinstance(model, Mmpp):
            _fill_mmpp(c, model, rng)
        else:  # pragma: no cover
            raise ConfigError(f"unknown arrival model {model!r}")
        counts[cls], emergency[cls] = c, e
    return ArrivalTrace(counts, emergency)


def _fill_periodic(c: np.ndarray, model: Periodic, config: TrafficConfig,
                   rng: np.random.Generator, slot_length_s: float) -> None:
    horizon = len(c)
    period = max(1, round(model.period_s / slot_length_s))
    n_issues = horizon // period + 2
    base = np.arange(n_issues) * period
    for _ in range(config.terminals):
        if model.jitter_halfwidth_s > 0:
            jit = rng.triangular(-model.jitter_halfwidth_s, 0.0, model.jitter_halfwidth_s,
                                 size=n_issues)
            slots = base + np.rint(jit / slot_length_s).astype(np.int64)
        else:
            slots = base
        slots = slots[(slots >= 0) & (slots < horizon)]
        np.add.at(c, slots, 1)


def _fill_staggered(c: np.ndarray, model: StaggeredPeriodic, config: TrafficConfig,
                    slot_length_s: float) -> None:
    horizon = len(c)
    periods = _cluster_periods_slots(model, config.clusters, slot_length_s)
    sizes = config.terminals_per_cluster()
    for period, n_terms in zip(periods, sizes):
        for i in range(n_terms):
            phase = i % period
            if phase < horizon:
                c[phase::period] += 1


def _fill_batch(c: np.ndarray, model: Batch, rng: np.random.Generator,
                slot_length_s: float) -> None:
    horizon = len(c)
    interval = max(1, round(model.interval_s / slot_length_s))
    phase = round(model.phase_s / slot_length_s) % interval
    slots = np.arange(phase, horizon, interval)
    if len(slots) == 0:
        return
    c[slots] = rng.poisson(model.batch_mean, size=len(slots))


def _fill_bursty(c: np.ndarray, model: BurstyBernoulli, config: TrafficConfig,
                 rng: np.random.Generator, slot_length_s: float,
                 regime_labels: list[str] | None) -> None:
    horizon = len(c)
    slots_per_hour = 3600.0 / slot_length_s
    per_cluster = max(1, round(config.terminals / config.clusters))
    cont_p = 1.0 - 1.0 / model.mean_burst_slots
    # Draw everything up front so the trace is a pure function of the stream.
    u_start = rng.random(horizon)
    u_cont = rng.random(horizon)
    sizes = rng.binomial(per_cluster, model.per_slot_prob, size=horizon)
    in_burst = False
    for t in range(horizon):
        if in_burst:
            c[t] = sizes[t]
            in_burst = u_cont[t] < cont_p
        else:
            label = regime_labels[t] if regime_labels is not None else "normal"
            p_start = model.events_per_hour.get(label, 0.0) / slots_per_hour
            if u_start[t] < p_start:
                in_burst = True
                c[t] = sizes[t]


def _fill_mmpp(c: np.ndarray, model: Mmpp, rng: np.random.Generator) -> None:
    horizon = len(c)
    p = np.array(model.transition)
    rates = np.array(model.rates_per_slot)
    state = 0
    u = rng.random(horizon)
    cum = np.cumsum(p, axis=1)
    for t in range(horizon):
        c[t] = rng.poisson(rates[state])
        state = int(np.searchsorted(cum[state], u[t]))


def empirical_mean_rate(trace: ArrivalTrace | np.ndarray, cls: TrafficClass | None = None) -> float:
    """Arithmetic mean arrivals per slot over a recorded trace."""
    if isinstance(trace, ArrivalTrace):
        if cls is None:
            raise ConfigError("class required when passing a full trace")
        values = trace.counts[cls]
    else:
        values = np.asarray(trace)
    if values.size == 0:
        raise ConfigError("cannot average an empty trace")
    return float(values.mean())
