"""Synthetic key-generation process under normal/degraded/outage regimes.

Key supply is the aggregate effect of the QKD layer: a per-slot bit rate with
bounded noise, slow drift, and scheduled regime switches. Physical protocol
details (QBER, sifting, privacy amplification) are out of scope.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from math import pi, sin
from pathlib import Path

import numpy as np

from .core import ConfigError
from .traffic import STREAM_QKD_NOISE, STREAM_QKD_SWITCH, substream

REGIME_NORMAL = "normal"
REGIME_DEGRADED = "degraded"
REGIME_OUTAGE = "outage"
REGIME_LABELS = (REGIME_NORMAL, REGIME_DEGRADED, REGIME_OUTAGE)


@dataclass(frozen=True)
class RegimeModel:
    """Per-regime rate model: base bits/slot with noise and slow drift."""

    label: str
    base_rate: float
    noise_halfwidth: float = 0.0
    drift_amplitude: float = 0.0
    drift_period_slots: int = 3000

    def __post_init__(self) -> None:
        if self.base_rate < 0:
            raise ConfigError("base_rate must be >= 0")
        if not 0 <= self.noise_halfwidth < 1:
            raise ConfigError("noise_halfwidth must be in [0, 1)")
        if not 0 <= self.drift_amplitude < 1:
            raise ConfigError("drift_amplitude must be in [0, 1)")
        if self.drift_period_slots < 1:
            raise ConfigError("drift_period_slots must be >= 1")

    def rate_at(self, slot: int, u: float) -> int:
        """Realized bits for one slot; u is a uniform draw in [0, 1)."""
        drift = self.drift_amplitude * sin(2.0 * pi * slot / self.drift_period_slots)
        noise = self.noise_halfwidth * (2.0 * u - 1.0)
        return max(0, round(self.base_rate * (1.0 + drift) * (1.0 + noise)))


@dataclass(frozen=True)
class RegimeSchedule:
    """Ordered (start_slot, regime label) entries; first entry at slot 0."""

    entries: tuple[tuple[int, str], ...]
    measurable: bool = False

    def __post_init__(self) -> None:
        if not self.entries:
            raise ConfigError("schedule needs at least one entry")
        if self.entries[0][0] != 0:
            raise ConfigError("schedule must start at slot 0")
        starts = [s for s, _ in self.entries]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ConfigError("schedule start slots must be strictly increasing")
        for _, label in self.entries:
            if label not in REGIME_LABELS:
                raise ConfigError(f"unknown regime label {label!r}")

    @property
    def switch_slots(self) -> tuple[int, ...]:
        return tuple(s for s, _ in self.entries[1:])

    def label_at(self, slot: int) -> str:
        idx = bisect_right([s for s, _ in self.entries], slot) - 1
        return self.entries[idx][1]

    def labels(self, horizon: int) -> list[str]:
        out: list[str] = []
        for i, (start, label) in enumerate(self.entries):
            end = self.entries[i + 1][0] if i + 1 < len(self.entries) else horizon
            if start >= horizon:
                break
            out.extend([label] * (min(end, horizon) - start))
        return out

    def segments(self, horizon: int) -> list[tuple[int, int, str]]:
        """(start, end_exclusive, label) clipped to the horizon."""
        segs = []
        for i, (start, label) in enumerate(self.entries):
            end = self.entries[i + 1][0] if i + 1 < len(self.entries) else horizon
            if start >= horizon:
                break
            segs.append((start, min(end, horizon), label))
        return segs


def foreknowledge(schedule: RegimeSchedule, slot: int) -> int | None:
    """Next regime-switch slot, revealed only under measurable foreknowledge."""
    if not schedule.measurable:
        return None
    for start in schedule.switch_slots:
        if start > slot:
            return start
    return None


def generate_keys(schedule: RegimeSchedule, models: dict[str, RegimeModel],
                  slot: int, u: float) -> int:
    """Realized key bits for one slot given its uniform noise draw."""
    return models[schedule.label_at(slot)].rate_at(slot, u)


class KeyTrace:
    """Materialized per-slot key production and regime labels for one run."""

    def __init__(self, bits: np.ndarray, labels: list[str], schedule: RegimeSchedule) -> None:
        self.bits = bits
        self.labels = labels
        self.schedule = schedule

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("slot,G,regime\n")
            for slot, (g, label) in enumerate(zip(self.bits, self.labels)):
                fh.write(f"{slot},{int(g)},{label}\n")


def generate_key_trace(schedule: RegimeSchedule, models: dict[str, RegimeModel],
                       horizon: int, master_seed: int) -> KeyTrace:
    rng = substream(master_seed, STREAM_QKD_NOISE)
    u = rng.random(horizon)
    labels = schedule.labels(horizon)
    bits = np.zeros(horizon, dtype=np.int64)
    for start, end, label in schedule.segments(horizon):
        model = models[label]
        if model.base_rate == 0:
            continue
        slots = np.arange(start, end)
        drift = model.drift_amplitude * np.sin(2.0 * pi * slots / model.drift_period_slots)
        noise = model.noise_halfwidth * (2.0 * u[start:end] - 1.0)
        vals = np.rint(model.base_rate * (1.0 + drift) * (1.0 + noise))
        bits[start:end] = np.maximum(0, vals).astype(np.int64)
    return KeyTrace(bits, labels, schedule)


def default_regime_models(theta_key_demand: float, headroom: float = 1.4,
                          degraded_factor: float = 0.5,
                          outage_factor: float = 0.014) -> dict[str, RegimeModel]:
    """Feasibility-anchored sizing of the three regimes.

    Normal holds the average supply condition with the given headroom over
    the quota-weighted key demand; degraded halves the output; outage is a
    near-zero famine. Noise/drift defaults keep the mean at the base rate.
    """
    normal_base = round(headroom * theta_key_demand)
    return {
        REGIME_NORMAL: RegimeModel(REGIME_NORMAL, normal_base, noise_halfwidth=0.10),
        REGIME_DEGRADED: RegimeModel(
            REGIME_DEGRADED, round(normal_base * degraded_factor),
            noise_halfwidth=0.10, drift_amplitude=0.10, drift_period_slots=3000,
        ),
        REGIME_OUTAGE: RegimeModel(REGIME_OUTAGE, round(normal_base * outage_factor),
                                   noise_halfwidth=0.50),
    }


# Baseline schedules at the 1 h reference horizon; positions scale with the
# actual horizon and get per-seed jitter so switch times vary across seeds.
# Every evaluation scenario carries 2-3 switches; outage segments stay short
# (30-120 s key famines). The dominant regime gives the scenario its name.
_SCENARIO_SCHEDULES: dict[str, tuple[tuple[float, str], ...]] = {
    "normal": (
        (0.0, REGIME_NORMAL),
        (600 / 3600, REGIME_OUTAGE),
        (640 / 3600, REGIME_DEGRADED),
        (840 / 3600, REGIME_NORMAL),
    ),
    "degraded": (
        (0.0, REGIME_NORMAL),
        (10 / 60, REGIME_DEGRADED),
        (35 / 60, REGIME_OUTAGE),
        (37 / 60, REGIME_NORMAL),
    ),
    "outage": (
        (0.0, REGIME_NORMAL),
        (8 / 60, REGIME_DEGRADED),
        (18 / 60, REGIME_OUTAGE),
        (20 / 60, REGIME_NORMAL),
    ),
    "sustained_outage": ((0.0, REGIME_OUTAGE),),
}

SCENARIO_NAMES = tuple(_SCENARIO_SCHEDULES)


def scenario_schedule(scenario: str, horizon: int, master_seed: int,
                      measurable: bool = False, jitter_slots: int = 300) -> RegimeSchedule:
    """Build the seed-jittered switch schedule for a named scenario.

    A common per-seed offset shifts all switches together (segment lengths
    are nearly preserved); a small independent jitter is added per switch.
    """
    if scenario not in _SCENARIO_SCHEDULES:
        raise ConfigError(f"unknown scenario {scenario!r}; known: {sorted(_SCENARIO_SCHEDULES)}")
    fractions = _SCENARIO_SCHEDULES[scenario]
    rng = substream(master_seed, STREAM_QKD_SWITCH)
    common = int(rng.integers(-jitter_slots, jitter_slots + 1))
    per_switch = rng.integers(-jitter_slots // 6 - 1, jitter_slots // 6 + 2,
                              size=len(fractions))
    entries: list[tuple[int, str]] = []
    prev = -1
    for i, (frac, label) in enumerate(fractions):
        start = round(frac * horizon)
        if i > 0 and horizon > 4 * jitter_slots:
            start += common + int(per_switch[i])
        start = max(prev + 1, min(start, max(0, horizon - 1)))
        if i == 0:
            start = 0
        entries.append((start, label))
        prev = start
    return RegimeSchedule(entries=tuple(entries), measurable=measurable)
