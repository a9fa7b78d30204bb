"""Dispatch-execution power loop: delivered dispatch commands drive a
first-order plant with ramp and capacity limits.

The plant maps communication quality into tracking error: a dispatch message
carries the reference sample from its issue slot, so lost or stalled
messages leave the actuator holding a stale target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import ConfigError


@dataclass(frozen=True)
class PlantModel:
    gain: float = 0.3
    ramp_kw_per_slot: float = 50.0
    p_min_kw: float = 0.0
    p_max_kw: float = 1000.0
    latency_slots: int = 1
    epsilon_kw: float = 25.0

    def __post_init__(self) -> None:
        if not 0.0 < self.gain <= 1.0:
            raise ConfigError(f"gain must be in (0, 1], got {self.gain}")
        if self.ramp_kw_per_slot <= 0:
            raise ConfigError("ramp limit must be > 0")
        if self.p_min_kw >= self.p_max_kw:
            raise ConfigError("need p_min < p_max")
        if self.latency_slots < 0:
            raise ConfigError("latency must be >= 0")
        if self.epsilon_kw <= 0:
            raise ConfigError("epsilon must be > 0")


@dataclass(frozen=True)
class ReferenceSignal:
    """Piecewise-constant steps plus a slow sinusoid, clamped to plant bounds."""

    step_levels_kw: tuple[float, ...] = (500.0, 650.0, 420.0, 700.0, 380.0, 600.0)
    step_interval_s: float = 600.0
    sine_amplitude_kw: float = 120.0
    sine_period_s: float = 120.0
    slot_length_s: float = 0.1

    def __post_init__(self) -> None:
        if not self.step_levels_kw:
            raise ConfigError("need at least one reference level")
        if self.step_interval_s <= 0 or self.sine_period_s <= 0:
            raise ConfigError("reference periods must be > 0")

    def value_at(self, slot: int, model: PlantModel) -> float:
        t_s = slot * self.slot_length_s
        idx = int(t_s / self.step_interval_s) % len(self.step_levels_kw)
        level = self.step_levels_kw[idx]
        wave = self.sine_amplitude_kw * math.sin(2.0 * math.pi * t_s / self.sine_period_s)
        return min(model.p_max_kw, max(model.p_min_kw, level + wave))

    def trace(self, horizon: int, model: PlantModel) -> list[float]:
        return [self.value_at(t, model) for t in range(horizon)]


def step_plant(p: float, command: float | None, model: PlantModel) -> float:
    """One slot of the first-order lag with ramp and saturation.

    With no command ever delivered the plant holds its current output.
    """
    if command is None:
        return p
    delta = model.gain * (command - p)
    delta = max(-model.ramp_kw_per_slot, min(model.ramp_kw_per_slot, delta))
    return max(model.p_min_kw, min(model.p_max_kw, p + delta))


@dataclass(frozen=True)
class TrackingMetrics:
    rmse_kw: float
    nrmse: float
    violation_count: int
    violation_duration_s: float


def tracking_metrics(p_trace: list[float], ref_trace: list[float], epsilon_kw: float,
                     slot_length_s: float = 0.1) -> TrackingMetrics:
    """RMSE, range-normalized RMSE, and excursion statistics.

    A violation is a maximal contiguous run of slots with |P - Pref| > eps;
    duration totals excursion slots times the slot length.
    """
    if len(p_trace) != len(ref_trace):
        raise ConfigError("traces must have equal length")
    if not p_trace:
        raise ConfigError("traces must be non-empty")
    sq = 0.0
    count = 0
    in_violation = False
    violation_slots = 0
    for p, ref in zip(p_trace, ref_trace):
        err = p - ref
        sq += err * err
        if abs(err) > epsilon_kw:
            violation_slots += 1
            if not in_violation:
                count += 1
                in_violation = True
        else:
            in_violation = False
    rmse = math.sqrt(sq / len(p_trace))
    ref_range = max(ref_trace) - min(ref_trace)
    nrmse = rmse / ref_range if ref_range > 0 else 0.0
    return TrackingMetrics(
        rmse_kw=rmse,
        nrmse=nrmse,
        violation_count=count,
        violation_duration_s=violation_slots * slot_length_s,
    )
