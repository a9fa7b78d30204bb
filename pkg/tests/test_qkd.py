import numpy as np
import pytest

from keysched.core import ConfigError
from keysched.qkd import (
    RegimeModel,
    RegimeSchedule,
    default_regime_models,
    foreknowledge,
    generate_key_trace,
    generate_keys,
    scenario_schedule,
)


def flat_models(normal=1000, degraded=500, outage=0):
    return {
        "normal": RegimeModel("normal", normal),
        "degraded": RegimeModel("degraded", degraded),
        "outage": RegimeModel("outage", outage),
    }


class TestRegimeModel:
    def test_outage_zero_base(self):
        model = RegimeModel("outage", 0, noise_halfwidth=0.5)
        assert all(model.rate_at(t, u) == 0 for t, u in [(0, 0.1), (5, 0.9)])

    def test_degraded_exactly_half(self):
        sched = RegimeSchedule(entries=((0, "normal"), (10, "degraded")))
        models = flat_models(normal=1000, degraded=500)
        g_normal = generate_keys(sched, models, 5, 0.5)
        g_degraded = generate_keys(sched, models, 15, 0.5)
        assert g_degraded * 2 == g_normal == 1000

    def test_monte_carlo_mean(self):
        sched = RegimeSchedule(entries=((0, "normal"),))
        models = {"normal": RegimeModel("normal", 500, noise_halfwidth=0.1)}
        trace = generate_key_trace(sched, models, 10_000, master_seed=3)
        assert 495 <= trace.bits.mean() <= 505

    def test_never_negative(self):
        model = RegimeModel("degraded", 100, noise_halfwidth=0.9,
                            drift_amplitude=0.9, drift_period_slots=7)
        assert all(model.rate_at(t, u) >= 0
                   for t in range(50) for u in (0.0, 0.5, 0.999))


class TestSchedule:
    def test_must_start_at_zero(self):
        with pytest.raises(ConfigError):
            RegimeSchedule(entries=((5, "normal"),))

    def test_strictly_increasing(self):
        with pytest.raises(ConfigError):
            RegimeSchedule(entries=((0, "normal"), (10, "outage"), (10, "normal")))

    def test_labels_match_schedule(self):
        sched = RegimeSchedule(entries=((0, "normal"), (4, "outage")))
        assert sched.labels(6) == ["normal"] * 4 + ["outage"] * 2
        trace = generate_key_trace(sched, flat_models(), 6, master_seed=0)
        assert trace.labels == sched.labels(6)

    def test_segments_clip(self):
        sched = RegimeSchedule(entries=((0, "normal"), (4, "outage"), (100, "normal")))
        assert sched.segments(10) == [(0, 4, "normal"), (4, 10, "outage")]


class TestForeknowledge:
    def test_lookup(self):
        sched = RegimeSchedule(entries=((0, "normal"), (6000, "degraded"),
                                        (18_000, "normal")), measurable=True)
        assert foreknowledge(sched, 100) == 6000
        assert foreknowledge(sched, 6000) == 18_000

    def test_non_measurable_returns_nothing(self):
        sched = RegimeSchedule(entries=((0, "normal"), (6000, "degraded")))
        assert foreknowledge(sched, 100) is None

    def test_exhausted_schedule(self):
        sched = RegimeSchedule(entries=((0, "normal"), (6000, "degraded")),
                               measurable=True)
        assert foreknowledge(sched, 6000) is None


class TestTraceDeterminism:
    def test_same_seed_same_trace(self):
        sched = scenario_schedule("outage", 10_000, master_seed=9)
        models = default_regime_models(2000.0)
        a = generate_key_trace(sched, models, 10_000, master_seed=9)
        b = generate_key_trace(sched, models, 10_000, master_seed=9)
        assert np.array_equal(a.bits, b.bits)

    def test_csv_export(self, tmp_path):
        sched = RegimeSchedule(entries=((0, "normal"),))
        trace = generate_key_trace(sched, flat_models(), 10, master_seed=1)
        path = tmp_path / "keys.csv"
        trace.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "slot,G,regime"
        assert len(lines) == 11


class TestSizing:
    def test_headroom_anchor(self):
        models = default_regime_models(theta_key_demand=2000.0, headroom=1.4)
        assert models["normal"].base_rate == 2800
        assert models["degraded"].base_rate == 1400
        assert models["outage"].base_rate < 0.02 * models["normal"].base_rate

    def test_scenario_schedules_jitter_preserves_structure(self):
        for seed in range(5):
            sched = scenario_schedule("degraded", 36_000, master_seed=seed)
            labels = [lab for _, lab in sched.entries]
            assert labels == ["normal", "degraded", "outage", "normal"]
            starts = [s for s, _ in sched.entries]
            assert starts[0] == 0
            assert all(b > a for a, b in zip(starts, starts[1:]))
            # outage dip stays short (30-120 s of slots)
            assert 900 <= starts[3] - starts[2] <= 1500
