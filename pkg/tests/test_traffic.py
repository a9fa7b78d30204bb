import numpy as np
import pytest

from keysched.core import CLASS_ORDER, ConfigError, TrafficClass
from keysched.traffic import (
    Batch,
    BurstyBernoulli,
    Mmpp,
    Periodic,
    PoissonArrivals,
    StaggeredPeriodic,
    TrafficConfig,
    analytic_mean_rates,
    default_traffic_config,
    empirical_mean_rate,
    generate_trace,
)


def config_with(cls: TrafficClass, model, terminals=50, clusters=5) -> TrafficConfig:
    models = {c: PoissonArrivals(0.0) for c in CLASS_ORDER}
    models[cls] = model
    return TrafficConfig(terminals=terminals, clusters=clusters, models=models)


class TestPeriodic:
    def test_aligned_no_jitter(self):
        cfg = config_with(TrafficClass.DISP, Periodic(period_s=1.0, jitter_halfwidth_s=0.0))
        trace = generate_trace(cfg, 100, master_seed=1)
        counts = trace.counts[TrafficClass.DISP]
        for slot in range(100):
            assert counts[slot] == (50 if slot % 10 == 0 else 0)

    def test_jitter_preserves_volume(self):
        cfg = config_with(TrafficClass.DISP, Periodic(period_s=1.0, jitter_halfwidth_s=0.2))
        trace = generate_trace(cfg, 36_000, master_seed=3)
        # 50 terminals x 3600 issues, minus edge clipping at the boundaries
        total = trace.total(TrafficClass.DISP)
        assert abs(total - 180_000) <= 150

    def test_mean_rate_example(self):
        cfg = config_with(TrafficClass.DISP, Periodic(period_s=1.0, jitter_halfwidth_s=0.2))
        trace = generate_trace(cfg, 36_000, master_seed=3)
        assert empirical_mean_rate(trace, TrafficClass.DISP) == pytest.approx(5.0, abs=0.05)


class TestZeroRate:
    def test_zero_rate_class_is_silent(self):
        cfg = config_with(TrafficClass.MKT, PoissonArrivals(0.0))
        trace = generate_trace(cfg, 1000, master_seed=2)
        assert trace.total(TrafficClass.MKT) == 0


class TestPoisson:
    def test_law_of_large_numbers(self):
        cfg = config_with(TrafficClass.MEAS, PoissonArrivals(2.0))
        trace = generate_trace(cfg, 10_000, master_seed=7)
        mean = empirical_mean_rate(trace, TrafficClass.MEAS)
        assert 1.9 <= mean <= 2.1


class TestStaggered:
    def test_cluster_ladder_rate(self):
        cfg = config_with(TrafficClass.MEAS, StaggeredPeriodic(1.0, 5.0))
        rates = analytic_mean_rates(cfg)
        # clusters of 10 terminals at periods 10..50 slots
        assert rates[TrafficClass.MEAS] == pytest.approx(1 + 0.5 + 1 / 3 + 0.25 + 0.2)
        trace = generate_trace(cfg, 36_000, master_seed=5)
        assert empirical_mean_rate(trace, TrafficClass.MEAS) == pytest.approx(
            rates[TrafficClass.MEAS], rel=0.01)


class TestBatch:
    def test_cadence_and_phase(self):
        cfg = config_with(TrafficClass.LOG, Batch(interval_s=60.0, batch_mean=40.0,
                                                  phase_s=10.0))
        trace = generate_trace(cfg, 36_000, master_seed=11)
        counts = trace.counts[TrafficClass.LOG]
        nonzero = np.nonzero(counts)[0]
        assert all(slot % 600 == 100 for slot in nonzero)
        assert empirical_mean_rate(trace, TrafficClass.LOG) == pytest.approx(
            40.0 / 600.0, rel=0.15)


class TestBursty:
    def test_emergency_flags_cover_bursts(self):
        model = BurstyBernoulli(events_per_hour={"normal": 60.0})
        cfg = config_with(TrafficClass.PROT, model)
        trace = generate_trace(cfg, 36_000, master_seed=13)
        assert trace.total(TrafficClass.PROT) > 0
        assert np.array_equal(trace.counts[TrafficClass.PROT],
                              trace.emergency[TrafficClass.PROT])

    def test_quiet_between_events(self):
        model = BurstyBernoulli(events_per_hour={"normal": 0.0})
        cfg = config_with(TrafficClass.PROT, model)
        trace = generate_trace(cfg, 10_000, master_seed=13)
        assert trace.total(TrafficClass.PROT) == 0

    def test_regime_modulation(self):
        model = BurstyBernoulli(events_per_hour={"normal": 0.0, "outage": 120.0})
        cfg = config_with(TrafficClass.PROT, model)
        labels = ["normal"] * 18_000 + ["outage"] * 18_000
        trace = generate_trace(cfg, 36_000, master_seed=17, regime_labels=labels)
        assert trace.counts[TrafficClass.PROT][:18_000].sum() == 0
        assert trace.counts[TrafficClass.PROT][18_000:].sum() > 0


class TestMmpp:
    def test_stationary_mean(self):
        model = Mmpp(rates_per_slot=(0.5, 4.0),
                     transition=((0.99, 0.01), (0.02, 0.98)))
        cfg = config_with(TrafficClass.LOG, model)
        rates = analytic_mean_rates(cfg)
        trace = generate_trace(cfg, 200_000, master_seed=19)
        assert empirical_mean_rate(trace, TrafficClass.LOG) == pytest.approx(
            rates[TrafficClass.LOG], rel=0.05)

    def test_rows_must_be_stochastic(self):
        with pytest.raises(ConfigError):
            Mmpp(rates_per_slot=(1.0, 2.0), transition=((0.9, 0.2), (0.5, 0.5)))


class TestReplayDeterminism:
    def test_identical_seed_identical_trace(self):
        cfg = default_traffic_config()
        t1 = generate_trace(cfg, 5000, master_seed=42)
        t2 = generate_trace(cfg, 5000, master_seed=42)
        for c in CLASS_ORDER:
            assert np.array_equal(t1.counts[c], t2.counts[c])
            assert np.array_equal(t1.emergency[c], t2.emergency[c])

    def test_seed_changes_trace(self):
        cfg = default_traffic_config()
        t1 = generate_trace(cfg, 5000, master_seed=42)
        t2 = generate_trace(cfg, 5000, master_seed=43)
        assert any(not np.array_equal(t1.counts[c], t2.counts[c]) for c in CLASS_ORDER)


class TestEmpiricalMeanRate:
    def test_constant_sequence(self):
        assert empirical_mean_rate(np.full(500, 3)) == 3.0

    def test_alternating(self):
        assert empirical_mean_rate(np.tile([0, 2], 100)) == 1.0

    def test_empty_rejected(self):
        with pytest.raises(ConfigError):
            empirical_mean_rate(np.array([]))


class TestAnalyticMeans:
    def test_defaults_match_empirical(self):
        cfg = default_traffic_config()
        rates = analytic_mean_rates(cfg)
        trace = generate_trace(cfg, 36_000, master_seed=23,
                               regime_labels=["normal"] * 36_000)
        for c in (TrafficClass.DISP, TrafficClass.MEAS, TrafficClass.MKT,
                  TrafficClass.LOG):
            assert empirical_mean_rate(trace, c) == pytest.approx(rates[c], rel=0.2)

    def test_csv_export(self, tmp_path):
        cfg = default_traffic_config()
        trace = generate_trace(cfg, 600, master_seed=1)
        path = tmp_path / "arrivals.csv"
        trace.to_csv(path)
        header = path.read_text().splitlines()[0]
        assert header == "slot,class,count,emergency_count"
