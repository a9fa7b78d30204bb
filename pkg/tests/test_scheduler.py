import itertools

import pytest
from hypothesis import given, settings, strategies as st

from keysched.core import (
    CLASS_ORDER,
    ClassQueue,
    ClassSpec,
    ConfigError,
    KeyPool,
    SlotLedger,
    TrafficClass,
)
from keysched.scheduler import (
    MODE_AES,
    MODE_OTP,
    DegradationState,
    Method,
    MethodKind,
    TokenBucket,
    age_and_drop,
    arbitrate_slot,
    check_windowed_sufficiency,
    compute_token_rates,
    ewma_update,
    forecast_available_keys,
    lyapunov_value,
    preempt_critical,
    refill_bucket,
    resize_reserve,
    update_downsampling,
    update_mode,
    update_virtual_queue,
)

PROT, DISP, MEAS, MKT, LOG = CLASS_ORDER


def make_specs(**tau_overrides) -> dict[TrafficClass, ClassSpec]:
    rows = {
        PROT: (0.15, 256, 64, 0.9, 8.0, 10.0, 20.0, 0),
        DISP: (1.0, 512, 64, 0.8, 4.0, 10.0, 30.0, 1),
        MEAS: (5.0, 1600, 32, 0.7, 2.0, 2.0, 120.0, 2),
        MKT: (30.0, 600, 96, 0.5, 1.0, 2.0, 30.0, 3),
        LOG: (60.0, 400, 96, 0.5, 1.0, 2.0, 80.0, 4),
    }
    specs = {}
    for cls, (d_max, k_otp, k_aes, theta, w, mu, cap, rank) in rows.items():
        d = tau_overrides.get(cls.label, d_max)
        specs[cls] = ClassSpec(cls=cls, d_max_s=d, k_otp=k_otp, k_aes=k_aes,
                               theta=theta, lambda_w=1.0, mu_w=mu, w=w,
                               bucket_cap=cap, priority_rank=rank,
                               q_max=30 if cls is MKT else (60 if cls is LOG else None))
    return specs


def make_queues(contents: dict[TrafficClass, list] | None = None):
    queues = {c: ClassQueue(c) for c in CLASS_ORDER}
    for c, msgs in (contents or {}).items():
        for msg in msgs:
            queues[c].push(msg)
    return queues


def full_buckets(specs, level=None):
    return {c: TokenBucket(level=level if level is not None else specs[c].bucket_cap,
                           cap=specs[c].bucket_cap) for c in CLASS_ORDER}


class TestEwma:
    def test_hand_evaluation(self):
        assert ewma_update(80, 100, 0.6) == pytest.approx(92.0)

    def test_fixed_point(self):
        for alpha in (0.1, 0.6, 1.0):
            assert ewma_update(7.5, 7.5, alpha) == pytest.approx(7.5)

    def test_alpha_one_tracks_last_observation(self):
        assert ewma_update(50, 100, 1.0) == pytest.approx(100.0)

    def test_alpha_bounds(self):
        with pytest.raises(ConfigError):
            ewma_update(1.0, 1.0, 0.0)
        with pytest.raises(ConfigError):
            ewma_update(1.0, 1.0, 1.5)


class TestForecastAvailableKeys:
    def test_substitution(self):
        assert forecast_available_keys(1000, 200, 300) == pytest.approx(900)

    def test_zero(self):
        assert forecast_available_keys(0, 0, 0) == 0

    def test_negative_forecast_clamped_downstream(self):
        k_hat = forecast_available_keys(100, 0, 500)
        assert k_hat == pytest.approx(-400)
        rates = compute_token_rates(k_hat, {DISP: 5.0}, {DISP: 512}, {DISP: 1.0}, 0.85)
        assert rates[DISP] == 0.0


class TestComputeTokenRates:
    def test_single_class_collapses(self):
        rates = compute_token_rates(1000, {MEAS: 5.0}, {MEAS: 10}, {MEAS: 1.0}, 0.85)
        assert rates[MEAS] == pytest.approx(85.0)

    def test_two_identical_classes_split_evenly(self):
        demand = {MKT: 3.0, LOG: 3.0}
        costs = {MKT: 10, LOG: 10}
        weights = {MKT: 1.0, LOG: 1.0}
        rates = compute_token_rates(1000, demand, costs, weights, 0.85)
        assert rates[MKT] == pytest.approx(rates[LOG]) == pytest.approx(42.5)

    def test_all_zero_demand(self):
        rates = compute_token_rates(1000, {MKT: 0.0, LOG: 0.0}, {MKT: 10, LOG: 20},
                                    {MKT: 1.0, LOG: 1.0}, 0.85)
        assert rates == {MKT: 0.0, LOG: 0.0}

    @given(k_hat=st.floats(-1e5, 1e7), rho=st.floats(0.01, 0.99),
           demands=st.lists(st.floats(0, 1e4), min_size=5, max_size=5))
    @settings(max_examples=100, deadline=None)
    def test_budget_respected(self, k_hat, rho, demands):
        demand = dict(zip(CLASS_ORDER, demands))
        costs = {c: 100 * (i + 1) for i, c in enumerate(CLASS_ORDER)}
        weights = {c: float(i + 1) for i, c in enumerate(CLASS_ORDER)}
        rates = compute_token_rates(k_hat, demand, costs, weights, rho)
        implied = sum(costs[c] * rates[c] for c in CLASS_ORDER)
        assert implied <= rho * max(0.0, k_hat) + 1e-6
        assert all(q >= 0 for q in rates.values())


class TestTokenBucket:
    def test_refill(self):
        b = TokenBucket(level=3, cap=10)
        refill_bucket(b, 4)
        assert b.level == 7

    def test_saturation(self):
        b = TokenBucket(level=10, cap=10)
        refill_bucket(b, 5)
        assert b.level == 10

    def test_zero(self):
        b = TokenBucket(level=0, cap=10)
        refill_bucket(b, 0)
        assert b.level == 0

    @given(level=st.floats(0, 50), q=st.floats(0, 100))
    @settings(max_examples=50, deadline=None)
    def test_bounds_invariant(self, level, q):
        cap = 50.0
        b = TokenBucket(level=min(level, cap), cap=cap)
        refill_bucket(b, q)
        assert 0 <= b.level <= cap


class TestResizeReserve:
    def test_clipped_above(self):
        assert resize_reserve(4000, 1000, 0.1, 100, 400) == 400

    def test_inside_band(self):
        assert resize_reserve(1500, 500, 0.1, 100, 400) == 200

    def test_disabled(self):
        assert resize_reserve(10_000, 500, 0.0, 0, 400) == 0

    def test_bad_band(self):
        with pytest.raises(ConfigError):
            resize_reserve(100, 0, 0.1, 500, 400)


def make_deg(h_up=1000, h_down=500, h_drop=250, m_low=None, m_high=None):
    return DegradationState(h_up=h_up, h_down=h_down, h_drop=h_drop, m_max=8,
                            gamma_up=2.0, gamma_down=2.0,
                            m_low=m_low if m_low is not None else -1,
                            m_high=m_high if m_high is not None else -1)


class TestUpdateMode:
    def test_hold_inside_band(self):
        deg = make_deg()
        deg.mode[MEAS] = MODE_AES
        flipped = update_mode(700, deg)
        assert flipped == []
        assert deg.mode[MEAS] == MODE_AES

    def test_low_crossing_degrades_non_critical(self):
        deg = make_deg()
        update_mode(500, deg)
        assert deg.mode[MEAS] == MODE_AES
        assert deg.mode[MKT] == MODE_AES

    def test_critical_exemption(self):
        deg = make_deg()
        update_mode(0, deg)
        assert deg.mode[PROT] == MODE_OTP
        assert deg.mode[DISP] == MODE_OTP

    def test_high_crossing_restores(self):
        deg = make_deg()
        update_mode(100, deg)
        update_mode(1000, deg)
        assert all(deg.mode[c] == MODE_OTP for c in CLASS_ORDER)

    @given(path=st.lists(st.integers(0, 1500), min_size=1, max_size=60))
    @settings(max_examples=100, deadline=None)
    def test_no_flip_strictly_inside_band(self, path):
        deg = make_deg()
        for k_tilde in path:
            before = dict(deg.mode)
            flipped = update_mode(k_tilde, deg)
            if deg.h_down < k_tilde < deg.h_up:
                assert flipped == [] and deg.mode == before


class TestUpdateDownsampling:
    def test_escalation(self):
        # thresholds aligned with the mode band for the canonical example
        deg = make_deg(m_low=500, m_high=1000)
        update_downsampling(500, deg)
        assert deg.m[MEAS] == 2
        assert deg.m[PROT] == 1  # critical classes never down-sample

    def test_relaxation(self):
        deg = make_deg(m_low=500, m_high=1000)
        deg.m[MEAS] = 8
        update_downsampling(1000, deg)
        assert deg.m[MEAS] == 4

    def test_hold(self):
        deg = make_deg(m_low=500, m_high=1000)
        deg.m[MEAS] = 4
        update_downsampling(700, deg)
        assert deg.m[MEAS] == 4

    def test_saturates_at_m_max(self):
        deg = make_deg(m_low=500, m_high=1000)
        for _ in range(10):
            update_downsampling(0, deg)
        assert deg.m[MEAS] == 8


class TestVirtualQueue:
    def test_served_enough(self):
        assert update_virtual_queue(0, 10, 10, 0.5) == 0

    def test_idle(self):
        assert update_virtual_queue(0, 0, 0, 0.7) == 0

    def test_accumulates_shortfall(self):
        assert update_virtual_queue(3, 4, 0, 1.0) == pytest.approx(7.0)


class TestLyapunov:
    def test_zero(self):
        assert lyapunov_value([0, 0], [0.0, 0.0]) == 0

    def test_hand_value(self):
        assert lyapunov_value([3, 4], [0.0, 0.0]) == pytest.approx(12.5)

    def test_unit(self):
        assert lyapunov_value([1], []) == pytest.approx(0.5)


class TestArbitrationGate:
    def test_single_prot_packet_served(self):
        specs = make_specs()
        queues = make_queues({PROT: [(1, 9, True)]})
        pool = KeyPool(k=10_000, r_emg=0, r_min=0, r_max=0, beta=0.0)
        buckets = full_buckets(specs)
        res = arbitrate_slot(10, queues, pool, buckets, {c: specs[c].k_otp for c in CLASS_ORDER},
                             specs, Method(MethodKind.KEY_AWARE_FULL))
        assert len(res.served[PROT]) == 1
        assert pool.k == 10_000 - 256

    def test_no_tokens_no_service(self):
        specs = make_specs()
        queues = make_queues({DISP: [(1, 9, False)], MEAS: [(2, 9, False)]})
        pool = KeyPool(k=10_000, r_emg=0, r_min=0, r_max=0, beta=0.0)
        buckets = full_buckets(specs, level=0.0)
        res = arbitrate_slot(10, queues, pool, buckets,
                             {c: specs[c].k_otp for c in CLASS_ORDER}, specs,
                             Method(MethodKind.KEY_AWARE_FULL))
        assert all(len(v) == 0 for v in res.served.values())

    def test_reserve_untouchable_by_regular_service(self):
        specs = make_specs()
        queues = make_queues({MKT: [(1, 9, False)], LOG: [(2, 9, False)]})
        # whole pool earmarked: regular remainder is zero
        pool = KeyPool(k=5000, r_emg=5000, r_min=0, r_max=5000, beta=0.1)
        buckets = full_buckets(specs)
        res = arbitrate_slot(10, queues, pool, buckets,
                             {c: specs[c].k_otp for c in CLASS_ORDER}, specs,
                             Method(MethodKind.KEY_AWARE_FULL))
        assert all(len(v) == 0 for v in res.served.values())
        assert pool.k == 5000


def brute_force_lexicographic(backlogs, tokens, costs, budget):
    """Enumerate feasible service vectors, maximize lexicographically in
    priority order. Independent oracle for the arbitration sweep."""
    classes = list(backlogs)
    ranges = [range(min(backlogs[c], int(tokens[c])) + 1) for c in classes]
    best = None
    for vec in itertools.product(*ranges):
        if sum(costs[c] * s for c, s in zip(classes, vec)) > budget:
            continue
        if best is None or vec > best:
            best = vec
    return dict(zip(classes, best))


class TestOracleEquivalence:
    def test_randomized_small_instances(self):
        import random

        rng = random.Random(12345)
        specs = make_specs()
        method = Method(MethodKind.KEY_AWARE_FULL)
        for trial in range(60):
            n_classes = rng.randint(1, 3)
            classes = list(CLASS_ORDER[:n_classes])
            backlogs = {c: rng.randint(0, 4) for c in classes}
            tokens = {c: float(rng.randint(0, 4)) for c in classes}
            costs = {c: rng.randint(1, 20) * 100 for c in CLASS_ORDER}
            budget = rng.randint(0, 60) * 100
            queues = make_queues(
                {c: [(i, 9, False) for i in range(backlogs[c])] for c in classes})
            pool = KeyPool(k=budget, r_emg=0, r_min=0, r_max=0, beta=0.0)
            buckets = {c: TokenBucket(level=tokens.get(c, 0.0),
                                      cap=max(4.0, tokens.get(c, 0.0)))
                       for c in CLASS_ORDER}
            res = arbitrate_slot(10, queues, pool, buckets, costs, specs, method)
            got = {c: len(res.served[c]) for c in classes}
            expected = brute_force_lexicographic(backlogs, tokens, costs, budget)
            assert got == expected, f"trial {trial}: {got} != {expected}"


class TestPreemption:
    def test_exact_depletion(self):
        specs = make_specs()
        queues = make_queues({PROT: [(1, 9, True)]})
        pool = KeyPool(k=10_000, r_emg=256, r_min=0, r_max=256, beta=0.1)
        res = preempt_critical(10, queues, pool,
                               {c: specs[c].k_otp for c in CLASS_ORDER}, specs)
        assert len(res.served[PROT]) == 1
        assert pool.r_emg == 0
        assert res.reserve_spend == 256

    def test_deadline_rescue_combines_pools(self):
        # reserve alone cannot fund the head; the rescue drains it and tops
        # up from the regular remainder (token-free)
        specs = make_specs()
        queues = make_queues({DISP: [(1, 1, False)]})  # remaining TTL 1 at slot 10
        pool = KeyPool(k=10_000, r_emg=100, r_min=0, r_max=100, beta=0.1)
        res = preempt_critical(10, queues, pool,
                               {c: specs[c].k_otp for c in CLASS_ORDER}, specs)
        assert len(res.served[DISP]) == 1
        assert res.reserve_spend == 100 and res.fallback_spend == 412
        assert pool.r_emg == 0
        assert pool.k == 10_000 - 512

    def test_rescue_blocked_without_physical_keys(self):
        specs = make_specs()
        queues = make_queues({DISP: [(1, 1, False)]})
        pool = KeyPool(k=300, r_emg=200, r_min=0, r_max=200, beta=0.1)
        res = preempt_critical(10, queues, pool,
                               {c: specs[c].k_otp for c in CLASS_ORDER}, specs)
        assert len(res.served[DISP]) == 0
        assert res.eligible[DISP] == 1

    def test_non_critical_never_preempted(self):
        specs = make_specs()
        queues = make_queues({MKT: [(1, 9, True)]})
        pool = KeyPool(k=10_000, r_emg=5000, r_min=0, r_max=5000, beta=0.1)
        res = preempt_critical(310, queues, pool,
                               {c: specs[c].k_otp for c in CLASS_ORDER}, specs)
        assert MKT not in res.served or len(res.served.get(MKT, [])) == 0
        assert pool.r_emg == 5000

    def test_fresh_non_emergency_head_left_alone(self):
        specs = make_specs()
        queues = make_queues({DISP: [(1, 9, False)]})  # age 1, remaining 9
        pool = KeyPool(k=10_000, r_emg=5000, r_min=0, r_max=5000, beta=0.1)
        res = preempt_critical(10, queues, pool,
                               {c: specs[c].k_otp for c in CLASS_ORDER}, specs)
        assert len(res.served[DISP]) == 0
        assert res.eligible[DISP] == 0


class TestAgeAndDrop:
    def test_expired_counted(self):
        specs = make_specs()
        queues = make_queues({MEAS: [(1, 0, False)]})
        pool = KeyPool(k=10_000, r_emg=0, r_min=0, r_max=0, beta=0.0)
        drops = age_and_drop(51, queues, pool, None,
                             {c: specs[c].k_otp for c in CLASS_ORDER},
                             make_deg(), specs, 10, soft_drop=False,
                             predictive_drop=False)
        assert len(drops.expired[MEAS]) == 1
        assert len(queues[MEAS]) == 0

    def test_no_soft_drop_above_threshold(self):
        specs = make_specs()
        queues = make_queues({LOG: [(i, 9, False) for i in range(100)]})
        pool = KeyPool(k=10_000, r_emg=0, r_min=0, r_max=0, beta=0.0)
        deg = make_deg(h_drop=250)  # regular remainder 10k > h_drop
        drops = age_and_drop(10, queues, pool, None,
                             {c: specs[c].k_otp for c in CLASS_ORDER}, deg, specs,
                             10, soft_drop=True, predictive_drop=False)
        assert drops.soft[LOG] == 0
        assert len(queues[LOG]) == 100

    def test_soft_drop_beyond_cap(self):
        specs = make_specs()
        queues = make_queues({LOG: [(i, 9, False) for i in range(100)]})
        pool = KeyPool(k=100, r_emg=0, r_min=0, r_max=0, beta=0.0)
        deg = make_deg(h_drop=250)
        drops = age_and_drop(10, queues, pool, None,
                             {c: specs[c].k_otp for c in CLASS_ORDER}, deg, specs,
                             10, soft_drop=True, predictive_drop=False)
        assert drops.soft[LOG] == 40  # q_max 60
        assert len(queues[LOG]) == 60

    def test_predictive_drop_excess(self):
        # five head packets that cannot be reached before expiry, zero
        # serviceability: the heuristic drops all five
        specs = make_specs()
        slot = 100
        tau = specs[MEAS].tau
        msgs = [(i, slot - tau + i + 1, False) for i in range(5)]  # remaining = pos
        queues = make_queues({MEAS: msgs})
        pool = KeyPool(k=0, r_emg=0, r_min=0, r_max=0, beta=0.0)
        buckets = full_buckets(specs, level=0.0)  # Phi = 0
        drops = age_and_drop(slot, queues, pool, buckets,
                             {c: specs[c].k_otp for c in CLASS_ORDER}, make_deg(),
                             specs, 10, soft_drop=False, predictive_drop=True)
        assert len(drops.predictive[MEAS]) == 5
        assert len(queues[MEAS]) == 0

    def test_predictive_drop_respects_serviceability(self):
        specs = make_specs()
        slot = 100
        tau = specs[MEAS].tau
        msgs = [(i, slot - tau + i + 1, False) for i in range(5)]
        queues = make_queues({MEAS: msgs})
        pool = KeyPool(k=10**6, r_emg=0, r_min=0, r_max=0, beta=0.0)
        buckets = full_buckets(specs)  # Phi = 1 -> capacity H = 10 >= doomed
        drops = age_and_drop(slot, queues, pool, buckets,
                             {c: specs[c].k_otp for c in CLASS_ORDER}, make_deg(),
                             specs, 10, soft_drop=False, predictive_drop=True)
        assert len(drops.predictive[MEAS]) == 0


def build_ledger(rows):
    """rows: list of dicts with g, k_start, r_start, a_emg (per crit class),
    e (per crit class)."""
    ledger = SlotLedger()
    for row in rows:
        ledger.regime.append("normal")
        ledger.g.append(row.get("g", 0))
        ledger.k_start.append(row.get("k_start", 0))
        ledger.k_end.append(0)
        ledger.r_start.append(row.get("r_start", 0))
        ledger.r_end.append(0)
        ledger.ktilde_end.append(0)
        ledger.spend_regular.append(0)
        ledger.spend_reserve.append(0)
        for c in CLASS_ORDER:
            ledger.a_raw[c].append(0)
            ledger.a_adm[c].append(0)
            ledger.a_emg[c].append(row.get("a_emg", {}).get(c, 0))
            ledger.s_reg[c].append(0)
            ledger.s_pre[c].append(0)
            ledger.e[c].append(row.get("e", {}).get(c, 0))
            ledger.d_down[c].append(0)
            ledger.d_soft[c].append(0)
            ledger.d_pred[c].append(0)
            ledger.q_end[c].append(0)
            ledger.tb[c].append(0.0)
            ledger.u[c].append(0.0)
            ledger.mode[c].append(0)
            ledger.m[c].append(1)
    return ledger


class TestWindowedSufficiency:
    def test_empty_demand_is_sufficient(self):
        specs = make_specs()
        ledger = build_ledger([{"g": 100, "k_start": 50, "r_start": 10}] * 4)
        ok, k_crit, r_crit = check_windowed_sufficiency(ledger, 0, 4, specs)
        assert ok and k_crit == 0
        assert r_crit == 10 + 4 * (100 + 40)

    def test_hand_built_insufficient_window(self):
        specs = make_specs()
        rows = [
            {"g": 100, "k_start": 300, "r_start": 300,
             "a_emg": {PROT: 2}},              # demand 512
            {"g": 50, "k_start": 100, "r_start": 100,
             "a_emg": {DISP: 1}},              # demand 512
        ]
        ledger = build_ledger(rows)
        ok, k_crit, r_crit = check_windowed_sufficiency(ledger, 0, 2, specs)
        # demand 2*256 + 512 = 1024; supply 300 + (100+0) + (50+0) = 450
        assert k_crit == 1024 and r_crit == 450
        assert not ok

    def test_sweep_matches_scalar_checker(self):
        import random

        from keysched.metrics import windowed_sufficiency_sweep

        rng = random.Random(7)
        specs = make_specs()
        rows = []
        for _ in range(50):
            rows.append({
                "g": rng.randint(0, 500), "k_start": rng.randint(0, 2000),
                "r_start": rng.randint(0, 400),
                "a_emg": {PROT: rng.randint(0, 2), DISP: rng.randint(0, 2)},
                "e": {PROT: rng.randint(0, 1), DISP: rng.randint(0, 1)},
            })
        ledger = build_ledger(rows)
        h = 1  # min critical tau for the default specs
        sweep = windowed_sufficiency_sweep(ledger, specs, h)
        flagged = bad = 0
        for t in range(50 - h + 1):
            ok, _, _ = check_windowed_sufficiency(ledger, t, h, specs)
            e_crit = sum(ledger.e[c][t + u] for c in (PROT, DISP) for u in range(h))
            if ok:
                flagged += 1
                if e_crit > 0:
                    bad += 1
        assert sweep["flagged"] == flagged
        assert sweep["flagged_with_critical_timeout"] == bad

    def test_incomplete_slice_rejected(self):
        specs = make_specs()
        ledger = build_ledger([{"g": 0}] * 3)
        with pytest.raises(ConfigError):
            check_windowed_sufficiency(ledger, 2, 5, specs)


class TestMethodFlags:
    def test_ablations_need_full_method(self):
        with pytest.raises(ConfigError):
            Method(MethodKind.FIFO, no_reserve=True)

    def test_flag_accessors(self):
        m = Method(MethodKind.KEY_AWARE_FULL, no_reserve=True)
        assert not m.uses_reserve and m.uses_degradation and m.uses_buckets
        assert not Method(MethodKind.FIFO).uses_buckets
        assert Method(MethodKind.STATIC_QUOTA_PRIORITY).uses_buckets
